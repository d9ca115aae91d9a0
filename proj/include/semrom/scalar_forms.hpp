#pragma once

#include <string>

#include <Eigen/Sparse>

#include "semrom/discretization.hpp"

namespace semrom {

/// Scalar bilinear forms on the velocity space, assembled at the global level.
enum class ScalarForm {
  mass,          ///< (u, v)
  stiffness_x,   ///< (du/dx, dv/dx)
  stiffness_y,   ///< (du/dy, dv/dy)
  convection_x,  ///< (du/dx, v)
  convection_y,  ///< (du/dy, v)
};

ScalarForm scalar_form_from_string(const std::string& name);

Eigen::SparseMatrix<double> assemble_scalar(const Discretization& disc, ScalarForm form);

}  // namespace semrom
