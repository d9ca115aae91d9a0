#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semrom {

/// Values an expression may refer to: parameter components `mu0`, `mu1`, ...
/// (`nu` is an alias of `mu0`) and the coordinates `x`, `y`, `t`.
struct ExpressionScope {
  std::span<const double> mu;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
};

/// Arithmetic expression: numbers, + - * / ^, parentheses, unary minus, the
/// constant `pi` and the functions sin cos tan exp log sqrt abs tanh.
class Expression {
 public:
  /// Throws ParseError carrying the offending character offset.
  static Expression parse(std::string_view text);

  double evaluate(const ExpressionScope& scope) const;
  double operator()(std::span<const double> mu) const { return evaluate({mu}); }

  const std::string& text() const { return text_; }
  /// Largest referenced mu index + 1.
  int parameter_count() const { return parameter_count_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const std::vector<Node>> nodes_;
  int root_ = -1;
  int parameter_count_ = 0;
};

}  // namespace semrom
