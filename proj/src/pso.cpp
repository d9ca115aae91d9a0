#include "semrom/pso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "semrom/error.hpp"

namespace semrom {

namespace {

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void evaluate_all(const PsoObjective& f, const std::vector<std::vector<double>>& x,
                  std::vector<double>& values, int threads) {
  const int n = static_cast<int>(x.size());
  auto run = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const double v = f(x[i]);
      values[i] = std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    }
  };
  threads = std::clamp(threads, 1, n);
  if (threads == 1) {
    run(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int b = t * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(run, b, e);
  }
  for (auto& th : pool) th.join();
}

}  // namespace

PsoResult pso_minimize(const PsoOptions& o, const PsoObjective& objective) {
  const std::size_t dim = o.lower.size();
  if (dim == 0 || o.upper.size() != dim) {
    throw InvalidArgument("pso: bounds must be non-empty and of equal length");
  }
  for (std::size_t d = 0; d < dim; ++d) {
    if (!std::isfinite(o.lower[d]) || !std::isfinite(o.upper[d]) || o.lower[d] > o.upper[d]) {
      throw InvalidArgument("pso: bound " + std::to_string(d) + " is not a finite interval");
    }
  }
  if (o.swarm < 2) throw InvalidArgument("pso: swarm size must be at least 2");
  if (o.iterations < 0) throw InvalidArgument("pso: iteration budget must be non-negative");

  std::mt19937_64 rng(o.seed);
  const int n = o.swarm;
  std::vector<std::vector<double>> x(n, std::vector<double>(dim)), v = x;
  for (int i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double range = o.upper[d] - o.lower[d];
      x[i][d] = o.lower[d] + range * unit(rng);
      v[i][d] = range * (2.0 * unit(rng) - 1.0);
    }
  }

  PsoResult r;
  std::vector<double> values(n);
  evaluate_all(objective, x, values, o.threads);
  r.evaluations += n;
  auto pbest = x;
  auto pbest_value = values;
  int g = 0;
  for (int i = 1; i < n; ++i) {
    if (values[i] < values[g]) g = i;
  }
  r.best = x[g];
  r.best_value = values[g];
  r.trace.push_back(r.best_value);

  for (int it = 0; it < o.iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double range = o.upper[d] - o.lower[d];
        const double r1 = unit(rng), r2 = unit(rng);
        double vel = o.inertia * v[i][d] + o.cognitive * r1 * (pbest[i][d] - x[i][d]) +
                     o.social * r2 * (r.best[d] - x[i][d]);
        vel = std::clamp(vel, -range, range);
        double pos = x[i][d] + vel;
        if (pos < o.lower[d] || pos > o.upper[d]) {
          pos = std::clamp(pos, o.lower[d], o.upper[d]);
          vel = 0.0;
        }
        x[i][d] = pos;
        v[i][d] = vel;
      }
    }
    evaluate_all(objective, x, values, o.threads);
    r.evaluations += n;
    for (int i = 0; i < n; ++i) {
      if (values[i] < pbest_value[i]) {
        pbest_value[i] = values[i];
        pbest[i] = x[i];
      }
      if (values[i] < r.best_value) {
        r.best_value = values[i];
        r.best = x[i];
      }
    }
    r.trace.push_back(r.best_value);
  }
  return r;
}

}  // namespace semrom
