// Finite-difference and adjoint-identity harness shared by the gradient
// tests. Runs single-threaded at f64 so baselines are bit-reproducible.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace meshforge {

struct GradReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  size_t worst_index = 0;
  double step = 0;
};

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = f(x);
    x[i] = orig - h;
    double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_difference: non-finite function value");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Compares an analytic gradient against central differences.
inline GradReport gradcheck(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x, const std::vector<double>& analytic,
                            double h, double denom_floor = 1e-8) {
  std::vector<double> numeric = finite_difference(f, x, h);
  GradReport rep;
  rep.step = h;
  for (size_t i = 0; i < x.size(); ++i) {
    double abs_err = std::abs(numeric[i] - analytic[i]);
    double rel = abs_err / std::max(std::max(std::abs(numeric[i]), std::abs(analytic[i])),
                                    denom_floor);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
  }
  return rep;
}

// Checks <A x, y> = <x, At y> over random vectors.
inline GradReport adjoint_identity(
    const std::function<std::vector<double>(const std::vector<double>&)>& forward,
    const std::function<std::vector<double>(const std::vector<double>&)>& adjoint,
    size_t dim_in, size_t dim_out, int trials, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradReport rep;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(dim_in), y(dim_out);
    for (auto& v : x) v = gauss(rng);
    for (auto& v : y) v = gauss(rng);
    std::vector<double> ax = forward(x);
    std::vector<double> aty = adjoint(y);
    if (ax.size() != dim_out || aty.size() != dim_in)
      throw std::runtime_error("adjoint_identity: inconsistent dimensions");
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < dim_out; ++i) lhs += ax[i] * y[i];
    for (size_t i = 0; i < dim_in; ++i) rhs += x[i] * aty[i];
    double abs_err = std::abs(lhs - rhs);
    double rel = abs_err / std::max(std::max(std::abs(lhs), std::abs(rhs)), 1e-12);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = size_t(t);
    }
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
  }
  return rep;
}

}  // namespace meshforge
