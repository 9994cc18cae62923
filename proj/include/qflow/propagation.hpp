#pragma once

#include "qflow/linalg.hpp"
#include "qflow/model.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qflow {

/// Per-interval propagators with forward and backward cumulative products.
/// prefix[l] = U(t_l, 0), suffix[l] = U(T, t_l).
struct PropagationCache {
  std::vector<ComplexMatrix> step_props;
  std::vector<ComplexMatrix> prefix;
  std::vector<ComplexMatrix> suffix;

  std::size_t n_intervals() const { return step_props.size(); }
  const ComplexMatrix& total() const { return prefix.back(); }
};

inline PropagationCache propagate(const ControlProblem& problem, const ControlField& field) {
  require_shape(problem, field, "propagate");
  if (!field.all_finite()) throw std::invalid_argument("propagate: non-finite control value");

  const std::size_t n_int = problem.n_intervals();
  const double dt = problem.dt();
  const auto n = static_cast<Eigen::Index>(problem.n_levels());

  PropagationCache cache;
  cache.step_props.reserve(n_int);
  for (std::size_t l = 0; l < n_int; ++l) {
    cache.step_props.push_back(expm_propagator(interval_hamiltonian(problem, field, l), dt));
  }

  cache.prefix.resize(n_int + 1);
  cache.prefix[0] = identity(n);
  for (std::size_t l = 1; l <= n_int; ++l) {
    cache.prefix[l].noalias() = cache.step_props[l - 1] * cache.prefix[l - 1];
  }

  cache.suffix.resize(n_int + 1);
  cache.suffix[n_int] = identity(n);
  for (std::size_t l = n_int; l >= 1; --l) {
    cache.suffix[l - 1].noalias() = cache.suffix[l] * cache.step_props[l - 1];
  }
  return cache;
}

/// J = 1/2 - Re Tr(U_D^* U) / (2N), clamped at zero.
inline double objective_for(const ComplexMatrix& target, const ComplexMatrix& total) {
  const double n = static_cast<double>(target.rows());
  const auto [re, im] = re_trace_product(target.adjoint(), total);
  (void)im;
  return std::max(0.0, 0.5 - re / (2.0 * n));
}

inline double objective(const ControlProblem& problem, const PropagationCache& cache) {
  if (cache.n_intervals() != problem.n_intervals()) {
    throw std::invalid_argument("objective: cache does not match problem");
  }
  return objective_for(problem.target(), cache.total());
}

inline double objective(const ControlProblem& problem, const ControlField& field) {
  return objective(problem, propagate(problem, field));
}

}  // namespace qflow
