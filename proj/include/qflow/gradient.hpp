#pragma once

// Flow directions dε/ds for the commutator-corrected gradient-flow methods,
// plus two exact gradient oracles that share no code with the series.

#include "qflow/linalg.hpp"
#include "qflow/model.hpp"
#include "qflow/propagation.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qflow {

enum class MethodKind { Original, Old, New, ExactFd, ExactAugmented };

/// Gradient formulation plus series truncation. `adaptive` replaces the fixed
/// order by term-size driven truncation (NEW/OLD only).
struct MethodSpec {
  MethodKind kind = MethodKind::New;
  int n_max = 1;
  bool adaptive = false;

  static MethodSpec original() { return {MethodKind::Original, 0, false}; }
  static MethodSpec old(int n) { return {MethodKind::Old, n, false}; }
  static MethodSpec fresh(int n) { return {MethodKind::New, n, false}; }
  static MethodSpec fresh_adaptive() { return {MethodKind::New, kAdaptiveCap, true}; }
  static MethodSpec exact_fd() { return {MethodKind::ExactFd, 0, false}; }
  static MethodSpec exact_augmented() { return {MethodKind::ExactAugmented, 0, false}; }

  static constexpr int kAdaptiveCap = 64;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

inline std::string_view method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Original: return "original";
    case MethodKind::Old: return "old";
    case MethodKind::New: return "new";
    case MethodKind::ExactFd: return "exact-fd";
    case MethodKind::ExactAugmented: return "exact-augmented";
  }
  return "unknown";
}

inline std::optional<MethodKind> parse_method_kind(std::string_view name) {
  for (auto kind : {MethodKind::Original, MethodKind::Old, MethodKind::New, MethodKind::ExactFd,
                    MethodKind::ExactAugmented}) {
    if (name == method_name(kind)) return kind;
  }
  if (name == "ORIGINAL") return MethodKind::Original;
  if (name == "OLD") return MethodKind::Old;
  if (name == "NEW") return MethodKind::New;
  if (name == "EXACT_FD") return MethodKind::ExactFd;
  if (name == "EXACT_AUGMENTED") return MethodKind::ExactAugmented;
  return std::nullopt;
}

/// Sum_{n=0}^{n_max} (i dt)^n / (n+1)! ad_h^n(hk) via C_n = [h, C_{n-1}].
inline ComplexMatrix ad_series(const ComplexMatrix& h, const ComplexMatrix& hk, double dt,
                               int n_max) {
  detail::require_same_square(h, hk, "ad_series");
  if (n_max < 0) throw std::invalid_argument("ad_series: n_max must be >= 0");
  ComplexMatrix sum = hk;
  ComplexMatrix term = hk;
  for (int n = 1; n <= n_max; ++n) {
    // term_n = (i dt / (n+1)) [h, term_{n-1}]
    term = (kI * dt / static_cast<double>(n + 1)) * commutator(h, term);
    sum += term;
  }
  return sum;
}

namespace detail {

// Plain recurrence, stopped once a term drops below rel_tol of the partial sum.
inline ComplexMatrix ad_series_until_small(const ComplexMatrix& h, const ComplexMatrix& hk,
                                           double dt, int cap, double rel_tol) {
  ComplexMatrix sum = hk;
  ComplexMatrix term = hk;
  for (int n = 1; n <= cap; ++n) {
    term = (kI * dt / static_cast<double>(n + 1)) * commutator(h, term);
    sum += term;
    if (term.norm() <= rel_tol * sum.norm()) break;
  }
  return sum;
}

}  // namespace detail

/**
 * Untruncated series, accurate for any dt.
 *
 * Terms of the raw series grow like (dt ||ad_h||)^n / (n+1)! before decaying,
 * which destroys double precision once dt ||ad_h|| exceeds ~10. The sum is the
 * operator function phi(i dt ad_h) with phi(z) = (e^z - 1)/z, and
 * phi(2z) = phi(z) (e^z + 1) / 2, so the series is summed at dt / 2^s and
 * doubled back: S(2d) = (S(d) + V S(d) V^*) / 2 with V = exp(i d h).
 */
inline ComplexMatrix ad_series_adaptive(const ComplexMatrix& h, const ComplexMatrix& hk,
                                        double dt, double rel_tol = 1e-15,
                                        int cap = MethodSpec::kAdaptiveCap) {
  detail::require_same_square(h, hk, "ad_series_adaptive");
  // ||ad_h||_2 <= 2 ||h||_2 <= 2 ||h||_F
  const double ad_bound = 2.0 * h.norm() * dt;
  int doublings = 0;
  if (ad_bound > 0.5) doublings = static_cast<int>(std::ceil(std::log2(ad_bound / 0.5)));
  const double small_dt = std::ldexp(dt, -doublings);
  ComplexMatrix sum = detail::ad_series_until_small(h, hk, small_dt, cap, rel_tol);
  if (doublings == 0) return sum;

  const HermitianEigensystem eig(h);
  ComplexMatrix v = eig.propagator(small_dt).adjoint();
  for (int d = 0; d < doublings; ++d) {
    ComplexMatrix conj = v * sum * v.adjoint();
    sum = 0.5 * (sum + conj);
    if (d + 1 < doublings) v = v * v;
  }
  return sum;
}

namespace detail {

inline void require_cache(const ControlProblem& problem, const ControlField& field,
                          const PropagationCache& cache, const char* what) {
  require_shape(problem, field, what);
  if (cache.n_intervals() != problem.n_intervals() ||
      cache.prefix.size() != problem.n_intervals() + 1 ||
      cache.suffix.size() != problem.n_intervals() + 1) {
    throw std::invalid_argument(std::string(what) + ": cache does not match field");
  }
}

}  // namespace detail

inline DirectionField exact_gradient_augmented(const ControlProblem& problem,
                                               const ControlField& field,
                                               const PropagationCache& cache);
inline DirectionField exact_gradient_fd(const ControlProblem& problem, const ControlField& field,
                                        double h_rel = 1e-4);

/**
 * Flow direction dε/ds.
 *
 * ORIGINAL and OLD:  (1/(2N))  Im Tr(U_D^* U(T,t_l) A_lk U(t_l,0))
 * NEW:               (dt/(2N)) Im Tr(U_D^* U(T,t_l) A_lk U(t_l,0))
 *
 * with A_lk the ad-series of the interval Hamiltonian applied to H_k
 * (A_lk = H_k for ORIGINAL). The exact kinds forward to the oracles.
 */
inline DirectionField direction(const ControlProblem& problem, const ControlField& field,
                                const PropagationCache& cache, const MethodSpec& method) {
  detail::require_cache(problem, field, cache, "direction");
  switch (method.kind) {
    case MethodKind::ExactFd: return exact_gradient_fd(problem, field);
    case MethodKind::ExactAugmented: return exact_gradient_augmented(problem, field, cache);
    default: break;
  }
  if (method.n_max < 0) throw std::invalid_argument("direction: n_max must be >= 0");

  const std::size_t n_int = problem.n_intervals();
  const std::size_t n_ctrl = problem.n_controls();
  const double dt = problem.dt();
  const double n = static_cast<double>(problem.n_levels());
  const double scale = (method.kind == MethodKind::New ? dt : 1.0) / (2.0 * n);
  const ComplexMatrix target_adj = problem.target().adjoint();

  DirectionField out(n_int, n_ctrl);
  ComplexMatrix sandwich;
  for (std::size_t l = 0; l < n_int; ++l) {
    // Tr(U_D^* S A P) = Tr(A (P U_D^* S))
    sandwich.noalias() = cache.prefix[l] * target_adj * cache.suffix[l];
    if (method.kind == MethodKind::Original) {
      for (std::size_t k = 0; k < n_ctrl; ++k) {
        out(l, k) = scale * re_trace_product(problem.control(k), sandwich).second;
      }
      continue;
    }
    const ComplexMatrix h = interval_hamiltonian(problem, field, l);
    for (std::size_t k = 0; k < n_ctrl; ++k) {
      const ComplexMatrix a = method.adaptive
                                  ? ad_series_adaptive(h, problem.control(k), dt)
                                  : ad_series(h, problem.control(k), dt, method.n_max);
      out(l, k) = scale * re_trace_product(a, sandwich).second;
    }
  }
  return out;
}

inline DirectionField direction(const ControlProblem& problem, const ControlField& field,
                                const MethodSpec& method) {
  return direction(problem, field, propagate(problem, field), method);
}

/**
 * -dJ/dε from the block exponential
 *   exp([[X, E], [0, X]]) = [[exp(X), dexp], [0, exp(X)]],
 * X = -i dt H, E = -i dt H_k, whose upper-right block is the exact derivative
 * of the interval propagator.
 */
inline DirectionField exact_gradient_augmented(const ControlProblem& problem,
                                               const ControlField& field,
                                               const PropagationCache& cache) {
  detail::require_cache(problem, field, cache, "exact_gradient_augmented");
  using ColMajor = Eigen::MatrixXcd;
  const std::size_t n_int = problem.n_intervals();
  const std::size_t n_ctrl = problem.n_controls();
  const auto n = static_cast<Eigen::Index>(problem.n_levels());
  const double dt = problem.dt();
  const ComplexMatrix target_adj = problem.target().adjoint();

  DirectionField out(n_int, n_ctrl);
  ColMajor block = ColMajor::Zero(2 * n, 2 * n);
  for (std::size_t l = 0; l < n_int; ++l) {
    const ComplexMatrix x = (-kI * dt) * interval_hamiltonian(problem, field, l);
    // U = S_{l+1} U_l P_l, so dJ = -Re Tr(U_D^* S_{l+1} dU_l P_l) / (2N)
    const ComplexMatrix around = cache.prefix[l] * target_adj * cache.suffix[l + 1];
    for (std::size_t k = 0; k < n_ctrl; ++k) {
      block.topLeftCorner(n, n) = x;
      block.bottomRightCorner(n, n) = x;
      block.topRightCorner(n, n) = (-kI * dt) * problem.control(k);
      const ColMajor expo = block.exp();
      const ComplexMatrix d_step = expo.topRightCorner(n, n);
      const double re_tr = re_trace_product(d_step, around).first;
      out(l, k) = re_tr / (2.0 * static_cast<double>(n));
    }
  }
  return out;
}

namespace detail {

inline double objective_direct(const ControlProblem& problem, const ControlField& field) {
  const double dt = problem.dt();
  ComplexMatrix u = identity(static_cast<Eigen::Index>(problem.n_levels()));
  for (std::size_t l = 0; l < problem.n_intervals(); ++l) {
    u = expm_propagator(interval_hamiltonian(problem, field, l), dt) * u;
  }
  return 0.5 - re_trace_product(problem.target().adjoint(), u).first /
                   (2.0 * static_cast<double>(problem.n_levels()));
}

}  // namespace detail

/// Central differences of J with step h_rel * max(1, |ε|); returns -dJ/dε.
inline DirectionField exact_gradient_fd(const ControlProblem& problem, const ControlField& field,
                                        double h_rel) {
  require_shape(problem, field, "exact_gradient_fd");
  if (!(h_rel > 0.0)) throw std::invalid_argument("exact_gradient_fd: h_rel must be > 0");
  DirectionField out(problem.n_intervals(), problem.n_controls());
  ControlField probe = field;
  for (std::size_t l = 0; l < problem.n_intervals(); ++l) {
    for (std::size_t k = 0; k < problem.n_controls(); ++k) {
      const double base = field(l, k);
      const double h = h_rel * std::max(1.0, std::abs(base));
      probe(l, k) = base + h;
      const double j_plus = detail::objective_direct(problem, probe);
      probe(l, k) = base - h;
      const double j_minus = detail::objective_direct(problem, probe);
      probe(l, k) = base;
      out(l, k) = -(j_plus - j_minus) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace qflow
