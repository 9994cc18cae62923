#pragma once

#include "qflow/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qflow {

/**
 * @brief Bilinear control problem H(t) = H_0 + sum_k eps_k(t) H_k on a uniform
 * grid of n_intervals subintervals of [0, horizon], with target gate U_D.
 *
 * Controls and intervals are 0-based in storage; reports use 1-based labels.
 */
class ControlProblem {
 public:
  ControlProblem(ComplexMatrix drift, std::vector<ComplexMatrix> controls, ComplexMatrix target,
                 double horizon, std::size_t n_intervals)
      : drift_(std::move(drift)),
        controls_(std::move(controls)),
        target_(std::move(target)),
        horizon_(horizon),
        n_intervals_(n_intervals) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
      throw std::invalid_argument("ControlProblem: horizon must be positive and finite");
    }
    if (n_intervals_ < 1) throw std::invalid_argument("ControlProblem: n_intervals must be >= 1");
    if (controls_.empty()) throw std::invalid_argument("ControlProblem: at least one control");
    detail::require_square(drift_, "ControlProblem drift");
    const auto n = drift_.rows();
    if (!is_hermitian(drift_)) throw std::invalid_argument("ControlProblem: drift not Hermitian");
    for (const auto& hk : controls_) {
      if (hk.rows() != n || hk.cols() != n) {
        throw std::invalid_argument("ControlProblem: control Hamiltonian dimension mismatch");
      }
      if (!is_hermitian(hk)) throw std::invalid_argument("ControlProblem: control not Hermitian");
    }
    if (target_.rows() != n || target_.cols() != n) {
      throw std::invalid_argument("ControlProblem: target dimension mismatch");
    }
    if (!is_unitary(target_)) throw std::invalid_argument("ControlProblem: target not unitary");
  }

  std::size_t n_levels() const { return static_cast<std::size_t>(drift_.rows()); }
  std::size_t n_controls() const { return controls_.size(); }
  std::size_t n_intervals() const { return n_intervals_; }
  double horizon() const { return horizon_; }
  double dt() const { return horizon_ / static_cast<double>(n_intervals_); }
  double time_at(std::size_t l) const { return static_cast<double>(l) * dt(); }

  const ComplexMatrix& drift() const { return drift_; }
  const std::vector<ComplexMatrix>& controls() const { return controls_; }
  const ComplexMatrix& control(std::size_t k) const { return controls_.at(k); }
  const ComplexMatrix& target() const { return target_; }

  /// Same Hamiltonians and target on a different time grid.
  ControlProblem with_grid(double horizon, std::size_t n_intervals) const {
    return ControlProblem(drift_, controls_, target_, horizon, n_intervals);
  }

 private:
  ComplexMatrix drift_;
  std::vector<ComplexMatrix> controls_;
  ComplexMatrix target_;
  double horizon_;
  std::size_t n_intervals_;
};

/// L x M piecewise-constant amplitudes, stored l-major, k-minor.
class ControlField {
 public:
  ControlField(std::size_t n_intervals, std::size_t n_controls, double fill = 0.0)
      : n_intervals_(n_intervals), n_controls_(n_controls), values_(n_intervals * n_controls, fill) {}

  ControlField(std::size_t n_intervals, std::size_t n_controls, std::vector<double> flat)
      : n_intervals_(n_intervals), n_controls_(n_controls), values_(std::move(flat)) {
    if (values_.size() != n_intervals_ * n_controls_) {
      throw std::invalid_argument("ControlField: flat size does not match shape");
    }
  }

  std::size_t n_intervals() const { return n_intervals_; }
  std::size_t n_controls() const { return n_controls_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t l, std::size_t k) { return values_[l * n_controls_ + k]; }
  double operator()(std::size_t l, std::size_t k) const { return values_[l * n_controls_ + k]; }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool matches(const ControlProblem& problem) const {
    return n_intervals_ == problem.n_intervals() && n_controls_ == problem.n_controls();
  }

  friend bool operator==(const ControlField&, const ControlField&) = default;

 private:
  std::size_t n_intervals_;
  std::size_t n_controls_;
  std::vector<double> values_;
};

/// The derivative dε/ds has the same shape and layout as the field.
using DirectionField = ControlField;

inline void require_shape(const ControlProblem& problem, const ControlField& field,
                          const char* what) {
  if (!field.matches(problem)) {
    throw std::invalid_argument(std::string(what) + ": field shape " +
                                std::to_string(field.n_intervals()) + "x" +
                                std::to_string(field.n_controls()) + " does not match problem " +
                                std::to_string(problem.n_intervals()) + "x" +
                                std::to_string(problem.n_controls()));
  }
}

inline ControlField zero_field(const ControlProblem& problem) {
  return ControlField(problem.n_intervals(), problem.n_controls());
}

/// Entries i.i.d. uniform in [lo, hi].
template <class Rng>
ControlField random_field(const ControlProblem& problem, Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  ControlField field = zero_field(problem);
  for (double& v : field.flat()) v = dist(rng);
  return field;
}

/// ||a - b||_2 / ||b||_2 over all entries.
inline double relative_l2(const ControlField& a, const ControlField& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_l2: shape mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.flat()[i] - b.flat()[i];
    num += d * d;
    den += b.flat()[i] * b.flat()[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double l2_norm(const ControlField& a) {
  double acc = 0.0;
  for (double v : a.flat()) acc += v * v;
  return std::sqrt(acc);
}

/// H_0 + sum_k field(l, k) H_k
inline ComplexMatrix interval_hamiltonian(const ControlProblem& problem, const ControlField& field,
                                          std::size_t l) {
  ComplexMatrix h = problem.drift();
  for (std::size_t k = 0; k < problem.n_controls(); ++k) {
    h += field(l, k) * problem.control(k);
  }
  return h;
}

/// e^{i pi/4} CNOT.
inline ComplexMatrix cnot_target() {
  ComplexMatrix u = ComplexMatrix::Zero(4, 4);
  u(0, 0) = 1.0;
  u(1, 1) = 1.0;
  u(2, 3) = 1.0;
  u(3, 2) = 1.0;
  return std::polar(1.0, std::numbers::pi / 4.0) * u;
}

struct TwoSpinParams {
  double omega1 = 20.0;
  double omega2 = 30.0;
  double cx = 110.0;
  double cy = 120.0;
  double cz = 130.0;
  friend bool operator==(const TwoSpinParams&, const TwoSpinParams&) = default;
};

/// Two coupled spin-1/2 particles, both driven through S_x, targeting CNOT.
inline ControlProblem build_two_spin_problem(double omega1, double omega2, double cx, double cy,
                                             double cz, double horizon, std::size_t n_intervals) {
  const ComplexMatrix i2 = identity(2);
  const ComplexMatrix sx = pauli_x();
  const ComplexMatrix sy = pauli_y();
  const ComplexMatrix sz = pauli_z();
  ComplexMatrix drift = omega1 * kron(sz, i2) + omega2 * kron(i2, sz) + cx * kron(sx, sx) +
                        cy * kron(sy, sy) + cz * kron(sz, sz);
  std::vector<ComplexMatrix> controls{kron(sx, i2), kron(i2, sx)};
  return ControlProblem(std::move(drift), std::move(controls), cnot_target(), horizon,
                        n_intervals);
}

inline ControlProblem build_two_spin_problem(const TwoSpinParams& p, double horizon,
                                             std::size_t n_intervals) {
  return build_two_spin_problem(p.omega1, p.omega2, p.cx, p.cy, p.cz, horizon, n_intervals);
}

}  // namespace qflow
