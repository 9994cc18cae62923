#pragma once

// Desk-scale invariant and oracle checks behind `qflow check`.

#include "qflow/flow_solver.hpp"
#include "qflow/gradient.hpp"
#include "qflow/model.hpp"
#include "qflow/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace detail

inline CheckResult check_objective_identities() {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 10.0, 1);
  const ComplexMatrix& ud = p.target();
  const double e0 = std::abs(objective_for(ud, ud) - 0.0);
  const double e1 = std::abs(objective_for(ud, -ud) - 1.0);
  const double e2 = std::abs(objective_for(ud, kI * ud) - 0.5);
  const double worst = std::max({e0, e1, e2});
  return {"objective identities", worst <= 1e-12, "max deviation " + detail::sci(worst)};
}

inline CheckResult check_structural_identities(std::uint64_t seed, std::size_t n_intervals) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 10.0, n_intervals);
  std::mt19937_64 rng(seed);
  const ControlField f = random_field(p, rng);
  const PropagationCache c = propagate(p, f);
  const double dt = p.dt();
  const DirectionField orig = direction(p, f, c, MethodSpec::original());
  const DirectionField new0 = direction(p, f, c, MethodSpec::fresh(0));
  const DirectionField old2 = direction(p, f, c, MethodSpec::old(2));
  const DirectionField new2 = direction(p, f, c, MethodSpec::fresh(2));
  double scale_err = 0.0;
  double ratio_err = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    scale_err = std::max(scale_err, std::abs(new0.flat()[i] - dt * orig.flat()[i]) /
                                        std::max(1e-300, std::abs(dt * orig.flat()[i])));
    ratio_err = std::max(ratio_err, std::abs(old2.flat()[i] - new2.flat()[i] / dt) /
                                        std::max(1e-300, std::abs(old2.flat()[i])));
  }
  double consistency = 0.0;
  double unitarity = 0.0;
  const ComplexMatrix& total = c.total();
  for (std::size_t l = 0; l <= p.n_intervals(); ++l) {
    consistency = std::max(consistency, detail::max_abs_diff(c.suffix[l] * c.prefix[l], total));
  }
  const auto n = static_cast<Eigen::Index>(p.n_levels());
  auto defect = [&](const ComplexMatrix& u) {
    return (u.adjoint() * u - identity(n)).norm() / std::sqrt(static_cast<double>(n));
  };
  for (const auto& u : c.step_props) unitarity = std::max(unitarity, defect(u));
  for (const auto& u : c.prefix) unitarity = std::max(unitarity, defect(u));
  for (const auto& u : c.suffix) unitarity = std::max(unitarity, defect(u));
  const bool ok = scale_err <= 1e-12 && ratio_err <= 1e-12 && consistency <= 1e-9 &&
                  unitarity <= 1e-9;
  return {"structural identities", ok,
          "NEW0/ORIGINAL " + detail::sci(scale_err) + ", OLD/NEW " + detail::sci(ratio_err) +
              ", suffix*prefix " + detail::sci(consistency) + ", unitarity " +
              detail::sci(unitarity)};
}

inline CheckResult check_gradient_oracles(std::uint64_t seed, std::size_t n_fields,
                                          double horizon, std::size_t n_intervals) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, horizon, n_intervals);
  std::mt19937_64 rng(seed);
  double worst_fd = 0.0;
  double worst_aug = 0.0;
  for (std::size_t i = 0; i < n_fields; ++i) {
    const ControlField f = random_field(p, rng);
    const PropagationCache c = propagate(p, f);
    const DirectionField series = direction(p, f, c, MethodSpec::fresh_adaptive());
    worst_aug = std::max(worst_aug, relative_l2(series, exact_gradient_augmented(p, f, c)));
    worst_fd = std::max(worst_fd, relative_l2(series, exact_gradient_fd(p, f)));
  }
  return {"NEW(adaptive) vs oracles", worst_fd <= 1e-6 && worst_aug <= 1e-10,
          "vs FD " + detail::sci(worst_fd) + " (<= 1e-6), vs augmented " + detail::sci(worst_aug) +
              " (<= 1e-10)"};
}

/// Relative error of NEW(n_max) against the augmented oracle for n_max = 0..max_order.
inline std::vector<double> series_error_curve(const ControlProblem& p, const ControlField& f,
                                              int max_order) {
  const PropagationCache c = propagate(p, f);
  const DirectionField exact = exact_gradient_augmented(p, f, c);
  std::vector<double> curve;
  for (int n = 0; n <= max_order; ++n) {
    curve.push_back(relative_l2(direction(p, f, c, MethodSpec::fresh(n)), exact));
  }
  return curve;
}

inline double max_scaled_hamiltonian_norm(const ControlProblem& p, const ControlField& f) {
  double worst = 0.0;
  for (std::size_t l = 0; l < p.n_intervals(); ++l) {
    worst = std::max(worst, spectral_norm(p.dt() * interval_hamiltonian(p, f, l)));
  }
  return worst;
}

struct SeriesConvergence {
  double onset = 0.0;          // max_l ||dt H_l||_2
  bool monotone = false;       // nonincreasing for n_max >= onset
  double error_at_30 = 0.0;
  std::vector<double> curve;   // n_max = 0..40
};

inline SeriesConvergence series_convergence(const ControlProblem& p, const ControlField& f) {
  SeriesConvergence out;
  out.curve = series_error_curve(p, f, 40);
  out.onset = max_scaled_hamiltonian_norm(p, f);
  out.monotone = true;
  for (int n = static_cast<int>(std::ceil(out.onset)); n + 1 < static_cast<int>(out.curve.size());
       ++n) {
    // allow roundoff once the series has converged
    if (out.curve[n + 1] > out.curve[n] && out.curve[n + 1] > 1e-13) out.monotone = false;
  }
  out.error_at_30 = out.curve[30];
  return out;
}

inline CheckResult check_series_convergence(std::uint64_t seed, double horizon,
                                            std::size_t n_intervals) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, horizon, n_intervals);
  std::mt19937_64 rng(seed);
  const ControlField f = random_field(p, rng);
  const SeriesConvergence sc = series_convergence(p, f);
  return {"series convergence (T=" + detail::sci(horizon) + ", L=" + std::to_string(n_intervals) +
              ")",
          sc.monotone && sc.error_at_30 <= 1e-10,
          "max ||dt H|| " + detail::sci(sc.onset) + ", error at n_max=30 " +
              detail::sci(sc.error_at_30) + (sc.monotone ? ", monotone" : ", NOT monotone")};
}

inline CheckResult check_descent(std::uint64_t seed, std::size_t n_intervals) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 5.0, n_intervals);
  std::mt19937_64 rng(seed);
  const ControlField f = random_field(p, rng);
  const PropagationCache c = propagate(p, f);
  const DirectionField d = exact_gradient_augmented(p, f, c);
  const double j0 = objective(p, c);
  const double delta = 1e-3 / std::max(1.0, l2_norm(d));
  ControlField moved = f;
  for (std::size_t i = 0; i < f.size(); ++i) moved.flat()[i] += delta * d.flat()[i];
  const double j1 = objective(p, moved);
  return {"descent along exact gradient", j1 < j0,
          "J " + detail::sci(j0) + " -> " + detail::sci(j1)};
}

inline std::vector<CheckResult> run_checks(bool quick, std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_objective_identities());
  out.push_back(check_structural_identities(seed, quick ? 50 : 150));
  out.push_back(check_gradient_oracles(seed, quick ? 2 : 5, 10.0, quick ? 50 : 150));
  out.push_back(check_series_convergence(seed, 2.0, 300));
  out.push_back(check_descent(seed, quick ? 50 : 150));
  return out;
}

}  // namespace qflow
