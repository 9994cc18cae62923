#pragma once

// Adaptive Dormand-Prince 5(4) integration of the control-field flow.

#include "qflow/gradient.hpp"
#include "qflow/model.hpp"
#include "qflow/propagation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace qflow {

struct Tolerances {
  double rel = 1e-3;
  double abs = 1e-6;
};

namespace dopri {

// Butcher tableau (Dormand & Prince 1980), FSAL.
inline constexpr std::array<double, 7> c{0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// b - b_hat (fifth minus embedded fourth order weights)
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

inline constexpr double kSafety = 0.9;
inline constexpr double kMinFactor = 0.2;
inline constexpr double kMaxFactor = 5.0;

}  // namespace dopri

/// Right-hand side: writes f(s, y) into out.
using RhsFn = std::function<void(double s, std::span<const double> y, std::span<double> out)>;

struct StepOutcome {
  std::vector<double> state;  // candidate y(s + h)
  std::vector<double> deriv;  // f at the candidate (FSAL)
  double error = 0.0;         // scaled max-norm, accept iff <= 1
  bool accepted = false;
  double next_h = 0.0;
};

namespace detail {

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/**
 * One embedded 5(4) step from (s, y) with derivative f0 = f(s, y).
 *
 * The error of each component is measured against abs + rel * max(|y|, |y_new|);
 * the step is accepted when the largest ratio is <= 1. A non-finite stage
 * derivative rejects the step and halves h.
 */
inline StepOutcome rk45_step(const RhsFn& rhs, double s, std::span<const double> y,
                             std::span<const double> f0, double h, const Tolerances& tol) {
  using namespace dopri;
  if (!(h > 0.0)) throw std::invalid_argument("rk45_step: step must be positive");
  const std::size_t n = y.size();
  std::vector<double> k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n);
  StepOutcome out;

  auto reject_nonfinite = [&]() {
    out.accepted = false;
    out.error = std::numeric_limits<double>::infinity();
    out.next_h = 0.5 * h;
    return out;
  };

  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * f0[i];
  rhs(s + c[1] * h, tmp, k2);
  if (!detail::all_finite(k2)) return reject_nonfinite();
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * f0[i] + a32 * k2[i]);
  rhs(s + c[2] * h, tmp, k3);
  if (!detail::all_finite(k3)) return reject_nonfinite();
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * f0[i] + a42 * k2[i] + a43 * k3[i]);
  rhs(s + c[3] * h, tmp, k4);
  if (!detail::all_finite(k4)) return reject_nonfinite();
  for (std::size_t i = 0; i < n; ++i) {
    tmp[i] = y[i] + h * (a51 * f0[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  }
  rhs(s + c[4] * h, tmp, k5);
  if (!detail::all_finite(k5)) return reject_nonfinite();
  for (std::size_t i = 0; i < n; ++i) {
    tmp[i] = y[i] + h * (a61 * f0[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  }
  rhs(s + c[5] * h, tmp, k6);
  if (!detail::all_finite(k6)) return reject_nonfinite();

  out.state.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.state[i] = y[i] + h * (b1 * f0[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
  }
  rhs(s + h, out.state, k7);
  if (!detail::all_finite(k7) || !detail::all_finite(out.state)) return reject_nonfinite();

  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e =
        h * (e1 * f0[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const double scale = tol.abs + tol.rel * std::max(std::abs(y[i]), std::abs(out.state[i]));
    err = std::max(err, std::abs(e) / scale);
  }
  out.error = err;
  out.accepted = err <= 1.0;
  double factor = err == 0.0 ? kMaxFactor : kSafety * std::pow(err, -0.2);
  factor = std::clamp(factor, kMinFactor, out.accepted ? kMaxFactor : 1.0);
  out.next_h = h * factor;
  out.deriv = std::move(k7);
  return out;
}

/// Starting step from the size of y0 and f(y0) (Hairer, Norsett & Wanner II.4).
inline double initial_step(const RhsFn& rhs, double s0, std::span<const double> y0,
                           std::span<const double> f0, const Tolerances& tol, double h_max) {
  const std::size_t n = y0.size();
  if (n == 0) return h_max;
  auto rms = [&](auto&& value) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = tol.abs + tol.rel * std::abs(y0[i]);
      const double v = value(i) / sc;
      acc += v * v;
    }
    return std::sqrt(acc / static_cast<double>(n));
  };
  const double d0 = rms([&](std::size_t i) { return y0[i]; });
  const double d1 = rms([&](std::size_t i) { return f0[i]; });
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, h_max);
  std::vector<double> y1(n), f1(n);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + h0 * f0[i];
  rhs(s0 + h0, y1, f1);
  if (!detail::all_finite(f1)) return h0;
  const double d2 = rms([&](std::size_t i) { return f1[i] - f0[i]; }) / h0;
  const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                              : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min({100.0 * h0, h1, h_max});
}

enum class Termination { JThreshold, SExhausted, StepLimit, StepUnderflow };

inline std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::JThreshold: return "J_THRESHOLD";
    case Termination::SExhausted: return "S_EXHAUSTED";
    case Termination::StepLimit: return "STEP_LIMIT";
    case Termination::StepUnderflow: return "STEP_UNDERFLOW";
  }
  return "UNKNOWN";
}

inline std::optional<Termination> parse_termination(std::string_view name) {
  for (auto t : {Termination::JThreshold, Termination::SExhausted, Termination::StepLimit,
                 Termination::StepUnderflow}) {
    if (name == termination_name(t)) return t;
  }
  return std::nullopt;
}

struct SolverConfig {
  double s_max = 5000.0;
  double j_stop = 1e-7;
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  std::size_t max_steps = 1'000'000;
  std::optional<double> initial_step;  // auto when empty
  bool keep_trajectory = false;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;

  void validate() const {
    if (!(s_max > 0.0)) throw std::invalid_argument("SolverConfig: S must be > 0");
    if (!(j_stop > 0.0)) throw std::invalid_argument("SolverConfig: j_stop must be > 0");
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
      throw std::invalid_argument("SolverConfig: rel_tol and abs_tol must be > 0");
    }
    if (initial_step && !(*initial_step > 0.0)) {
      throw std::invalid_argument("SolverConfig: initial_step must be > 0");
    }
  }
};

struct TrajectoryPoint {
  double s = 0.0;
  double j = 0.0;
  double step = 0.0;
  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

/// Outcome of integrating a scalar-monitored flow.
struct FlowOutcome {
  double final_s = 0.0;
  double final_j = 0.0;
  double max_step = 0.0;
  std::size_t n_accepted = 0;
  std::size_t n_rejected = 0;
  std::size_t n_evaluations = 0;
  Termination termination = Termination::SExhausted;
  std::vector<double> final_state;
  std::vector<TrajectoryPoint> trajectory;
};

/// Derivative evaluator that also reports the monitored objective at y.
using MonitoredRhs = std::function<double(std::span<const double> y, std::span<double> out)>;

/**
 * Integrates y' = f(y) from s = 0 until the monitored value drops below j_stop
 * (checked after each accepted step), s reaches s_max, the step budget runs out
 * or the step size underflows 1e-14 * s_max.
 */
inline FlowOutcome integrate_flow(const MonitoredRhs& f, std::vector<double> y0,
                                  const SolverConfig& config) {
  config.validate();
  const Tolerances tol{config.rel_tol, config.abs_tol};
  const double h_min = 1e-14 * config.s_max;

  FlowOutcome out;
  double last_j = 0.0;
  RhsFn rhs = [&](double, std::span<const double> y, std::span<double> d) {
    last_j = f(y, d);
    ++out.n_evaluations;
  };

  std::vector<double> y = std::move(y0);
  std::vector<double> f0(y.size());
  rhs(0.0, y, f0);
  double s = 0.0;
  double j = last_j;

  auto finish = [&](Termination t) {
    out.final_s = s;
    out.final_j = j;
    out.termination = t;
    out.final_state = std::move(y);
    return std::move(out);
  };

  if (j < config.j_stop) return finish(Termination::JThreshold);
  if (!detail::all_finite(f0)) return finish(Termination::StepUnderflow);

  double h = config.initial_step ? *config.initial_step
                                 : initial_step(rhs, 0.0, y, f0, tol, config.s_max);
  while (true) {
    const double remaining = config.s_max - s;
    if (remaining <= h_min) return finish(Termination::SExhausted);
    if (out.n_accepted >= config.max_steps) return finish(Termination::StepLimit);
    h = std::min(h, remaining);
    if (h < h_min) return finish(Termination::StepUnderflow);

    StepOutcome step = rk45_step(rhs, s, y, f0, h, tol);
    if (!step.accepted) {
      ++out.n_rejected;
      h = step.next_h;
      continue;
    }
    // last_j belongs to the FSAL evaluation at the accepted state
    s = (h == remaining) ? config.s_max : s + h;
    y = std::move(step.state);
    f0 = std::move(step.deriv);
    j = last_j;
    ++out.n_accepted;
    out.max_step = std::max(out.max_step, h);
    if (config.keep_trajectory) out.trajectory.push_back({s, j, h});
    if (j < config.j_stop) return finish(Termination::JThreshold);
    h = step.next_h;
  }
}

struct FlowResult {
  double final_s = 0.0;
  double final_j = 0.0;
  double max_step = 0.0;
  std::size_t n_accepted = 0;
  std::size_t n_rejected = 0;
  std::size_t n_evaluations = 0;
  double wall_time = 0.0;
  Termination termination = Termination::SExhausted;
  ControlField final_field;
  std::vector<TrajectoryPoint> trajectory;
};

/// Monitored right-hand side for the control flow: dε/ds = direction(ε), J(ε).
inline MonitoredRhs flow_rhs(const ControlProblem& problem, const MethodSpec& method,
                             double scale = 1.0) {
  return [&problem, method, scale](std::span<const double> y, std::span<double> out) {
    const ControlField field(problem.n_intervals(), problem.n_controls(),
                             std::vector<double>(y.begin(), y.end()));
    if (!field.all_finite()) {
      std::fill(out.begin(), out.end(), std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::quiet_NaN();
    }
    const PropagationCache cache = propagate(problem, field);
    const DirectionField d = direction(problem, field, cache, method);
    std::transform(d.flat().begin(), d.flat().end(), out.begin(),
                   [scale](double v) { return scale * v; });
    return objective(problem, cache);
  };
}

inline FlowResult solve_flow(const ControlProblem& problem, const ControlField& field0,
                             const MethodSpec& method, const SolverConfig& config) {
  require_shape(problem, field0, "solve_flow");
  const auto start = std::chrono::steady_clock::now();
  FlowOutcome o = integrate_flow(flow_rhs(problem, method), field0.data(), config);
  const auto stop = std::chrono::steady_clock::now();
  return FlowResult{o.final_s,
                    o.final_j,
                    o.max_step,
                    o.n_accepted,
                    o.n_rejected,
                    o.n_evaluations,
                    std::chrono::duration<double>(stop - start).count(),
                    o.termination,
                    ControlField(problem.n_intervals(), problem.n_controls(),
                                 std::move(o.final_state)),
                    std::move(o.trajectory)};
}

}  // namespace qflow
