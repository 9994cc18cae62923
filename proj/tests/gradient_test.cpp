#include "qflow/checks.hpp"
#include "qflow/flow_solver.hpp"
#include "qflow/gradient.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <random>

namespace qflow {
namespace {

using testing::max_abs;

// phi(i dt ad_h)(hk) in the eigenbasis of h, phi(z) = (e^z - 1)/z.
ComplexMatrix dexp_series_oracle(const ComplexMatrix& h, const ComplexMatrix& hk, double dt) {
  const Eigen::MatrixXcd hm = h;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hm);
  const Eigen::MatrixXcd v = es.eigenvectors();
  Eigen::MatrixXcd x = v.adjoint() * Eigen::MatrixXcd(hk) * v;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Complex z = kI * dt * (es.eigenvalues()(i) - es.eigenvalues()(j));
      const Complex phi = std::abs(z) < 1e-8 ? 1.0 + 0.5 * z : (std::exp(z) - 1.0) / z;
      x(i, j) *= phi;
    }
  }
  return v * x * v.adjoint();
}

TEST(AdSeries, OrderZeroIsControl) {
  std::mt19937_64 rng(47);
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  const ComplexMatrix hk = testing::random_hermitian(rng, 4);
  EXPECT_EQ(ad_series(h, hk, 0.3, 0), hk);
}

TEST(AdSeries, OrderOneAddsHalfCommutator) {
  std::mt19937_64 rng(53);
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  const ComplexMatrix hk = testing::random_hermitian(rng, 4);
  const double dt = 0.07;
  const ComplexMatrix expected = hk + (kI * dt / 2.0) * commutator(h, hk);
  EXPECT_LE(max_abs(ad_series(h, hk, dt, 1) - expected), 1e-14);
}

TEST(AdSeries, OrderTwoFromRawCommutators) {
  std::mt19937_64 rng(59);
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  const ComplexMatrix hk = testing::random_hermitian(rng, 4);
  const double dt = 0.11;
  const ComplexMatrix c1 = commutator(h, hk);
  const ComplexMatrix c2 = commutator(h, c1);
  const ComplexMatrix expected = hk + (kI * dt / 2.0) * c1 + ((kI * dt) * (kI * dt) / 6.0) * c2;
  EXPECT_LE(max_abs(ad_series(h, hk, dt, 2) - expected), 1e-13);
}

TEST(AdSeries, CommutingOperandsCollapse) {
  ComplexMatrix h = ComplexMatrix::Zero(4, 4);
  h.diagonal() << 3.0, -1.0, 0.5, 2.0;
  ComplexMatrix hk = ComplexMatrix::Zero(4, 4);
  hk.diagonal() << 1.0, 2.0, -4.0, 0.0;
  for (int n : {0, 1, 5, 20}) EXPECT_EQ(ad_series(h, hk, 0.4, n), hk);
}

TEST(AdSeries, RejectsBadInput) {
  EXPECT_THROW(ad_series(identity(2), identity(4), 0.1, 1), std::invalid_argument);
  EXPECT_THROW(ad_series(identity(2), identity(2), 0.1, -1), std::invalid_argument);
}

TEST(AdSeries, ConvergesToEigenbasisOracleForSmallSteps) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 1.0, 1000);
  const ComplexMatrix h = p.drift() + 0.3 * p.control(0);
  const ComplexMatrix oracle = dexp_series_oracle(h, p.control(1), p.dt());
  EXPECT_LE(max_abs(ad_series(h, p.control(1), p.dt(), 30) - oracle), 1e-12);
}

TEST(AdSeriesAdaptive, MatchesEigenbasisOracleAtGridSteps) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 1.0, 1);
  std::mt19937_64 rng(61);
  for (double dt : {1e-3, 10.0 / 300.0, 10.0 / 150.0, 0.5}) {
    const ComplexMatrix h = p.drift() + 0.7 * p.control(0) - 0.2 * p.control(1);
    for (std::size_t k = 0; k < 2; ++k) {
      const ComplexMatrix oracle = dexp_series_oracle(h, p.control(k), dt);
      EXPECT_LE(max_abs(ad_series_adaptive(h, p.control(k), dt) - oracle), 1e-12) << "dt=" << dt;
    }
  }
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  const ComplexMatrix hk = testing::random_hermitian(rng, 4);
  EXPECT_LE(max_abs(ad_series_adaptive(h, hk, 0.01) - ad_series(h, hk, 0.01, 40)), 1e-14);
}

class DirectionTest : public ::testing::Test {
 protected:
  ControlProblem problem = build_two_spin_problem(TwoSpinParams{}, 10.0, 150);
};

TEST_F(DirectionTest, NewOrderZeroIsScaledOriginal) {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 3; ++trial) {
    const ControlField f = random_field(problem, rng);
    const PropagationCache c = propagate(problem, f);
    const DirectionField orig = direction(problem, f, c, MethodSpec::original());
    const DirectionField new0 = direction(problem, f, c, MethodSpec::fresh(0));
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_NEAR(new0.flat()[i], problem.dt() * orig.flat()[i],
                  1e-14 * std::abs(problem.dt() * orig.flat()[i]));
    }
  }
}

TEST_F(DirectionTest, OldIsNewOverDt) {
  std::mt19937_64 rng(71);
  const ControlField f = random_field(problem, rng);
  const PropagationCache c = propagate(problem, f);
  for (int n : {0, 1, 2, 5}) {
    const DirectionField oldd = direction(problem, f, c, MethodSpec::old(n));
    const DirectionField newd = direction(problem, f, c, MethodSpec::fresh(n));
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_NEAR(oldd.flat()[i], newd.flat()[i] / problem.dt(), 1e-13 * std::abs(oldd.flat()[i]));
    }
  }
}

TEST_F(DirectionTest, AdaptiveNewMatchesFdAtZeroField) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 10.0, 300);
  const ControlField f = zero_field(p);
  const DirectionField d = direction(p, f, MethodSpec::fresh_adaptive());
  EXPECT_LE(relative_l2(d, exact_gradient_fd(p, f)), 1e-6);
}

TEST_F(DirectionTest, TruncatedNewMatchesFdWhenSeriesIsResolved) {
  // dt * spread(H_0) ~ 0.9 here, so eight commutator orders resolve the series.
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 0.5, 300);
  const ControlField f = zero_field(p);
  const DirectionField d = direction(p, f, MethodSpec::fresh(8));
  EXPECT_LE(relative_l2(d, exact_gradient_fd(p, f)), 1e-6);
}

TEST_F(DirectionTest, RejectsMismatchedCache) {
  const ControlField f = zero_field(problem);
  const ControlProblem other = problem.with_grid(10.0, 100);
  const PropagationCache c = propagate(other, zero_field(other));
  EXPECT_THROW(direction(problem, f, c, MethodSpec::fresh(1)), std::invalid_argument);
  EXPECT_THROW(direction(problem, ControlField(150, 1), propagate(problem, f), MethodSpec::old(1)),
               std::invalid_argument);
}

TEST_F(DirectionTest, DescentAlongSeriesAndOracleDirections) {
  std::mt19937_64 rng(73);
  const ControlField f = random_field(problem, rng);
  const PropagationCache c = propagate(problem, f);
  const double j0 = objective(problem, c);
  for (const MethodSpec& m : {MethodSpec::fresh_adaptive(), MethodSpec::exact_augmented()}) {
    const DirectionField d = direction(problem, f, c, m);
    ASSERT_GT(l2_norm(d), 1e-8);
    ControlField moved = f;
    const double delta = 1e-4 / l2_norm(d);
    for (std::size_t i = 0; i < f.size(); ++i) moved.flat()[i] += delta * d.flat()[i];
    EXPECT_LT(objective(problem, moved), j0);
  }
}

TEST(ExactGradientFd, ConstantObjectiveGivesZero) {
  const ComplexMatrix zero = ComplexMatrix::Zero(4, 4);
  const ControlProblem p(testing::two_spin_drift(), {zero, zero}, cnot_target(), 5.0, 20);
  std::mt19937_64 rng(79);
  const DirectionField g = exact_gradient_fd(p, random_field(p, rng));
  EXPECT_EQ(l2_norm(g), 0.0);
}

TEST(ExactGradientFd, SingleIntervalClosedForm) {
  // H_0 = 0, one control H_1 = Sx (x) I with H_1^2 = I:
  //   U(eps) = cos(T eps) I - i sin(T eps) H_1
  //   dJ/deps = -Re Tr(U_D^* (-T sin(T eps) I - i T cos(T eps) H_1)) / (2N)
  const double horizon = 1.3;
  const ComplexMatrix h1 = kron(pauli_x(), identity(2));
  const ComplexMatrix ud = cnot_target();
  const ControlProblem p(ComplexMatrix::Zero(4, 4), {h1}, ud, horizon, 1);
  const Complex tr_id = ud.adjoint().trace();
  const Complex tr_h1 = (ud.adjoint() * h1).trace();
  for (double eps : {-0.8, -0.1, 0.0, 0.35, 1.7}) {
    const double s = std::sin(horizon * eps);
    const double co = std::cos(horizon * eps);
    const Complex d_tr = -horizon * s * tr_id - kI * horizon * co * tr_h1;
    const double dj = -d_tr.real() / 8.0;
    ControlField f(1, 1, eps);
    EXPECT_NEAR(exact_gradient_fd(p, f)(0, 0), -dj, 1e-8) << "eps=" << eps;
    EXPECT_NEAR(exact_gradient_augmented(p, f, propagate(p, f))(0, 0), -dj, 1e-12);
  }
}

TEST(ExactGradientFd, RejectsNonPositiveStep) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 1.0, 3);
  EXPECT_THROW(exact_gradient_fd(p, zero_field(p), 0.0), std::invalid_argument);
}

TEST(ExactGradientAugmented, AgreesWithFd) {
  std::mt19937_64 rng(83);
  for (std::size_t n_int : {30u, 150u}) {
    const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 10.0, n_int);
    for (int trial = 0; trial < 2; ++trial) {
      const ControlField f = random_field(p, rng);
      const DirectionField aug = exact_gradient_augmented(p, f, propagate(p, f));
      EXPECT_LE(relative_l2(exact_gradient_fd(p, f), aug), 1e-7);
    }
  }
}

TEST(ExactGradientAugmented, CommutingCaseEqualsNewOrderZero) {
  // all Hamiltonians diagonal
  const ComplexMatrix i2 = identity(2);
  const ComplexMatrix drift = 20.0 * kron(pauli_z(), i2) + 30.0 * kron(i2, pauli_z()) +
                              130.0 * kron(pauli_z(), pauli_z());
  const ControlProblem p(drift, {kron(pauli_z(), i2), kron(i2, pauli_z())}, cnot_target(), 10.0, 60);
  std::mt19937_64 rng(89);
  const ControlField f = random_field(p, rng);
  const PropagationCache c = propagate(p, f);
  const DirectionField aug = exact_gradient_augmented(p, f, c);
  const DirectionField new0 = direction(p, f, c, MethodSpec::fresh(0));
  EXPECT_LE(relative_l2(new0, aug), 1e-12);
}

TEST(ExactGradientAugmented, SeriesConvergesWhereResolved) {
  // T = 2, L = 300: max ||dt H||_2 ~ 2.4
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 2.0, 300);
  std::mt19937_64 rng(97);
  const ControlField f = random_field(p, rng);
  const SeriesConvergence sc = series_convergence(p, f);
  std::cout << "series error curve (T=2, L=300, onset " << sc.onset << "):";
  for (std::size_t n = 0; n < sc.curve.size(); n += 5) std::cout << " n" << n << "=" << sc.curve[n];
  std::cout << "\n";
  EXPECT_TRUE(sc.monotone);
  EXPECT_LE(sc.error_at_30, 1e-10);
}

TEST(ExactGradientAugmented, StationaryAtConvergedGate) {
  const ControlProblem p = build_two_spin_problem(TwoSpinParams{}, 10.0, 150);
  SolverConfig cfg;
  cfg.j_stop = 1e-13;
  cfg.rel_tol = 1e-6;
  cfg.abs_tol = 1e-9;
  const FlowResult r = solve_flow(p, zero_field(p), MethodSpec::old(1), cfg);
  ASSERT_EQ(r.termination, Termination::JThreshold);
  const DirectionField g = exact_gradient_augmented(p, r.final_field, propagate(p, r.final_field));
  EXPECT_LE(l2_norm(g), 1e-6 * std::sqrt(static_cast<double>(g.size())));
}

}  // namespace
}  // namespace qflow
