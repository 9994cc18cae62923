#include "qflow/linalg.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace qflow {
namespace {

using testing::max_abs;

TEST(Kron, IdentityTimesIdentity) {
  EXPECT_EQ(kron(identity(2), identity(2)), identity(4));
}

TEST(Kron, SxTensorIdentityHasOnesOnShiftedDiagonals) {
  ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
  // 1-based (1,3),(3,1),(2,4),(4,2)
  expected(0, 2) = expected(2, 0) = expected(1, 3) = expected(3, 1) = 1.0;
  EXPECT_EQ(kron(pauli_x(), identity(2)), expected);
}

TEST(Kron, SzTensorSzIsDiagonalParity) {
  ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
  expected.diagonal() << 1.0, -1.0, -1.0, 1.0;
  EXPECT_EQ(kron(pauli_z(), pauli_z()), expected);
}

TEST(Kron, RectangularShape) {
  ComplexMatrix a = ComplexMatrix::Ones(2, 3);
  ComplexMatrix b = ComplexMatrix::Ones(1, 2);
  const ComplexMatrix k = kron(a, b);
  EXPECT_EQ(k.rows(), 2);
  EXPECT_EQ(k.cols(), 6);
}

TEST(Kron, MixedProductProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const ComplexMatrix a = testing::random_matrix(rng, 2);
    const ComplexMatrix b = testing::random_matrix(rng, 2);
    const ComplexMatrix c = testing::random_matrix(rng, 2);
    const ComplexMatrix d = testing::random_matrix(rng, 2);
    EXPECT_LE(max_abs(kron(a, b) * kron(c, d) - kron(a * c, b * d)), 1e-12);
  }
}

TEST(Commutator, SelfCommutatorVanishes) {
  std::mt19937_64 rng(3);
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  EXPECT_LE(max_abs(commutator(h, h)), 0.0);
}

TEST(Commutator, PauliAlgebra) {
  EXPECT_LE(max_abs(commutator(pauli_x(), pauli_y()) - 2.0 * kI * pauli_z()), 0.0);
  EXPECT_LE(max_abs(commutator(pauli_z(), pauli_x()) - 2.0 * kI * pauli_y()), 0.0);
}

TEST(Commutator, Antisymmetric) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix a = testing::random_matrix(rng, 4);
    const ComplexMatrix b = testing::random_matrix(rng, 4);
    EXPECT_EQ(commutator(a, b), (-commutator(b, a)).eval());
  }
}

TEST(Commutator, RejectsDimensionMismatch) {
  EXPECT_THROW(commutator(identity(2), identity(4)), std::invalid_argument);
  EXPECT_THROW(commutator(ComplexMatrix::Ones(2, 3), ComplexMatrix::Ones(2, 3)),
               std::invalid_argument);
}

TEST(ExpmPropagator, ZeroTimeIsIdentity) {
  std::mt19937_64 rng(7);
  const ComplexMatrix h = testing::random_hermitian(rng, 4);
  EXPECT_LE(max_abs(expm_propagator(h, 0.0) - identity(4)), 1e-14);
}

TEST(ExpmPropagator, PauliXQuarterTurn) {
  // exp(-i t Sx) = cos t I - i sin t Sx
  const ComplexMatrix u = expm_propagator(pauli_x(), std::numbers::pi / 2.0);
  EXPECT_LE(max_abs(u - (-kI * pauli_x())), 1e-14);
}

TEST(ExpmPropagator, PauliXClosedForm) {
  for (double t : {0.1, 0.7, 2.3, 10.0}) {
    const ComplexMatrix expected = std::cos(t) * identity(2) - kI * std::sin(t) * pauli_x();
    EXPECT_LE(max_abs(expm_propagator(pauli_x(), t) - expected), 1e-13);
  }
}

TEST(ExpmPropagator, DiagonalGenerator) {
  const double theta = 0.83;
  const ComplexMatrix u = expm_propagator(pauli_z(), theta);
  EXPECT_LE(std::abs(u(0, 0) - std::exp(-kI * theta)), 1e-15);
  EXPECT_LE(std::abs(u(1, 1) - std::exp(kI * theta)), 1e-15);
  EXPECT_EQ(u(0, 1), Complex(0.0, 0.0));
}

TEST(ExpmPropagator, MatchesPadeOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix h = testing::random_hermitian(rng, 4);
    const double dt = 0.05 * (trial + 1);
    EXPECT_LE(max_abs(expm_propagator(h, dt) - testing::pade_propagator(h, dt)), 1e-12);
  }
  // two-spin drift on the coarsest grid step
  const ComplexMatrix h0 = testing::two_spin_drift();
  EXPECT_LE(max_abs(expm_propagator(h0, 10.0 / 150.0) - testing::pade_propagator(h0, 10.0 / 150.0)),
            1e-11);
}

TEST(ExpmPropagator, UnitaryAndGroupProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u01(1e-3, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ComplexMatrix h = testing::random_hermitian(rng, 4);
    const double a = u01(rng);
    const double b = u01(rng);
    const ComplexMatrix ua = expm_propagator(h, a);
    EXPECT_LE((ua.adjoint() * ua - identity(4)).norm(), 1e-10 * 2.0);
    EXPECT_LE(max_abs(expm_propagator(h, a + b) - ua * expm_propagator(h, b)), 1e-10);
  }
}

TEST(ExpmPropagator, RejectsNonHermitian) {
  ComplexMatrix m = pauli_x();
  m(0, 1) = 2.0;
  EXPECT_THROW(expm_propagator(m, 0.1), std::invalid_argument);
  EXPECT_THROW(expm_propagator(-kI * pauli_x(), 0.1), std::invalid_argument);
}

TEST(ExpmPropagator, RejectsNegativeTime) {
  EXPECT_THROW(expm_propagator(pauli_x(), -0.1), std::invalid_argument);
}

TEST(ExpmPropagator, ToleratesHermiticityRoundoff) {
  ComplexMatrix h = testing::two_spin_drift();
  h(0, 3) += Complex(0.0, 1e-14);
  EXPECT_NO_THROW(expm_propagator(h, 0.1));
}

TEST(ReTraceProduct, Identity) {
  const auto [re, im] = re_trace_product(identity(4), identity(4));
  EXPECT_EQ(re, 4.0);
  EXPECT_EQ(im, 0.0);
}

TEST(ReTraceProduct, UnitaryAdjointProduct) {
  std::mt19937_64 rng(19);
  const ComplexMatrix u = expm_propagator(testing::random_hermitian(rng, 4), 0.9);
  const auto [re, im] = re_trace_product(u.adjoint(), u);
  EXPECT_NEAR(re, 4.0, 1e-13);
  EXPECT_NEAR(im, 0.0, 1e-13);
}

TEST(ReTraceProduct, PauliXY) {
  const auto [re, im] = re_trace_product(pauli_x(), pauli_y());
  EXPECT_EQ(re, 0.0);
  EXPECT_EQ(im, 0.0);
}

TEST(ReTraceProduct, MatchesExplicitProduct) {
  std::mt19937_64 rng(23);
  const ComplexMatrix a = testing::random_matrix(rng, 4);
  const ComplexMatrix b = testing::random_matrix(rng, 4);
  const Complex tr = (a * b).trace();
  const auto [re, im] = re_trace_product(a, b);
  EXPECT_NEAR(re, tr.real(), 1e-12);
  EXPECT_NEAR(im, tr.imag(), 1e-12);
}

TEST(ReTraceProduct, RejectsMismatch) {
  EXPECT_THROW(re_trace_product(identity(2), identity(3)), std::invalid_argument);
}

TEST(Checks, HermitianAndUnitaryFlags) {
  EXPECT_TRUE(is_hermitian(pauli_y()));
  EXPECT_FALSE(is_hermitian(kI * pauli_y()));
  EXPECT_TRUE(is_unitary(pauli_y()));
  EXPECT_FALSE(is_unitary(2.0 * pauli_y()));
}

}  // namespace
}  // namespace qflow
