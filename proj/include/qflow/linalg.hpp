#pragma once

// Dense complex matrix primitives for small Hilbert spaces.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace qflow {

using Complex = std::complex<double>;

/// Dense N x N complex matrix, row-major.
using ComplexMatrix =
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Complex kI{0.0, 1.0};

namespace detail {

inline void require_square(const ComplexMatrix& a, const char* what) {
  if (a.rows() < 1 || a.rows() != a.cols()) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square and non-empty");
  }
}

inline void require_same_square(const ComplexMatrix& a, const ComplexMatrix& b,
                                 const char* what) {
  require_square(a, what);
  require_square(b, what);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.rows()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
}

}  // namespace detail

inline ComplexMatrix identity(Eigen::Index n) { return ComplexMatrix::Identity(n, n); }

inline ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

inline ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}

inline ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Returns ab - ba.
inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  detail::require_same_square(a, b, "commutator");
  const ComplexMatrix ab = a * b;
  const ComplexMatrix ba = b * a;
  return ab - ba;
}

/// (Re Tr(ab), Im Tr(ab)) without forming the product.
inline std::pair<double, double> re_trace_product(const ComplexMatrix& a,
                                                  const ComplexMatrix& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols()) {
    throw std::invalid_argument("re_trace_product: dimension mismatch");
  }
  Complex acc{0.0, 0.0};
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      acc += a(i, j) * b(j, i);
    }
  }
  return {acc.real(), acc.imag()};
}

inline double frobenius_norm(const ComplexMatrix& a) { return a.norm(); }

/// Largest singular value.
inline double spectral_norm(const ComplexMatrix& a) {
  Eigen::JacobiSVD<ComplexMatrix> svd(a);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

inline double hermiticity_defect(const ComplexMatrix& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

/// max |a_ij - conj(a_ji)| <= 1e-12 ||a||_F.
inline bool is_hermitian(const ComplexMatrix& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  return hermiticity_defect(a) <= rel_tol * a.norm();
}

/// ||a* a - I||_F <= tol * sqrt(N).
inline bool is_unitary(const ComplexMatrix& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  const double n = static_cast<double>(a.rows());
  return (a.adjoint() * a - identity(a.rows())).norm() <= tol * std::sqrt(n);
}

/// Eigendecomposition of a Hermitian generator, reusable for several durations.
class HermitianEigensystem {
 public:
  explicit HermitianEigensystem(const ComplexMatrix& h) {
    detail::require_square(h, "HermitianEigensystem");
    if (!is_hermitian(h)) {
      throw std::invalid_argument("HermitianEigensystem: generator is not Hermitian (defect " +
                                  std::to_string(hermiticity_defect(h)) + ")");
    }
    const ComplexMatrix sym = 0.5 * (h + h.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym);
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("HermitianEigensystem: eigendecomposition failed");
    }
    values_ = solver.eigenvalues();
    vectors_ = solver.eigenvectors();
  }

  const Eigen::VectorXd& eigenvalues() const { return values_; }
  const ComplexMatrix& eigenvectors() const { return vectors_; }

  /// exp(-i dt H)
  ComplexMatrix propagator(double dt) const {
    if (!(dt >= 0.0)) throw std::invalid_argument("propagator: dt must be >= 0");
    ComplexMatrix scaled = vectors_;
    for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
      scaled.col(j) *= std::exp(-kI * (dt * values_(j)));
    }
    return scaled * vectors_.adjoint();
  }

 private:
  Eigen::VectorXd values_;
  ComplexMatrix vectors_;
};

/// exp(-i dt h) for Hermitian h; unitary to roundoff.
inline ComplexMatrix expm_propagator(const ComplexMatrix& h, double dt) {
  return HermitianEigensystem(h).propagator(dt);
}

}  // namespace qflow
