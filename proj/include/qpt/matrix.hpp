#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qpt {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Tolerance used by the Hermitian / PSD / unitary predicates.
inline constexpr double kMatrixTol = 1e-10;

inline bool is_hermitian(const ComplexMatrix& m, double tol = kMatrixTol) {
    return m.rows() == m.cols() && (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_unitary(const ComplexMatrix& m, double tol = kMatrixTol) {
    if (m.rows() != m.cols()) return false;
    ComplexMatrix g = m.adjoint() * m;
    g.diagonal().array() -= 1.0;
    return g.cwiseAbs().maxCoeff() <= tol;
}

inline double min_eigenvalue(const ComplexMatrix& m) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline bool is_psd(const ComplexMatrix& m, double tol = kMatrixTol) {
    return is_hermitian(m, tol) && min_eigenvalue((m + m.adjoint()) / 2.0) >= -tol;
}

/// Density matrix predicate: Hermitian, PSD, unit trace.
inline bool is_density_matrix(const ComplexMatrix& m, double tol = kMatrixTol) {
    return is_psd(m, tol) && std::abs(m.trace().real() - 1.0) <= tol &&
           std::abs(m.trace().imag()) <= tol;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline ComplexVector kron(const ComplexVector& a, const ComplexVector& b) {
    ComplexVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

/// Row-major (lexicographic) flattening; the serialization and image order.
inline std::vector<Complex> flatten_row_major(const ComplexMatrix& m) {
    std::vector<Complex> out;
    out.reserve(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

inline ComplexMatrix unflatten_row_major(const std::vector<Complex>& v, Eigen::Index dim) {
    if (v.size() != static_cast<size_t>(dim * dim))
        throw std::invalid_argument("unflatten_row_major: size mismatch");
    ComplexMatrix m(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = v[static_cast<size_t>(i * dim + j)];
    return m;
}

/// (m + m†)/2.
inline ComplexMatrix hermitize(const ComplexMatrix& m) { return (m + m.adjoint()) / 2.0; }

/// Hermitian square root with eigenvalue clipping at zero. Eigenvalues below
/// -tol are a contract violation.
inline ComplexMatrix sqrt_psd(const ComplexMatrix& m, double neg_tol = 1e-8) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() < -neg_tol)
        throw std::invalid_argument("sqrt_psd: negative eigenvalue " + std::to_string(ev.minCoeff()));
    Eigen::VectorXd s = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

/// Nearest valid state: hermitize, clip negative eigenvalues, renormalize trace.
inline ComplexMatrix project_to_density_matrix(const ComplexMatrix& m) {
    ComplexMatrix h = hermitize(m);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    double tr = ev.sum();
    if (tr <= 0.0) {
        // degenerate input; fall back to the maximally mixed state
        return ComplexMatrix::Identity(m.rows(), m.cols()) / static_cast<double>(m.rows());
    }
    ev /= tr;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace qpt
