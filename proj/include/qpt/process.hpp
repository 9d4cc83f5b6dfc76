#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qpt/channels.hpp"
#include "qpt/matrix.hpp"

namespace qpt {

/// Process matrix chi in the Pauli/Bell basis. 4x4 for single-qubit channels,
/// 16x16 for two-qubit ones. Hermitian, PSD, unit trace (up to tolerance for
/// matrices that passed through floating point pipelines).
struct ProcessMatrix {
    int n_qubits = 1;
    ComplexMatrix chi;

    Eigen::Index dim() const { return chi.rows(); }

    bool valid(double tol = kMatrixTol) const {
        return (n_qubits == 1 || n_qubits == 2) && chi.rows() == chi.cols() &&
               chi.rows() == (Eigen::Index{1} << (2 * n_qubits)) && is_hermitian(chi, tol) &&
               min_eigenvalue(hermitize(chi)) >= -1e-8 && std::abs(chi.trace().real() - 1.0) <= 1e-8;
    }
};

/// Unitary change of basis between the Choi computational basis and the Pauli
/// basis: column i is (P_i x 1)|phi+>, i.e. the row-major vectorization of
/// P_i / sqrt(d).
inline const ComplexMatrix& pauli_bell_basis_matrix(int n_qubits) {
    static const ComplexMatrix e1 = [] {
        auto basis = pauli_basis(1);
        ComplexMatrix e(4, 4);
        for (int i = 0; i < 4; ++i)
            for (Eigen::Index r = 0; r < 2; ++r)
                for (Eigen::Index c = 0; c < 2; ++c) e(r * 2 + c, i) = basis[i](r, c) / std::sqrt(2.0);
        return e;
    }();
    static const ComplexMatrix e2 = [] {
        auto basis = pauli_basis(2);
        ComplexMatrix e(16, 16);
        for (int i = 0; i < 16; ++i)
            for (Eigen::Index r = 0; r < 4; ++r)
                for (Eigen::Index c = 0; c < 4; ++c) e(r * 4 + c, i) = basis[i](r, c) / 2.0;
        return e;
    }();
    if (n_qubits == 1) return e1;
    if (n_qubits == 2) return e2;
    throw std::invalid_argument("pauli_bell_basis_matrix: n_qubits must be 1 or 2");
}

/// chi_ij = <e_i| rho |e_j> with |e_i> = (P_i x 1)|phi+>.
inline ProcessMatrix chi_from_choi(const ComplexMatrix& rho, int n_qubits) {
    const ComplexMatrix& e = pauli_bell_basis_matrix(n_qubits);
    if (rho.rows() != e.rows() || rho.cols() != e.cols())
        throw std::invalid_argument("chi_from_choi: dimension mismatch");
    if (!is_density_matrix(rho, 1e-8))
        throw std::invalid_argument("chi_from_choi: input is not a density matrix");
    return ProcessMatrix{n_qubits, e.adjoint() * rho * e};
}

/// Inverse of chi_from_choi.
inline ComplexMatrix choi_from_chi(const ProcessMatrix& chi) {
    const ComplexMatrix& e = pauli_bell_basis_matrix(chi.n_qubits);
    return e * chi.chi * e.adjoint();
}

/// Analytic process matrix of a channel.
inline ProcessMatrix analytic_chi(const ChannelSpec& spec) {
    return chi_from_choi(choi_state(spec), spec.n_qubits());
}

/// Uhlmann fidelity F = (Tr sqrt(sqrt(a) b sqrt(a)))^2 between unit-trace PSD
/// matrices, via Hermitian eigendecomposition square roots. Clipped to [0,1].
inline double fidelity(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("fidelity: dimension mismatch");
    ComplexMatrix sa = sqrt_psd(hermitize(a));
    ComplexMatrix m = hermitize(sa * hermitize(b) * sa);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, Eigen::EigenvaluesOnly);
    double s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    double f = s * s;
    if (f > 1.0 + 1e-8 || f < -1e-8)
        throw std::runtime_error("fidelity: value escaped [0,1] beyond tolerance");
    return std::clamp(f, 0.0, 1.0);
}

inline double fidelity(const ProcessMatrix& a, const ProcessMatrix& b) {
    return fidelity(a.chi, b.chi);
}

/// Fidelity against a precomputed sqrt of the first argument; used by the
/// maximum-fidelity grid search where one side stays fixed.
inline double fidelity_with_sqrt(const ComplexMatrix& sqrt_a, const ComplexMatrix& b) {
    ComplexMatrix m = hermitize(sqrt_a * hermitize(b) * sqrt_a);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m, Eigen::EigenvaluesOnly);
    double s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return std::clamp(s * s, 0.0, 1.0);
}

}  // namespace qpt
