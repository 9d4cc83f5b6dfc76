#pragma once

#include <random>

#include "qpt/matrix.hpp"

namespace qpt::test {

/// Haar-ish random density matrix: rho = G G^dag / Tr.
inline ComplexMatrix random_density_matrix(std::mt19937_64& rng, Eigen::Index dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    ComplexMatrix g(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = Complex(normal(rng), normal(rng));
    ComplexMatrix rho = g * g.adjoint();
    return rho / rho.trace().real();
}

/// Independent fidelity oracle: F = (sum_i sqrt(eig_i(a*b)))^2 via a general
/// complex (Schur-based) eigensolver, no matrix square roots involved.
inline double fidelity_product_eigenvalue_oracle(const ComplexMatrix& a, const ComplexMatrix& b) {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(a * b, false);
    double s = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        s += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
    return s * s;
}

}  // namespace qpt::test
