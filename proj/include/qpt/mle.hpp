#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qpt/process.hpp"
#include "qpt/tomography.hpp"

namespace qpt {

/// Outcome vectors of the full local-Pauli setting set, one column per
/// (setting, outcome) pair in enumeration order, plus the pseudo-inverse used
/// by the linear-inversion debug path. Built once per qubit count.
struct MeasurementModel {
    Eigen::Index dim = 0;
    ComplexMatrix vectors;                      // dim x n_columns
    std::vector<int> setting_of_column;         // column -> setting index
    int n_settings = 0;
    int n_outcomes_per_setting = 0;
    ComplexMatrix inversion_pinv;               // dim^2 x n_columns

    static const MeasurementModel& get(int n_qubits) {
        static const MeasurementModel m1 = build(1);
        static const MeasurementModel m2 = build(2);
        if (n_qubits == 1) return m1;
        if (n_qubits == 2) return m2;
        throw std::invalid_argument("MeasurementModel: n_qubits must be 1 or 2");
    }

  private:
    static MeasurementModel build(int n_qubits) {
        MeasurementModel m;
        const auto settings = enumerate_settings(n_qubits);
        m.dim = Eigen::Index{1} << (2 * n_qubits);
        m.n_settings = static_cast<int>(settings.size());
        m.n_outcomes_per_setting = settings[0].n_outcomes();
        const Eigen::Index n_cols =
            static_cast<Eigen::Index>(m.n_settings) * m.n_outcomes_per_setting;
        m.vectors.resize(m.dim, n_cols);
        m.setting_of_column.resize(n_cols);
        ComplexMatrix design(n_cols, m.dim * m.dim);
        Eigen::Index col = 0;
        for (int s = 0; s < m.n_settings; ++s) {
            for (int o = 0; o < m.n_outcomes_per_setting; ++o, ++col) {
                ComplexVector v = outcome_vector(settings[s], o);
                m.vectors.col(col) = v;
                m.setting_of_column[col] = s;
                ComplexMatrix proj = v * v.adjoint();
                design.row(col) = Eigen::Map<const ComplexVector>(proj.data(), proj.size()).adjoint();
            }
        }
        m.inversion_pinv = design.completeOrthogonalDecomposition().pseudoInverse();
        return m;
    }
};

/// Lower-triangular parametrization rho = T^dag T / Tr(T^dag T). The real
/// parameter vector packs Re/Im of the strict lower triangle plus the real
/// diagonal.
namespace detail {

inline Eigen::Index n_t_params(Eigen::Index dim) { return dim * dim; }

inline ComplexMatrix unpack_t(const Eigen::VectorXd& theta, Eigen::Index dim) {
    ComplexMatrix t = ComplexMatrix::Zero(dim, dim);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            t(i, j) = Complex(theta(k), theta(k + 1));
            k += 2;
        }
        t(i, i) = theta(k++);
    }
    return t;
}

inline Eigen::VectorXd pack_t(const ComplexMatrix& t) {
    const Eigen::Index dim = t.rows();
    Eigen::VectorXd theta(n_t_params(dim));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            theta(k) = t(i, j).real();
            theta(k + 1) = t(i, j).imag();
            k += 2;
        }
        theta(k++) = t(i, i).real();
    }
    return theta;
}

/// Lower-triangular T with real diagonal such that T^dag T equals the given
/// positive-definite matrix; the Cholesky factorization in the flipped basis.
inline ComplexMatrix t_from_positive_definite(const ComplexMatrix& rho) {
    const Eigen::Index d = rho.rows();
    ComplexMatrix flipped(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) flipped(i, j) = rho(d - 1 - i, d - 1 - j);
    Eigen::LLT<ComplexMatrix> llt(flipped);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("t_from_positive_definite: Cholesky failed");
    ComplexMatrix l = llt.matrixL();
    ComplexMatrix lad = l.adjoint();
    ComplexMatrix t(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) t(i, j) = lad(d - 1 - i, d - 1 - j);
    return t;
}

}  // namespace detail

struct ReconstructionResult {
    ProcessMatrix chi;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> ll_trace;  // accepted-step likelihoods, when recorded
};

struct MleOptions {
    int max_iterations = 2000;
    double grad_tol = 1e-6;
    double rel_ll_tol = 1e-10;
    /// Initial state override; defaults to the projected linear inversion.
    std::optional<ComplexMatrix> initial_rho;
    bool record_trace = false;
};

/// Unconstrained least-squares state estimate from measured frequencies,
/// Hermitized and trace-normalized but not necessarily PSD. Debug path.
inline ComplexMatrix linear_inversion_estimate(const CountsTable& counts) {
    const auto& model = MeasurementModel::get(counts.n_qubits);
    const Eigen::Index n_cols = model.vectors.cols();
    Eigen::VectorXd freqs(n_cols);
    Eigen::Index col = 0;
    for (const auto& s : counts.settings)
        for (Eigen::Index o = 0; o < s.counts.size(); ++o, ++col)
            freqs(col) = s.counts(o) / s.mean_n;
    if (col != n_cols) throw std::invalid_argument("linear_inversion: incomplete setting set");
    ComplexVector rho_vec = model.inversion_pinv * freqs.cast<Complex>();
    ComplexMatrix rho = Eigen::Map<ComplexMatrix>(rho_vec.data(), model.dim, model.dim);
    rho = hermitize(rho);
    double tr = rho.trace().real();
    if (std::abs(tr) < 1e-12) throw std::runtime_error("linear_inversion: vanishing trace");
    return rho / tr;
}

namespace detail {

struct LikelihoodWorkspace {
    const MeasurementModel* model = nullptr;
    Eigen::VectorXd counts;    // per column
    Eigen::VectorXd mean_n;    // per column
    ComplexMatrix y;           // scratch, dim x n_columns

    double log_likelihood(const ComplexMatrix& t) {
        y.noalias() = t * model->vectors;
        const double tau = t.squaredNorm();
        double ll = 0.0;
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            const double q = y.col(c).squaredNorm() / tau;
            const double mu = mean_n(c) * q;
            ll += counts(c) * std::log(std::max(mu, 1e-300)) - mu;
        }
        return ll;
    }

    /// Gradient w.r.t. the packed parameters, and the log-likelihood.
    double gradient(const ComplexMatrix& t, Eigen::VectorXd& grad_out) {
        y.noalias() = t * model->vectors;
        const double tau = t.squaredNorm();
        const Eigen::Index n_cols = y.cols();
        Eigen::VectorXd w(n_cols);
        double ll = 0.0;
        double w_dot_q = 0.0;
        for (Eigen::Index c = 0; c < n_cols; ++c) {
            const double q = y.col(c).squaredNorm() / tau;
            const double mu = mean_n(c) * q;
            ll += counts(c) * std::log(std::max(mu, 1e-300)) - mu;
            w(c) = counts(c) / std::max(q, 1e-300) - mean_n(c);
            w_dot_q += w(c) * q;
        }
        // A = V diag(w) V^dag; C = T A - Tr(A rho) T
        ComplexMatrix weighted = model->vectors * w.asDiagonal();
        ComplexMatrix ta(t.rows(), t.cols());
        ta.noalias() = y * weighted.adjoint();
        ComplexMatrix c_mat = ta - w_dot_q * t;
        c_mat *= 2.0 / tau;
        // project onto the lower-triangular support with real diagonal
        const Eigen::Index dim = t.rows();
        grad_out.resize(n_t_params(dim));
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                grad_out(k) = c_mat(i, j).real();
                grad_out(k + 1) = c_mat(i, j).imag();
                k += 2;
            }
            grad_out(k++) = c_mat(i, i).real();
        }
        return ll;
    }
};

}  // namespace detail

/// Maximum-likelihood state reconstruction over the Cholesky-style
/// parametrization, maximizing the Poissonian log-likelihood
/// sum_o [c_o log mu_o - mu_o] by L-BFGS gradient ascent with a backtracking
/// line search. The result is returned as a process matrix.
inline ReconstructionResult mle_reconstruct(const CountsTable& counts, int n_qubits,
                                            const MleOptions& opts = {}) {
    const auto& model = MeasurementModel::get(n_qubits);
    if (static_cast<int>(counts.settings.size()) != model.n_settings)
        throw std::invalid_argument("mle_reconstruct: incomplete setting set");

    detail::LikelihoodWorkspace ws;
    ws.model = &model;
    const Eigen::Index n_cols = model.vectors.cols();
    ws.counts.resize(n_cols);
    ws.mean_n.resize(n_cols);
    ws.y.resize(model.dim, n_cols);
    Eigen::Index col = 0;
    double total_counts = 0.0;
    for (const auto& s : counts.settings) {
        if (s.counts.size() != model.n_outcomes_per_setting)
            throw std::invalid_argument("mle_reconstruct: outcome count mismatch");
        for (Eigen::Index o = 0; o < s.counts.size(); ++o, ++col) {
            if (s.counts(o) < 0.0)
                throw std::invalid_argument("mle_reconstruct: negative count");
            ws.counts(col) = s.counts(o);
            ws.mean_n(col) = s.mean_n;
            total_counts += s.counts(o);
        }
    }
    if (total_counts <= 0.0) throw std::invalid_argument("mle_reconstruct: all counts are zero");

    const Eigen::Index dim = model.dim;
    ComplexMatrix rho0;
    if (opts.initial_rho) {
        rho0 = *opts.initial_rho;
        if (rho0.rows() != dim || rho0.cols() != dim)
            throw std::invalid_argument("mle_reconstruct: bad initial state dimension");
    } else {
        try {
            rho0 = project_to_density_matrix(linear_inversion_estimate(counts));
        } catch (const std::exception&) {
            rho0 = ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim);
        }
    }
    // small blend with the maximally mixed state keeps the Cholesky positive
    const double blend = 1e-8;
    rho0 = (1.0 - blend) * rho0 + blend * ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim);
    ComplexMatrix t;
    try {
        t = detail::t_from_positive_definite(hermitize(rho0));
    } catch (const std::exception&) {
        t = ComplexMatrix::Identity(dim, dim) / std::sqrt(static_cast<double>(dim));
    }
    t /= t.norm();

    Eigen::VectorXd theta = detail::pack_t(t);
    Eigen::VectorXd grad;
    double ll = ws.gradient(t, grad);

    // L-BFGS history for the ascent direction (two-loop recursion)
    const int memory = 10;
    std::vector<Eigen::VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;

    int iterations = 0;
    bool converged = false;
    int small_change_streak = 0;
    std::vector<double> trace;
    if (opts.record_trace) trace.push_back(ll);
    for (; iterations < opts.max_iterations; ++iterations) {
        const double grad_norm = grad.norm();
        if (grad_norm < opts.grad_tol) {
            converged = true;
            break;
        }

        Eigen::VectorXd direction = grad;
        if (!s_hist.empty()) {
            std::vector<double> alpha(s_hist.size());
            for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
                alpha[i] = rho_hist[i] * s_hist[i].dot(direction);
                direction -= alpha[i] * y_hist[i];
            }
            const auto& s_last = s_hist.back();
            const auto& y_last = y_hist.back();
            direction *= s_last.dot(y_last) / y_last.squaredNorm();
            for (size_t i = 0; i < s_hist.size(); ++i) {
                double beta = rho_hist[i] * y_hist[i].dot(direction);
                direction += (alpha[i] - beta) * s_hist[i];
            }
            if (direction.dot(grad) <= 0.0) direction = grad;  // keep an ascent direction
        }

        double step = s_hist.empty() ? 1.0 / (grad_norm + 1.0) : 1.0;
        const double slope = direction.dot(grad);
        bool accepted = false;
        Eigen::VectorXd trial;
        double trial_ll = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            trial = theta + step * direction;
            ComplexMatrix t_trial = detail::unpack_t(trial, dim);
            trial_ll = ws.log_likelihood(t_trial);
            if (trial_ll > ll + 1e-4 * step * slope || trial_ll > ll) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            converged = true;  // stationary at fp resolution
            break;
        }

        const double rel_change = (trial_ll - ll) / (std::abs(ll) + 1.0);
        small_change_streak = rel_change < opts.rel_ll_tol ? small_change_streak + 1 : 0;

        ComplexMatrix t_new = detail::unpack_t(trial, dim);
        t_new /= t_new.norm();  // gauge: the likelihood is scale invariant
        Eigen::VectorXd theta_new = detail::pack_t(t_new);
        Eigen::VectorXd grad_new;
        const double ll_new = ws.gradient(t_new, grad_new);
        if (opts.record_trace) trace.push_back(trial_ll);

        Eigen::VectorXd s_vec = theta_new - theta;
        Eigen::VectorXd y_vec = grad - grad_new;  // gradient of -L increases along s
        const double sy = s_vec.dot(y_vec);
        if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        theta = std::move(theta_new);
        grad = std::move(grad_new);
        ll = ll_new;

        if (small_change_streak >= 8) {
            converged = true;
            ++iterations;
            break;
        }
    }

    ComplexMatrix t_final = detail::unpack_t(theta, dim);
    ComplexMatrix rho = t_final.adjoint() * t_final;
    rho /= rho.trace().real();
    ReconstructionResult result;
    result.chi = chi_from_choi(rho, n_qubits);
    result.log_likelihood = ll;
    result.iterations = iterations;
    result.converged = converged;
    result.ll_trace = std::move(trace);
    return result;
}

struct NoisySimulation {
    ProcessMatrix noisy;
    ProcessMatrix ideal;
    ReconstructionResult reconstruction;
};

/// Full simulated tomography of one channel: Choi state, Born-rule outcome
/// distributions, Poissonian counts at mean k_factor * n_base per setting,
/// then maximum-likelihood reconstruction. Deterministic given the seed.
inline NoisySimulation simulate_noisy_chi(const ChannelSpec& spec, double k_factor, double n_base,
                                          uint64_t seed) {
    const int n = spec.n_qubits();
    ComplexMatrix choi = choi_state(spec);
    CountsTable counts = simulate_counts(choi, n, k_factor, n_base, seed);
    ReconstructionResult recon = mle_reconstruct(counts, n);
    NoisySimulation out;
    out.noisy = recon.chi;
    out.ideal = chi_from_choi(choi, n);
    out.reconstruction = std::move(recon);
    return out;
}

}  // namespace qpt
