#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qpt/channels.hpp"
#include "qpt/matrix.hpp"
#include "qpt/rng.hpp"

namespace qpt {

enum class LocalBasis : uint8_t { X = 0, Y = 1, Z = 2 };

inline char basis_letter(LocalBasis b) { return "XYZ"[static_cast<int>(b)]; }

/// One local measurement setting: a basis choice per qubit of the Choi state
/// (2 qubits for single-qubit channels, 4 for two-qubit ones).
struct MeasurementSetting {
    std::vector<LocalBasis> bases;

    int n_total_qubits() const { return static_cast<int>(bases.size()); }
    int n_outcomes() const { return 1 << bases.size(); }
};

/// Full local-Pauli set: 3^(2n) settings, lexicographic in (X,Y,Z) per qubit.
inline std::vector<MeasurementSetting> enumerate_settings(int n_qubits) {
    if (n_qubits != 1 && n_qubits != 2)
        throw std::invalid_argument("enumerate_settings: n_qubits must be 1 or 2");
    const int total_qubits = 2 * n_qubits;
    int count = 1;
    for (int q = 0; q < total_qubits; ++q) count *= 3;
    std::vector<MeasurementSetting> out;
    out.reserve(count);
    for (int idx = 0; idx < count; ++idx) {
        MeasurementSetting s;
        s.bases.resize(total_qubits);
        int rem = idx;
        for (int q = total_qubits - 1; q >= 0; --q) {
            s.bases[q] = static_cast<LocalBasis>(rem % 3);
            rem /= 3;
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Normalized eigenvector of the local basis observable; outcome 0 is the +1
/// eigenstate, outcome 1 the -1 eigenstate.
inline ComplexVector basis_eigenvector(LocalBasis b, int outcome) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    ComplexVector v(2);
    switch (b) {
        case LocalBasis::X:
            v << inv_sqrt2, (outcome == 0 ? inv_sqrt2 : -inv_sqrt2);
            break;
        case LocalBasis::Y:
            v << inv_sqrt2, Complex(0.0, outcome == 0 ? inv_sqrt2 : -inv_sqrt2);
            break;
        case LocalBasis::Z:
            v = ComplexVector::Zero(2);
            v(outcome) = 1.0;
            break;
    }
    return v;
}

/// Product eigenvector for a full outcome bit pattern (qubit 0 = MSB).
inline ComplexVector outcome_vector(const MeasurementSetting& setting, int outcome) {
    const int n = setting.n_total_qubits();
    ComplexVector v = basis_eigenvector(setting.bases[0], (outcome >> (n - 1)) & 1);
    for (int q = 1; q < n; ++q)
        v = kron(v, basis_eigenvector(setting.bases[q], (outcome >> (n - 1 - q)) & 1));
    return v;
}

/// Born-rule outcome distribution of a setting on a state.
inline Eigen::VectorXd outcome_probabilities(const ComplexMatrix& rho,
                                             const MeasurementSetting& setting) {
    const int n_out = setting.n_outcomes();
    if (rho.rows() != n_out || rho.cols() != n_out)
        throw std::invalid_argument("outcome_probabilities: dimension mismatch");
    Eigen::VectorXd probs(n_out);
    for (int o = 0; o < n_out; ++o) {
        ComplexVector v = outcome_vector(setting, o);
        probs(o) = std::max(0.0, (v.adjoint() * rho * v)(0, 0).real());
    }
    return probs;
}

/// Independent Poisson counts, one per outcome, with per-outcome mean
/// mean_n * prob. Deterministic given the seed.
inline Eigen::VectorXd sample_counts(const Eigen::VectorXd& probs, double mean_n, uint64_t seed) {
    if (mean_n <= 0.0) throw std::invalid_argument("sample_counts: mean_n must be > 0");
    Rng rng = make_rng(seed);
    Eigen::VectorXd counts(probs.size());
    for (Eigen::Index i = 0; i < probs.size(); ++i)
        counts(i) = static_cast<double>(poisson_draw(rng, mean_n * probs(i)));
    return counts;
}

struct SettingCounts {
    double mean_n = 0.0;          // target mean counts for this setting
    Eigen::VectorXd counts;       // one entry per outcome; integral when sampled
};

/// Counts for a complete setting set, plus the metadata needed to regenerate
/// them. Counts are stored as doubles so expectation-valued (noiseless)
/// tables can flow through the same reconstruction path; sampled tables hold
/// integers.
struct CountsTable {
    int n_qubits = 1;
    double n_base = 0.0;
    double k_factor = 0.0;
    uint64_t seed = 0;
    std::vector<SettingCounts> settings;
};

/// Simulated tomography counts of a state: per-setting Poisson sampling with
/// per-setting sub-seeds derived from the table seed.
inline CountsTable simulate_counts(const ComplexMatrix& rho, int n_qubits, double k_factor,
                                   double n_base, uint64_t seed) {
    if (k_factor <= 0.0 || n_base <= 0.0)
        throw std::invalid_argument("simulate_counts: k_factor and n_base must be > 0");
    const auto settings = enumerate_settings(n_qubits);
    CountsTable table{n_qubits, n_base, k_factor, seed, {}};
    table.settings.reserve(settings.size());
    const double mean_n = k_factor * n_base;
    for (size_t s = 0; s < settings.size(); ++s) {
        Eigen::VectorXd probs = outcome_probabilities(rho, settings[s]);
        table.settings.push_back({mean_n, sample_counts(probs, mean_n, derive_seed(seed, s))});
    }
    return table;
}

/// Expected (noiseless) counts: the infinite-statistics limit used by the
/// reconstruction oracle tests.
inline CountsTable expected_counts(const ComplexMatrix& rho, int n_qubits, double k_factor,
                                   double n_base) {
    const auto settings = enumerate_settings(n_qubits);
    CountsTable table{n_qubits, n_base, k_factor, 0, {}};
    const double mean_n = k_factor * n_base;
    for (const auto& s : settings)
        table.settings.push_back({mean_n, mean_n * outcome_probabilities(rho, s)});
    return table;
}

}  // namespace qpt
