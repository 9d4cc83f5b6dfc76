#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "qpt/matrix.hpp"

namespace qpt {

enum class ChannelFamily { DC, GAD, CP, Pauli };

inline const char* family_name(ChannelFamily f) {
    switch (f) {
        case ChannelFamily::DC: return "dc";
        case ChannelFamily::GAD: return "gad";
        case ChannelFamily::CP: return "cp";
        case ChannelFamily::Pauli: return "pauli";
    }
    throw std::logic_error("family_name: bad tag");
}

inline ChannelFamily family_from_name(const std::string& s) {
    if (s == "dc") return ChannelFamily::DC;
    if (s == "gad") return ChannelFamily::GAD;
    if (s == "cp") return ChannelFamily::CP;
    if (s == "pauli") return ChannelFamily::Pauli;
    throw std::invalid_argument("unknown channel family: " + s);
}

/// Tagged parameterized channel. DC mixes the state with white noise over the
/// Pauli operators, GAD is the two-parameter amplitude damping family, CP the
/// two-qubit controlled-phase gate, Pauli an arbitrary single-qubit Pauli
/// channel with explicit probabilities.
class ChannelSpec {
  public:
    static ChannelSpec depolarizing(double p) {
        require_range(p, 0.0, 1.0, "DC p");
        return ChannelSpec(ChannelFamily::DC, {p, 0, 0, 0});
    }
    static ChannelSpec amplitude_damping(double eta, double gamma) {
        require_range(eta, 0.0, 1.0, "GAD eta");
        require_range(gamma, 0.0, 1.0, "GAD gamma");
        return ChannelSpec(ChannelFamily::GAD, {eta, gamma, 0, 0});
    }
    static ChannelSpec controlled_phase(double phi) {
        if (!(phi >= 0.0 && phi < 2.0 * std::numbers::pi))
            throw std::invalid_argument("CP phi must lie in [0, 2*pi)");
        return ChannelSpec(ChannelFamily::CP, {phi, 0, 0, 0});
    }
    static ChannelSpec pauli(double p0, double p1, double p2, double p3) {
        for (double p : {p0, p1, p2, p3})
            if (!(p >= 0.0)) throw std::invalid_argument("Pauli probabilities must be >= 0");
        if (std::abs(p0 + p1 + p2 + p3 - 1.0) > 1e-12)
            throw std::invalid_argument("Pauli probabilities must sum to 1");
        return ChannelSpec(ChannelFamily::Pauli, {p0, p1, p2, p3});
    }

    ChannelFamily family() const { return family_; }
    int n_qubits() const { return family_ == ChannelFamily::CP ? 2 : 1; }
    /// Dimension of states the channel acts on.
    Eigen::Index dim() const { return Eigen::Index{1} << n_qubits(); }

    int n_parameters() const { return family_ == ChannelFamily::GAD ? 2 : 1; }
    /// The estimation-target parameters: {p}, {eta,gamma}, {phi}. For Pauli
    /// channels this is the total flip probability p1+p2+p3, the quantity a
    /// DC-family estimator is asked to recover.
    std::vector<double> parameters() const {
        switch (family_) {
            case ChannelFamily::DC:
            case ChannelFamily::CP: return {raw_[0]};
            case ChannelFamily::GAD: return {raw_[0], raw_[1]};
            case ChannelFamily::Pauli: return {raw_[1] + raw_[2] + raw_[3]};
        }
        throw std::logic_error("parameters: bad tag");
    }

    /// Pauli-operator probabilities (p0..p3) for DC and Pauli channels.
    std::array<double, 4> pauli_probabilities() const {
        if (family_ == ChannelFamily::DC) {
            double p = raw_[0];
            return {1.0 - p, p / 3.0, p / 3.0, p / 3.0};
        }
        if (family_ == ChannelFamily::Pauli) return raw_;
        throw std::logic_error("pauli_probabilities: not a Pauli-type channel");
    }

    double dc_p() const { return require(ChannelFamily::DC), raw_[0]; }
    double gad_eta() const { return require(ChannelFamily::GAD), raw_[0]; }
    double gad_gamma() const { return require(ChannelFamily::GAD), raw_[1]; }
    double cp_phi() const { return require(ChannelFamily::CP), raw_[0]; }

    const std::array<double, 4>& raw() const { return raw_; }

    bool operator==(const ChannelSpec&) const = default;

  private:
    ChannelSpec(ChannelFamily f, std::array<double, 4> raw) : family_(f), raw_(raw) {}
    void require(ChannelFamily f) const {
        if (family_ != f) throw std::logic_error("ChannelSpec: wrong family accessor");
    }
    static void require_range(double v, double lo, double hi, const char* what) {
        if (!(v >= lo && v <= hi))
            throw std::invalid_argument(std::string(what) + " out of range");
    }

    ChannelFamily family_;
    std::array<double, 4> raw_;
};

/// Single-qubit Pauli matrices in the fixed order 1, X, Y, Z.
inline const std::array<ComplexMatrix, 4>& single_qubit_paulis() {
    static const std::array<ComplexMatrix, 4> paulis = [] {
        std::array<ComplexMatrix, 4> p;
        const Complex i{0.0, 1.0};
        p[0] = ComplexMatrix::Identity(2, 2);
        p[1] = ComplexMatrix{{0, 1}, {1, 0}};
        p[2] = ComplexMatrix{{0, -i}, {i, 0}};
        p[3] = ComplexMatrix{{1, 0}, {0, -1}};
        return p;
    }();
    return paulis;
}

/// Pauli operator basis: [1,X,Y,Z] for one qubit, the 16 lexicographic tensor
/// products (11, 1X, ..., ZZ) for two.
inline std::vector<ComplexMatrix> pauli_basis(int n_qubits) {
    const auto& p1 = single_qubit_paulis();
    if (n_qubits == 1) return {p1.begin(), p1.end()};
    if (n_qubits == 2) {
        std::vector<ComplexMatrix> out;
        out.reserve(16);
        for (const auto& a : p1)
            for (const auto& b : p1) out.push_back(kron(a, b));
        return out;
    }
    throw std::invalid_argument("pauli_basis: n_qubits must be 1 or 2");
}

/// (1/sqrt(d)) sum_k |k>|k> for d = 2^n_qubits.
inline ComplexVector maximally_entangled_vector(int n_qubits) {
    if (n_qubits != 1 && n_qubits != 2)
        throw std::invalid_argument("maximally_entangled_vector: n_qubits must be 1 or 2");
    const Eigen::Index d = Eigen::Index{1} << n_qubits;
    ComplexVector v = ComplexVector::Zero(d * d);
    for (Eigen::Index k = 0; k < d; ++k) v(k * d + k) = 1.0 / std::sqrt(static_cast<double>(d));
    return v;
}

/// Projector onto the maximally entangled state of 2*n_qubits qubits.
inline ComplexMatrix maximally_entangled_state(int n_qubits) {
    ComplexVector v = maximally_entangled_vector(n_qubits);
    return v * v.adjoint();
}

/// GAD Kraus operators K0..K3 for damping eta and excitation bias gamma.
inline std::array<ComplexMatrix, 4> gad_kraus(double eta, double gamma) {
    std::array<ComplexMatrix, 4> k;
    for (auto& m : k) m = ComplexMatrix::Zero(2, 2);
    k[0](0, 0) = std::sqrt(1.0 - gamma);
    k[0](1, 1) = std::sqrt(1.0 - gamma) * std::sqrt(1.0 - eta);
    k[1](0, 1) = std::sqrt(eta * (1.0 - gamma));
    k[2](0, 0) = std::sqrt(gamma) * std::sqrt(1.0 - eta);
    k[2](1, 1) = std::sqrt(gamma);
    k[3](1, 0) = std::sqrt(eta * gamma);
    return k;
}

/// The controlled-phase unitary diag(1, 1, 1, e^{-i phi}).
inline ComplexMatrix cp_unitary(double phi) {
    ComplexMatrix u = ComplexMatrix::Identity(4, 4);
    u(3, 3) = std::exp(Complex(0.0, -phi));
    return u;
}

/// Kraus operators of any supported channel.
inline std::vector<ComplexMatrix> kraus_operators(const ChannelSpec& spec) {
    switch (spec.family()) {
        case ChannelFamily::DC:
        case ChannelFamily::Pauli: {
            auto probs = spec.pauli_probabilities();
            const auto& paulis = single_qubit_paulis();
            std::vector<ComplexMatrix> k;
            for (int i = 0; i < 4; ++i) k.push_back(std::sqrt(probs[i]) * paulis[i]);
            return k;
        }
        case ChannelFamily::GAD: {
            auto k = gad_kraus(spec.gad_eta(), spec.gad_gamma());
            return {k.begin(), k.end()};
        }
        case ChannelFamily::CP: return {cp_unitary(spec.cp_phi())};
    }
    throw std::logic_error("kraus_operators: bad tag");
}

/// Applies the channel to a density matrix: sum_i K_i rho K_i^dag.
inline ComplexMatrix apply_channel(const ChannelSpec& spec, const ComplexMatrix& rho) {
    if (rho.rows() != spec.dim() || rho.cols() != spec.dim())
        throw std::invalid_argument("apply_channel: dimension mismatch");
    if (!is_density_matrix(rho, 1e-8))
        throw std::invalid_argument("apply_channel: input is not a density matrix");
    ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
    for (const auto& k : kraus_operators(spec)) out += k * rho * k.adjoint();
    return out;
}

/// Choi state (Gamma x 1)[|phi+><phi+|]: the channel applied to the first half
/// of a maximally entangled pair.
inline ComplexMatrix choi_state(const ChannelSpec& spec) {
    const int n = spec.n_qubits();
    const Eigen::Index d = spec.dim();
    ComplexVector bell = maximally_entangled_vector(n);
    ComplexMatrix id = ComplexMatrix::Identity(d, d);
    ComplexMatrix out = ComplexMatrix::Zero(d * d, d * d);
    for (const auto& k : kraus_operators(spec)) {
        ComplexVector w = kron(k, id) * bell;
        out += w * w.adjoint();
    }
    return out;
}

}  // namespace qpt
