#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "qpt/channels.hpp"
#include "qpt/process.hpp"
#include "test_helpers.hpp"

using namespace qpt;
using Catch::Approx;

namespace {

ComplexMatrix partial_trace_second(const ComplexMatrix& rho, Eigen::Index d) {
    ComplexMatrix out = ComplexMatrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index k = 0; k < d; ++k) out(i, j) += rho(i * d + k, j * d + k);
    return out;
}

ComplexMatrix partial_trace_first(const ComplexMatrix& rho, Eigen::Index d) {
    ComplexMatrix out = ComplexMatrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index k = 0; k < d; ++k) out(i, j) += rho(k * d + i, k * d + j);
    return out;
}

}  // namespace

TEST_CASE("pauli basis", "[quantum]") {
    auto one = pauli_basis(1);
    REQUIRE(one.size() == 4);
    CHECK(one[0].isApprox(ComplexMatrix::Identity(2, 2)));
    CHECK(one[3](0, 0) == Complex(1, 0));
    CHECK(one[3](1, 1) == Complex(-1, 0));
    CHECK(one[3](0, 1) == Complex(0, 0));

    auto two = pauli_basis(2);
    REQUIRE(two.size() == 16);
    // element 5 is sigma_x (x) sigma_x; written out by hand
    ComplexMatrix xx = ComplexMatrix::Zero(4, 4);
    xx(0, 3) = xx(1, 2) = xx(2, 1) = xx(3, 0) = 1.0;
    CHECK((two[5] - xx).cwiseAbs().maxCoeff() == 0.0);

    for (const auto& p : two) {
        CHECK(is_unitary(p));
        CHECK(is_hermitian(p));
    }
    CHECK_THROWS_AS(pauli_basis(3), std::invalid_argument);
}

TEST_CASE("maximally entangled state", "[quantum]") {
    ComplexMatrix bell = maximally_entangled_state(1);
    for (auto [i, j] : {std::pair{0, 0}, {0, 3}, {3, 0}, {3, 3}})
        CHECK(bell(i, j).real() == Approx(0.5).margin(1e-15));
    CHECK(bell.cwiseAbs().sum() == Approx(2.0).margin(1e-12));  // nothing else nonzero
    CHECK(bell.trace().real() == Approx(1.0).margin(1e-14));

    ComplexMatrix big = maximally_entangled_state(2);
    REQUIRE(big.rows() == 16);
    CHECK((big * big).trace().real() == Approx(1.0).margin(1e-12));  // purity

    ComplexMatrix half = ComplexMatrix::Identity(2, 2) / 2.0;
    CHECK(partial_trace_second(bell, 2).isApprox(half, 1e-12));
    CHECK(partial_trace_first(bell, 2).isApprox(half, 1e-12));
}

TEST_CASE("apply channel", "[quantum]") {
    std::mt19937_64 rng(7);
    SECTION("GAD with eta=0 acts as identity") {
        for (double gamma : {0.0, 0.3, 1.0}) {
            ComplexMatrix rho = test::random_density_matrix(rng, 2);
            auto spec = ChannelSpec::amplitude_damping(0.0, gamma);
            CHECK((apply_channel(spec, rho) - rho).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
    SECTION("fully depolarizing sends everything to the maximally mixed state") {
        ComplexMatrix rho = test::random_density_matrix(rng, 2);
        ComplexMatrix out = apply_channel(ChannelSpec::depolarizing(0.75), rho);
        CHECK(out.isApprox(ComplexMatrix::Identity(2, 2) / 2.0, 1e-12));
    }
    SECTION("CP at phi=0 is the identity") {
        ComplexMatrix rho = test::random_density_matrix(rng, 4);
        CHECK(apply_channel(ChannelSpec::controlled_phase(0.0), rho).isApprox(rho, 1e-14));
    }
    SECTION("trace preserved") {
        ComplexMatrix rho = test::random_density_matrix(rng, 2);
        auto out = apply_channel(ChannelSpec::amplitude_damping(0.4, 0.7), rho);
        CHECK(out.trace().real() == Approx(1.0).margin(1e-12));
    }
    SECTION("errors") {
        ComplexMatrix wrong = ComplexMatrix::Identity(4, 4) / 4.0;
        CHECK_THROWS_AS(apply_channel(ChannelSpec::depolarizing(0.2), wrong),
                        std::invalid_argument);
        ComplexMatrix not_a_state = ComplexMatrix::Identity(2, 2);  // trace 2
        CHECK_THROWS_AS(apply_channel(ChannelSpec::depolarizing(0.2), not_a_state),
                        std::invalid_argument);
    }
}

TEST_CASE("choi state", "[quantum]") {
    SECTION("DC chi is diagonal with probabilities (1-p, p/3, p/3, p/3)") {
        for (double p : {0.0, 0.3, 0.6, 0.75, 1.0}) {
            ProcessMatrix chi = analytic_chi(ChannelSpec::depolarizing(p));
            ComplexMatrix expect = ComplexMatrix::Zero(4, 4);
            expect(0, 0) = 1.0 - p;
            expect(1, 1) = expect(2, 2) = expect(3, 3) = p / 3.0;
            CHECK((chi.chi - expect).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
    SECTION("CP at phi=0 leaves the entangled projector") {
        ComplexMatrix choi = choi_state(ChannelSpec::controlled_phase(0.0));
        CHECK(choi.isApprox(maximally_entangled_state(2), 1e-14));
    }
    SECTION("GAD(eta=1, gamma=0) collapses the channel side to |0><0|") {
        ComplexMatrix choi = choi_state(ChannelSpec::amplitude_damping(1.0, 0.0));
        ComplexMatrix zero = ComplexMatrix::Zero(2, 2);
        zero(0, 0) = 1.0;
        CHECK(choi.isApprox(kron(zero, ComplexMatrix::Identity(2, 2) / 2.0), 1e-14));
    }
}

TEST_CASE("chi from choi", "[quantum]") {
    SECTION("identity channel gives chi = e0 e0^T") {
        ProcessMatrix chi = analytic_chi(ChannelSpec::depolarizing(0.0));
        ComplexMatrix expect = ComplexMatrix::Zero(4, 4);
        expect(0, 0) = 1.0;
        CHECK((chi.chi - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
    SECTION("DC at p=0.6") {
        ProcessMatrix chi = analytic_chi(ChannelSpec::depolarizing(0.6));
        CHECK(chi.chi(0, 0).real() == Approx(0.4).margin(1e-14));
        for (int i : {1, 2, 3}) CHECK(chi.chi(i, i).real() == Approx(0.2).margin(1e-14));
    }
    SECTION("round-trip is an isometry on random density matrices") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            int n = trial % 2 == 0 ? 1 : 2;
            ComplexMatrix rho = test::random_density_matrix(rng, n == 1 ? 4 : 16);
            ComplexMatrix back = choi_from_chi(chi_from_choi(rho, n));
            CHECK((back - rho).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SECTION("rejects non-density input") {
        CHECK_THROWS_AS(chi_from_choi(2.0 * ComplexMatrix::Identity(4, 4), 1),
                        std::invalid_argument);
    }
}

TEST_CASE("fidelity", "[quantum]") {
    std::mt19937_64 rng(13);
    SECTION("self fidelity is one") {
        for (int i = 0; i < 5; ++i) {
            ComplexMatrix rho = test::random_density_matrix(rng, 4);
            CHECK(fidelity(rho, rho) == Approx(1.0).margin(1e-10));
        }
    }
    SECTION("pure Bell state vs maximally mixed gives 1/4") {
        ProcessMatrix a = analytic_chi(ChannelSpec::depolarizing(0.0));
        ProcessMatrix b = analytic_chi(ChannelSpec::depolarizing(0.75));
        CHECK(fidelity(a, b) == Approx(0.25).margin(1e-12));
    }
    SECTION("agrees with the product-eigenvalue oracle") {
        ProcessMatrix a = analytic_chi(ChannelSpec::controlled_phase(0.0));
        ProcessMatrix b = analytic_chi(ChannelSpec::controlled_phase(std::numbers::pi));
        double via_sqrt = fidelity(a, b);
        double via_product = test::fidelity_product_eigenvalue_oracle(a.chi, b.chi);
        CHECK(via_sqrt == Approx(via_product).margin(1e-9));
        for (int i = 0; i < 20; ++i) {
            ComplexMatrix x = test::random_density_matrix(rng, 4);
            ComplexMatrix y = test::random_density_matrix(rng, 4);
            CHECK(fidelity(x, y) == Approx(test::fidelity_product_eigenvalue_oracle(x, y)).margin(1e-9));
        }
    }
    SECTION("symmetric in its arguments") {
        for (int i = 0; i < 10; ++i) {
            ComplexMatrix x = test::random_density_matrix(rng, 4);
            ComplexMatrix y = test::random_density_matrix(rng, 4);
            CHECK(fidelity(x, y) == Approx(fidelity(y, x)).margin(1e-9));
        }
    }
    SECTION("rejects matrices with genuinely negative eigenvalues") {
        ComplexMatrix bad = ComplexMatrix::Identity(4, 4);
        bad(0, 0) = -0.5;
        bad(1, 1) = 1.5;
        bad /= bad.trace().real();
        CHECK_THROWS_AS(fidelity(bad, ComplexMatrix::Identity(4, 4) / 4.0),
                        std::invalid_argument);
    }
}

TEST_CASE("channel family properties", "[quantum]") {
    SECTION("choi states are trace-one and PSD on a random parameter sweep") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int i = 0; i < 1000; ++i) {
            ChannelSpec spec = [&]() {
                switch (i % 4) {
                    case 0: return ChannelSpec::depolarizing(unit(rng));
                    case 1: return ChannelSpec::amplitude_damping(unit(rng), unit(rng));
                    case 2: return ChannelSpec::controlled_phase(unit(rng) * 2 * std::numbers::pi * 0.9999);
                    default: {
                        double a = unit(rng), b = unit(rng) * (1 - a), c = unit(rng) * (1 - a - b);
                        return ChannelSpec::pauli(1 - a - b - c, a, b, c);
                    }
                }
            }();
            ComplexMatrix choi = choi_state(spec);
            REQUIRE(std::abs(choi.trace().real() - 1.0) < 1e-12);
            REQUIRE(min_eigenvalue(hermitize(choi)) >= -1e-10);
        }
    }
    SECTION("GAD Kraus completeness on a 0.05 grid") {
        for (int a = 0; a <= 20; ++a) {
            for (int b = 0; b <= 20; ++b) {
                auto k = gad_kraus(a * 0.05, b * 0.05);
                ComplexMatrix sum = ComplexMatrix::Zero(2, 2);
                for (const auto& m : k) sum += m.adjoint() * m;
                REQUIRE((sum - ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
    SECTION("fidelity decreases monotonically with DC parameter distance") {
        std::vector<double> grid;
        for (int i = 0; i <= 15; ++i) grid.push_back(i * 0.05);
        for (double p : grid) {
            ProcessMatrix base = analytic_chi(ChannelSpec::depolarizing(p));
            double prev = 1.0;
            for (double q : grid) {
                if (q <= p) continue;
                double f = fidelity(base, analytic_chi(ChannelSpec::depolarizing(q)));
                REQUIRE(f < prev);
                prev = f;
            }
            prev = 1.0;
            for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
                if (*it >= p) continue;
                double f = fidelity(base, analytic_chi(ChannelSpec::depolarizing(*it)));
                REQUIRE(f < prev);
                prev = f;
            }
        }
    }
    SECTION("uniform Pauli channel equals DC at p=3/4") {
        ComplexMatrix a = choi_state(ChannelSpec::pauli(0.25, 0.25, 0.25, 0.25));
        ComplexMatrix b = choi_state(ChannelSpec::depolarizing(0.75));
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("spec validation") {
        CHECK_THROWS_AS(ChannelSpec::depolarizing(1.5), std::invalid_argument);
        CHECK_THROWS_AS(ChannelSpec::pauli(0.5, 0.5, 0.5, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(ChannelSpec::controlled_phase(-0.1), std::invalid_argument);
        CHECK(ChannelSpec::depolarizing(0.3).pauli_probabilities()[0] == Approx(0.7));
    }
}
