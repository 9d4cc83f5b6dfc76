#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "qpt/network.hpp"
#include "qpt/train.hpp"

using namespace qpt;
using Catch::Approx;

namespace {

/// Independent nested-loop cross-correlation oracle.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, Eigen::Index k) {
    const Eigen::Index n = x.dim(0), ci_n = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const Eigen::Index co_n = w.dim(0);
    auto [pt, pb] = same_padding(k);
    (void)pb;
    Tensor y({n, co_n, h, wd});
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index co = 0; co < co_n; ++co)
            for (Eigen::Index oh = 0; oh < h; ++oh)
                for (Eigen::Index ow = 0; ow < wd; ++ow) {
                    double acc = b.numel() ? b.data(co) : 0.0;
                    for (Eigen::Index ci = 0; ci < ci_n; ++ci)
                        for (Eigen::Index kh = 0; kh < k; ++kh)
                            for (Eigen::Index kw = 0; kw < k; ++kw) {
                                Eigen::Index ih = oh + kh - pt, iw = ow + kw - pt;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wd) continue;
                                acc += w.data(((co * ci_n + ci) * k + kh) * k + kw) *
                                       x.data(((i * ci_n + ci) * h + ih) * wd + iw);
                            }
                    y.data(((i * co_n + co) * h + oh) * wd + ow) = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d semantics", "[nn]") {
    std::mt19937_64 rng(21);
    SECTION("all-zero kernel maps anything to zero") {
        Conv2d conv(1, 1, 2);
        Tensor x = test::random_tensor({1, 1, 4, 4}, rng);
        CHECK(conv.forward(x, false).data.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("1x1 identity kernel is the identity") {
        Conv2d conv(1, 1, 1);
        conv.parameters()[0]->data(0) = 1.0;
        Tensor x = test::random_tensor({2, 1, 4, 4}, rng);
        Tensor y = conv.forward(x, false);
        CHECK((y.data - x.data).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("matches the nested-loop oracle") {
        for (int trial = 0; trial < 10; ++trial) {
            Conv2d conv(2, 3, 2);
            conv.init(rng);
            Tensor x = test::random_tensor({2, 2, 4, 4}, rng);
            Tensor y = conv.forward(x, false);
            Tensor expect = conv_oracle(x, *conv.parameters()[0], *conv.parameters()[1], 2);
            REQUIRE((y.data - expect.data).cwiseAbs().maxCoeff() < 1e-12);
        }
        // the CP geometry: k=4 on 16x16 images
        Conv2d conv(2, 4, 4);
        conv.init(rng);
        Tensor x = test::random_tensor({1, 2, 16, 16}, rng);
        Tensor y = conv.forward(x, false);
        Tensor expect = conv_oracle(x, *conv.parameters()[0], *conv.parameters()[1], 4);
        REQUIRE((y.data - expect.data).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("shape errors are rejected") {
        Conv2d conv(2, 3, 2);
        Tensor x = test::random_tensor({1, 3, 4, 4}, rng);
        CHECK_THROWS_AS(conv.forward(x, false), std::invalid_argument);
    }
}

TEST_CASE("conv transpose adjointness", "[nn]") {
    std::mt19937_64 rng(22);
    SECTION("inner products agree for 100 random draws") {
        for (int trial = 0; trial < 100; ++trial) {
            const Eigen::Index k = trial % 2 == 0 ? 2 : 4;
            const Eigen::Index size = trial % 2 == 0 ? 4 : 8;
            Conv2d conv(2, 3, k);
            conv.init(rng);
            conv.parameters()[1]->data.setZero();  // adjointness is about the linear part
            ConvTranspose2d convt(3, 2, k);
            convt.parameters()[0]->data = conv.parameters()[0]->data;  // shared kernel

            Tensor x = test::random_tensor({1, 2, size, size}, rng);
            Tensor y = test::random_tensor({1, 3, size, size}, rng);
            double lhs = conv.forward(x, false).data.dot(y.data);
            double rhs = x.data.dot(convt.forward(y, false).data);
            REQUIRE(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
    SECTION("zero weights give zero output") {
        ConvTranspose2d convt(3, 2, 2);
        Tensor y = test::random_tensor({1, 3, 4, 4}, rng);
        CHECK(convt.forward(y, false).data.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("same-padded transpose preserves the 4x4 shape") {
        ConvTranspose2d convt(3, 2, 2);
        convt.init(rng);
        Tensor y = test::random_tensor({2, 3, 4, 4}, rng);
        Tensor out = convt.forward(y, false);
        CHECK(out.shape == std::vector<Eigen::Index>{2, 2, 4, 4});
    }
}

TEST_CASE("batchnorm semantics", "[nn]") {
    std::mt19937_64 rng(23);
    SECTION("constant channel collapses to the shift parameter") {
        BatchNorm2d bn(2, 0.1, 1e-5);
        bn.parameters()[1]->data << 0.7, -0.3;  // beta
        Tensor x({4, 2, 3, 3});
        x.data.setConstant(5.0);
        Tensor y = bn.forward(x, true);
        for (Eigen::Index i = 0; i < 4; ++i) {
            CHECK(y.data(i * 18) == Approx(0.7).margin(1e-9));
            CHECK(y.data(i * 18 + 9) == Approx(-0.3).margin(1e-9));
        }
    }
    SECTION("output batch statistics match scale and shift") {
        BatchNorm2d bn(1, 0.1, 1e-15);
        bn.parameters()[0]->data << 1.7;
        bn.parameters()[1]->data << 0.4;
        Tensor x = test::random_tensor({8, 1, 4, 4}, rng, 2.0);
        Tensor y = bn.forward(x, true);
        const double mean = y.data.mean();
        const double var = (y.data.array() - mean).square().mean();
        CHECK(mean == Approx(0.4).margin(1e-9));
        CHECK(std::sqrt(var) == Approx(1.7).margin(1e-9));
    }
    SECTION("training mode requires batch of at least 2") {
        BatchNorm2d bn(1);
        Tensor x = test::random_tensor({1, 1, 4, 4}, rng);
        CHECK_THROWS_AS(bn.forward(x, true), std::invalid_argument);
        CHECK_NOTHROW(bn.forward(x, false));
    }
    SECTION("inference uses running statistics") {
        BatchNorm2d bn(1, 0.5, 1e-5);
        Tensor x = test::random_tensor({16, 1, 2, 2}, rng);
        for (int i = 0; i < 60; ++i) bn.forward(x, true);  // converge running stats
        Tensor y_inf = bn.forward(x, false);
        Tensor y_train = bn.forward(x, true);
        // differs only by the biased/unbiased variance ratio of the batch
        CHECK((y_inf.data - y_train.data).cwiseAbs().maxCoeff() < 0.05);
    }
}

TEST_CASE("relu dense flatten semantics", "[nn]") {
    std::mt19937_64 rng(24);
    SECTION("relu clips negatives and passes positives") {
        ReLU relu;
        Tensor x({1, 4});
        x.data << -2.0, -0.5, 0.5, 2.0;
        Tensor y = relu.forward(x, true);
        CHECK(y.data(0) == 0.0);
        CHECK(y.data(1) == 0.0);
        CHECK(y.data(2) == 0.5);
        CHECK(y.data(3) == 2.0);
    }
    SECTION("dense with identity weights and zero bias is the identity") {
        Dense dense(3, 3);
        MapRM w(dense.parameters()[0]->data.data(), 3, 3);
        w.setIdentity();
        Tensor x = test::random_tensor({5, 3}, rng);
        CHECK((dense.forward(x, false).data - x.data).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("flatten and reshape preserve data order") {
        Flatten flat;
        Reshape reshape(2, 3, 4);
        Tensor x = test::random_tensor({2, 2, 3, 4}, rng);
        Tensor f = flat.forward(x, false);
        CHECK(f.shape == std::vector<Eigen::Index>{2, 24});
        CHECK(f.data == x.data);
        Tensor back = reshape.forward(f, false);
        CHECK(back.shape == x.shape);
        CHECK(back.data == x.data);
    }
    SECTION("non-finite input is rejected at the layer boundary") {
        Dense dense(2, 2);
        Tensor x({1, 2});
        x.data << 1.0, std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(dense.forward(x, false), std::invalid_argument);
    }
}

TEST_CASE("mse loss", "[nn]") {
    std::mt19937_64 rng(25);
    SECTION("zero for equal tensors") {
        Tensor a = test::random_tensor({4, 3}, rng);
        auto [loss, grad] = mse_loss(a, a);
        CHECK(loss == 0.0);
        CHECK(grad.data.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("all-ones difference averages to one") {
        Tensor pred({8, 5});
        pred.data.setOnes();
        Tensor target({8, 5});
        auto [loss, grad] = mse_loss(pred, target);
        CHECK(loss == Approx(1.0));
        CHECK(grad.data(0) == Approx(2.0 / 40.0));
    }
    SECTION("gradient matches central differences") {
        Tensor pred = test::random_tensor({3, 4}, rng);
        Tensor target = test::random_tensor({3, 4}, rng);
        auto [loss, grad] = mse_loss(pred, target);
        (void)loss;
        const double eps = 1e-6;
        for (Eigen::Index i = 0; i < pred.numel(); ++i) {
            Tensor p = pred, m = pred;
            p.data(i) += eps;
            m.data(i) -= eps;
            double numeric = (mse_loss(p, target).first - mse_loss(m, target).first) / (2 * eps);
            REQUIRE(std::abs(grad.data(i) - numeric) < 1e-8);
        }
    }
    SECTION("shape mismatch") {
        Tensor a({2, 2}), b({2, 3});
        CHECK_THROWS_AS(mse_loss(a, b), std::invalid_argument);
    }
}

TEST_CASE("layer gradients match finite differences", "[nn]") {
    std::mt19937_64 rng(26);
    SECTION("conv2d") {
        for (int i = 0; i < 20; ++i) {
            Conv2d conv(2, 3, i % 2 ? 2 : 4);
            conv.init(rng);
            double err = test::check_layer_gradients(conv, test::random_tensor({3, 2, 4, 4}, rng), rng);
            REQUIRE(err < 1e-5);
        }
    }
    SECTION("conv transpose") {
        for (int i = 0; i < 20; ++i) {
            ConvTranspose2d convt(3, 2, i % 2 ? 2 : 4);
            convt.init(rng);
            double err =
                test::check_layer_gradients(convt, test::random_tensor({3, 3, 4, 4}, rng), rng);
            REQUIRE(err < 1e-5);
        }
    }
    SECTION("batchnorm training mode") {
        for (int i = 0; i < 20; ++i) {
            BatchNorm2d bn(2);
            Tensor x = test::random_tensor({4, 2, 4, 4}, rng, 1.5);
            double err = test::check_layer_gradients(bn, x, rng);
            REQUIRE(err < 1e-5);
        }
    }
    SECTION("dense and relu") {
        for (int i = 0; i < 20; ++i) {
            Dense dense(8, 5);
            dense.init(rng);
            REQUIRE(test::check_layer_gradients(dense, test::random_tensor({4, 8}, rng), rng) < 1e-5);
            ReLU relu;
            REQUIRE(test::check_layer_gradients(relu, test::random_tensor({4, 6}, rng), rng) < 1e-5);
        }
    }
    SECTION("parallel heads") {
        for (int i = 0; i < 10; ++i) {
            FfnnConfig cfg;
            cfg.input_dim = 6;
            cfg.g = 2;
            cfg.branches = 2;
            Network net = build_ffnn(cfg);
            net.init(1000 + i);
            Tensor x = test::random_tensor({4, 6}, rng);
            Tensor out = net.forward(x, true);
            REQUIRE(out.shape == std::vector<Eigen::Index>{4, 2});
            auto [loss, grad] = mse_loss(out, test::random_tensor(out.shape, rng));
            (void)loss;
            net.zero_gradients();
            Tensor gx = net.backward(grad);
            CHECK(gx.shape == x.shape);
            CHECK(gx.all_finite());
        }
    }
    SECTION("full autoencoder end to end") {
        AutoencoderConfig cfg;
        cfg.image_size = 4;
        cfg.kernel = 2;
        cfg.latent = 8;
        cfg.channels = {4, 6, 8};
        Network net = build_autoencoder(cfg);
        net.init(99);
        Tensor x = test::random_tensor({3, 2, 4, 4}, rng);
        Tensor out = net.forward(x, true);
        REQUIRE(out.shape == x.shape);
        auto [loss, grad] = mse_loss(out, test::random_tensor(out.shape, rng));
        (void)loss;
        net.zero_gradients();
        Tensor gx = net.backward(grad);
        CHECK(gx.shape == x.shape);
        CHECK(gx.all_finite());
    }
}
