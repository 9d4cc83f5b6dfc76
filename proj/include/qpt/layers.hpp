#pragma once

#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpt/tensor.hpp"

namespace qpt {

using Json = nlohmann::json;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

namespace nnk {

/// Geometry of a cross-correlation: maps (in_ch, H, W) to (out_ch, out_h, out_w).
struct ConvGeom {
    Eigen::Index in_ch, out_ch, k, stride, pad_top, pad_left, pad_bottom, pad_right;

    Eigen::Index out_size(Eigen::Index in, Eigen::Index pad_a, Eigen::Index pad_b) const {
        Eigen::Index span = in + pad_a + pad_b - k;
        if (span < 0 || span % stride != 0)
            throw std::invalid_argument("conv: input size incompatible with kernel/stride/padding");
        return span / stride + 1;
    }
};

/// im2col for one sample: column c = (oh*out_w + ow), row r = ((ci*k + kh)*k + kw).
inline void im2col(const double* x, Eigen::Index h, Eigen::Index w, const ConvGeom& g,
                   Eigen::Index out_h, Eigen::Index out_w, Eigen::MatrixXd& col) {
    const Eigen::Index rows = g.in_ch * g.k * g.k;
    col.resize(rows, out_h * out_w);
    for (Eigen::Index oh = 0; oh < out_h; ++oh) {
        for (Eigen::Index ow = 0; ow < out_w; ++ow) {
            double* dst = col.col(oh * out_w + ow).data();
            for (Eigen::Index ci = 0; ci < g.in_ch; ++ci) {
                const double* plane = x + ci * h * w;
                for (Eigen::Index kh = 0; kh < g.k; ++kh) {
                    const Eigen::Index ih = oh * g.stride + kh - g.pad_top;
                    for (Eigen::Index kw = 0; kw < g.k; ++kw) {
                        const Eigen::Index iw = ow * g.stride + kw - g.pad_left;
                        *dst++ = (ih >= 0 && ih < h && iw >= 0 && iw < w) ? plane[ih * w + iw] : 0.0;
                    }
                }
            }
        }
    }
}

/// Scatter-add adjoint of im2col.
inline void col2im_add(const Eigen::MatrixXd& col, Eigen::Index h, Eigen::Index w,
                       const ConvGeom& g, Eigen::Index out_h, Eigen::Index out_w, double* x) {
    for (Eigen::Index oh = 0; oh < out_h; ++oh) {
        for (Eigen::Index ow = 0; ow < out_w; ++ow) {
            const double* src = col.col(oh * out_w + ow).data();
            for (Eigen::Index ci = 0; ci < g.in_ch; ++ci) {
                double* plane = x + ci * h * w;
                for (Eigen::Index kh = 0; kh < g.k; ++kh) {
                    const Eigen::Index ih = oh * g.stride + kh - g.pad_top;
                    for (Eigen::Index kw = 0; kw < g.k; ++kw) {
                        const Eigen::Index iw = ow * g.stride + kw - g.pad_left;
                        if (ih >= 0 && ih < h && iw >= 0 && iw < w) plane[ih * w + iw] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}

/// y[n,co,:,:] = W * col(x[n]) + b. Weights packed (out_ch, in_ch*k*k) row-major.
inline Tensor conv_forward(const Tensor& x, const Tensor& weights, const Tensor* bias,
                           const ConvGeom& g) {
    const Eigen::Index n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const Eigen::Index out_h = g.out_size(h, g.pad_top, g.pad_bottom);
    const Eigen::Index out_w = g.out_size(w, g.pad_left, g.pad_right);
    Tensor y({n, g.out_ch, out_h, out_w});
    ConstMapRM w_mat(weights.data.data(), g.out_ch, g.in_ch * g.k * g.k);
    Eigen::MatrixXd col;
    for (Eigen::Index i = 0; i < n; ++i) {
        im2col(x.data.data() + i * g.in_ch * h * w, h, w, g, out_h, out_w, col);
        MapRM y_mat(y.data.data() + i * g.out_ch * out_h * out_w, g.out_ch, out_h * out_w);
        y_mat.noalias() = w_mat * col;
        if (bias)
            for (Eigen::Index co = 0; co < g.out_ch; ++co) y_mat.row(co).array() += bias->data(co);
    }
    return y;
}

/// Gradient w.r.t. the conv input; the exact adjoint of conv_forward (no bias).
inline Tensor conv_backward_input(const Tensor& gy, const Tensor& weights, const ConvGeom& g,
                                  Eigen::Index in_h, Eigen::Index in_w) {
    const Eigen::Index n = gy.dim(0);
    const Eigen::Index out_h = gy.dim(2), out_w = gy.dim(3);
    Tensor gx({n, g.in_ch, in_h, in_w});
    ConstMapRM w_mat(weights.data.data(), g.out_ch, g.in_ch * g.k * g.k);
    Eigen::MatrixXd col;
    for (Eigen::Index i = 0; i < n; ++i) {
        ConstMapRM gy_mat(gy.data.data() + i * g.out_ch * out_h * out_w, g.out_ch, out_h * out_w);
        col.noalias() = w_mat.transpose() * gy_mat;
        col2im_add(col, in_h, in_w, g, out_h, out_w, gx.data.data() + i * g.in_ch * in_h * in_w);
    }
    return gx;
}

/// Accumulates weight/bias gradients of a conv given its input and upstream grad.
inline void conv_backward_weights(const Tensor& x, const Tensor& gy, const ConvGeom& g,
                                  Tensor& grad_weights, Tensor* grad_bias) {
    const Eigen::Index n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const Eigen::Index out_h = gy.dim(2), out_w = gy.dim(3);
    MapRM gw_mat(grad_weights.data.data(), g.out_ch, g.in_ch * g.k * g.k);
    Eigen::MatrixXd col;
    for (Eigen::Index i = 0; i < n; ++i) {
        im2col(x.data.data() + i * g.in_ch * h * w, h, w, g, out_h, out_w, col);
        ConstMapRM gy_mat(gy.data.data() + i * g.out_ch * out_h * out_w, g.out_ch, out_h * out_w);
        gw_mat.noalias() += gy_mat * col.transpose();
        if (grad_bias)
            for (Eigen::Index co = 0; co < g.out_ch; ++co)
                grad_bias->data(co) += gy_mat.row(co).sum();
    }
}

}  // namespace nnk

/// Base of all layers. Forward caches whatever backward needs; backward
/// accumulates parameter gradients and returns the gradient w.r.t. its input.
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& input, bool training) = 0;
    virtual Tensor backward(const Tensor& grad_output) = 0;
    virtual std::vector<Tensor*> parameters() { return {}; }
    virtual std::vector<Tensor*> gradients() { return {}; }
    /// Non-trainable state (running statistics); serialized alongside weights.
    virtual std::vector<Tensor*> state() { return {}; }
    virtual void init(std::mt19937_64&) {}
    virtual Json descriptor() const = 0;
};

inline std::pair<Eigen::Index, Eigen::Index> same_padding(Eigen::Index k) {
    return {(k - 1) / 2, k - (k - 1) / 2 - 1};  // (begin, end)
}

class Conv2d : public Layer {
  public:
    Conv2d(Eigen::Index in_ch, Eigen::Index out_ch, Eigen::Index k, Eigen::Index stride = 1)
        : geom_{in_ch, out_ch, k, stride, 0, 0, 0, 0},
          weights_({out_ch, in_ch, k, k}),
          bias_({out_ch}),
          grad_weights_({out_ch, in_ch, k, k}),
          grad_bias_({out_ch}) {
        auto [beg, end] = same_padding(k);
        geom_.pad_top = geom_.pad_left = beg;
        geom_.pad_bottom = geom_.pad_right = end;
    }

    Tensor forward(const Tensor& input, bool) override {
        require_finite(input, "Conv2d");
        if (input.rank() != 4 || input.dim(1) != geom_.in_ch)
            throw std::invalid_argument("Conv2d: expected NCHW input with matching channels");
        input_ = input;
        return nnk::conv_forward(input, weights_, &bias_, geom_);
    }

    Tensor backward(const Tensor& grad_output) override {
        require_finite(grad_output, "Conv2d backward");
        nnk::conv_backward_weights(input_, grad_output, geom_, grad_weights_, &grad_bias_);
        return nnk::conv_backward_input(grad_output, weights_, geom_, input_.dim(2), input_.dim(3));
    }

    std::vector<Tensor*> parameters() override { return {&weights_, &bias_}; }
    std::vector<Tensor*> gradients() override { return {&grad_weights_, &grad_bias_}; }

    void init(std::mt19937_64& rng) override {
        const double std = std::sqrt(2.0 / static_cast<double>(geom_.in_ch * geom_.k * geom_.k));
        std::normal_distribution<double> dist(0.0, std);
        for (Eigen::Index i = 0; i < weights_.numel(); ++i) weights_.data(i) = dist(rng);
        bias_.data.setZero();
    }

    Json descriptor() const override {
        return Json{{"type", "conv2d"},
                    {"in_channels", geom_.in_ch},
                    {"out_channels", geom_.out_ch},
                    {"kernel", geom_.k},
                    {"stride", geom_.stride}};
    }

  private:
    nnk::ConvGeom geom_;
    Tensor weights_, bias_, grad_weights_, grad_bias_;
    Tensor input_;
};

/// Adjoint of a same-padded stride-1 Conv2d with shared kernel geometry: its
/// forward pass is the conv's backward-input map, and vice versa.
class ConvTranspose2d : public Layer {
  public:
    ConvTranspose2d(Eigen::Index in_ch, Eigen::Index out_ch, Eigen::Index k)
        : geom_{out_ch, in_ch, k, 1, 0, 0, 0, 0},  // geometry of the underlying conv
          weights_({in_ch, out_ch, k, k}),
          bias_({out_ch}),
          grad_weights_({in_ch, out_ch, k, k}),
          grad_bias_({out_ch}) {
        auto [beg, end] = same_padding(k);
        geom_.pad_top = geom_.pad_left = beg;
        geom_.pad_bottom = geom_.pad_right = end;
    }

    Tensor forward(const Tensor& input, bool) override {
        require_finite(input, "ConvTranspose2d");
        if (input.rank() != 4 || input.dim(1) != geom_.out_ch)
            throw std::invalid_argument("ConvTranspose2d: expected NCHW input with matching channels");
        input_ = input;
        // stride-1 same padding: spatial size is preserved
        Tensor out = nnk::conv_backward_input(input, weights_, geom_, input.dim(2), input.dim(3));
        for (Eigen::Index n = 0; n < out.dim(0); ++n)
            for (Eigen::Index c = 0; c < out.dim(1); ++c)
                out.data.segment((n * out.dim(1) + c) * out.dim(2) * out.dim(3),
                                 out.dim(2) * out.dim(3)).array() += bias_.data(c);
        return out;
    }

    Tensor backward(const Tensor& grad_output) override {
        require_finite(grad_output, "ConvTranspose2d backward");
        nnk::conv_backward_weights(grad_output, input_, geom_, grad_weights_, nullptr);
        for (Eigen::Index n = 0; n < grad_output.dim(0); ++n)
            for (Eigen::Index c = 0; c < grad_output.dim(1); ++c)
                grad_bias_.data(c) +=
                    grad_output.data
                        .segment((n * grad_output.dim(1) + c) * grad_output.dim(2) * grad_output.dim(3),
                                 grad_output.dim(2) * grad_output.dim(3))
                        .sum();
        return nnk::conv_forward(grad_output, weights_, nullptr, geom_);
    }

    std::vector<Tensor*> parameters() override { return {&weights_, &bias_}; }
    std::vector<Tensor*> gradients() override { return {&grad_weights_, &grad_bias_}; }

    void init(std::mt19937_64& rng) override {
        const double std = std::sqrt(2.0 / static_cast<double>(geom_.out_ch * geom_.k * geom_.k));
        std::normal_distribution<double> dist(0.0, std);
        for (Eigen::Index i = 0; i < weights_.numel(); ++i) weights_.data(i) = dist(rng);
        bias_.data.setZero();
    }

    Json descriptor() const override {
        return Json{{"type", "conv_transpose2d"},
                    {"in_channels", geom_.out_ch},
                    {"out_channels", geom_.in_ch},
                    {"kernel", geom_.k},
                    {"stride", 1}};
    }

  private:
    nnk::ConvGeom geom_;
    Tensor weights_, bias_, grad_weights_, grad_bias_;
    Tensor input_;
};

/// Per-channel batch normalization over (N, H, W) with running statistics.
class BatchNorm2d : public Layer {
  public:
    explicit BatchNorm2d(Eigen::Index channels, double momentum = 0.1, double epsilon = 1e-5)
        : channels_(channels),
          momentum_(momentum),
          epsilon_(epsilon),
          gamma_({channels}),
          beta_({channels}),
          grad_gamma_({channels}),
          grad_beta_({channels}),
          running_mean_({channels}),
          running_var_({channels}) {
        gamma_.data.setOnes();
        running_var_.data.setOnes();
    }

    Tensor forward(const Tensor& input, bool training) override {
        require_finite(input, "BatchNorm2d");
        if (input.rank() != 4 || input.dim(1) != channels_)
            throw std::invalid_argument("BatchNorm2d: expected NCHW input with matching channels");
        if (training && input.dim(0) < 2)
            throw std::invalid_argument("BatchNorm2d: training mode needs batch >= 2");
        training_ = training;
        input_ = input;
        const Eigen::Index n = input.dim(0), hw = input.dim(2) * input.dim(3);
        const double m = static_cast<double>(n * hw);
        Tensor out(input.shape);
        normalized_ = Tensor(input.shape);
        batch_mean_.resize(channels_);
        batch_inv_std_.resize(channels_);
        for (Eigen::Index c = 0; c < channels_; ++c) {
            double mean, var;
            if (training) {
                double sum = 0.0, sq = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    auto seg = input.data.segment((i * channels_ + c) * hw, hw);
                    sum += seg.sum();
                    sq += seg.squaredNorm();
                }
                mean = sum / m;
                var = sq / m - mean * mean;
                running_mean_.data(c) =
                    (1.0 - momentum_) * running_mean_.data(c) + momentum_ * mean;
                const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
                running_var_.data(c) =
                    (1.0 - momentum_) * running_var_.data(c) + momentum_ * unbiased;
            } else {
                mean = running_mean_.data(c);
                var = running_var_.data(c);
            }
            const double inv_std = 1.0 / std::sqrt(var + epsilon_);
            batch_mean_(c) = mean;
            batch_inv_std_(c) = inv_std;
            for (Eigen::Index i = 0; i < n; ++i) {
                auto xseg = input.data.segment((i * channels_ + c) * hw, hw);
                auto nseg = normalized_.data.segment((i * channels_ + c) * hw, hw);
                auto oseg = out.data.segment((i * channels_ + c) * hw, hw);
                nseg = (xseg.array() - mean) * inv_std;
                oseg = gamma_.data(c) * nseg.array() + beta_.data(c);
            }
        }
        return out;
    }

    Tensor backward(const Tensor& grad_output) override {
        require_finite(grad_output, "BatchNorm2d backward");
        const Eigen::Index n = grad_output.dim(0), hw = grad_output.dim(2) * grad_output.dim(3);
        const double m = static_cast<double>(n * hw);
        Tensor gx(grad_output.shape);
        for (Eigen::Index c = 0; c < channels_; ++c) {
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                auto gseg = grad_output.data.segment((i * channels_ + c) * hw, hw);
                auto nseg = normalized_.data.segment((i * channels_ + c) * hw, hw);
                sum_gy += gseg.sum();
                sum_gy_xhat += gseg.dot(nseg);
            }
            grad_gamma_.data(c) += sum_gy_xhat;
            grad_beta_.data(c) += sum_gy;
            const double scale = gamma_.data(c) * batch_inv_std_(c);
            for (Eigen::Index i = 0; i < n; ++i) {
                auto gseg = grad_output.data.segment((i * channels_ + c) * hw, hw);
                auto nseg = normalized_.data.segment((i * channels_ + c) * hw, hw);
                auto oseg = gx.data.segment((i * channels_ + c) * hw, hw);
                if (training_) {
                    oseg = scale *
                           (gseg.array() - sum_gy / m - nseg.array() * (sum_gy_xhat / m));
                } else {
                    oseg = scale * gseg.array();
                }
            }
        }
        return gx;
    }

    std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> gradients() override { return {&grad_gamma_, &grad_beta_}; }
    std::vector<Tensor*> state() override { return {&running_mean_, &running_var_}; }

    Json descriptor() const override {
        return Json{{"type", "batchnorm2d"},
                    {"channels", channels_},
                    {"momentum", momentum_},
                    {"epsilon", epsilon_}};
    }

  private:
    Eigen::Index channels_;
    double momentum_, epsilon_;
    Tensor gamma_, beta_, grad_gamma_, grad_beta_;
    Tensor running_mean_, running_var_;
    Tensor input_, normalized_;
    Eigen::VectorXd batch_mean_, batch_inv_std_;
    bool training_ = false;
};

class ReLU : public Layer {
  public:
    Tensor forward(const Tensor& input, bool) override {
        require_finite(input, "ReLU");
        mask_ = (input.data.array() > 0.0).cast<double>();
        Tensor out = input;
        out.data = input.data.cwiseProduct(mask_);
        return out;
    }
    Tensor backward(const Tensor& grad_output) override {
        Tensor gx = grad_output;
        gx.data = grad_output.data.cwiseProduct(mask_);
        return gx;
    }
    Json descriptor() const override { return Json{{"type", "relu"}}; }

  private:
    Eigen::VectorXd mask_;
};

/// Affine map on (N, in) tensors.
class Dense : public Layer {
  public:
    Dense(Eigen::Index in, Eigen::Index out)
        : in_(in), out_(out), weights_({out, in}), bias_({out}),
          grad_weights_({out, in}), grad_bias_({out}) {}

    Tensor forward(const Tensor& input, bool) override {
        require_finite(input, "Dense");
        if (input.rank() != 2 || input.dim(1) != in_)
            throw std::invalid_argument("Dense: expected (N, " + std::to_string(in_) + ") input");
        input_ = input;
        const Eigen::Index n = input.dim(0);
        Tensor out({n, out_});
        ConstMapRM x(input.data.data(), n, in_);
        ConstMapRM w(weights_.data.data(), out_, in_);
        MapRM y(out.data.data(), n, out_);
        y.noalias() = x * w.transpose();
        y.rowwise() += bias_.data.transpose();
        return out;
    }

    Tensor backward(const Tensor& grad_output) override {
        require_finite(grad_output, "Dense backward");
        const Eigen::Index n = grad_output.dim(0);
        ConstMapRM gy(grad_output.data.data(), n, out_);
        ConstMapRM x(input_.data.data(), n, in_);
        ConstMapRM w(weights_.data.data(), out_, in_);
        MapRM gw(grad_weights_.data.data(), out_, in_);
        gw.noalias() += gy.transpose() * x;
        grad_bias_.data.noalias() += gy.colwise().sum().transpose();
        Tensor gx({n, in_});
        MapRM gxm(gx.data.data(), n, in_);
        gxm.noalias() = gy * w;
        return gx;
    }

    std::vector<Tensor*> parameters() override { return {&weights_, &bias_}; }
    std::vector<Tensor*> gradients() override { return {&grad_weights_, &grad_bias_}; }

    void init(std::mt19937_64& rng) override {
        const double std = std::sqrt(2.0 / static_cast<double>(in_));
        std::normal_distribution<double> dist(0.0, std);
        for (Eigen::Index i = 0; i < weights_.numel(); ++i) weights_.data(i) = dist(rng);
        bias_.data.setZero();
    }

    Json descriptor() const override {
        return Json{{"type", "dense"}, {"in", in_}, {"out", out_}};
    }

  private:
    Eigen::Index in_, out_;
    Tensor weights_, bias_, grad_weights_, grad_bias_;
    Tensor input_;
};

/// (N, C, H, W) -> (N, C*H*W). Data order is untouched.
class Flatten : public Layer {
  public:
    Tensor forward(const Tensor& input, bool) override {
        in_shape_ = input.shape;
        Eigen::Index rest = input.numel() / input.dim(0);
        return input.reshaped({input.dim(0), rest});
    }
    Tensor backward(const Tensor& grad_output) override {
        std::vector<Eigen::Index> s = in_shape_;
        s[0] = grad_output.dim(0);
        return grad_output.reshaped(s);
    }
    Json descriptor() const override { return Json{{"type", "flatten"}}; }

  private:
    std::vector<Eigen::Index> in_shape_;
};

/// (N, D) -> (N, C, H, W) with D = C*H*W.
class Reshape : public Layer {
  public:
    Reshape(Eigen::Index c, Eigen::Index h, Eigen::Index w) : c_(c), h_(h), w_(w) {}
    Tensor forward(const Tensor& input, bool) override {
        return input.reshaped({input.dim(0), c_, h_, w_});
    }
    Tensor backward(const Tensor& grad_output) override {
        return grad_output.reshaped({grad_output.dim(0), c_ * h_ * w_});
    }
    Json descriptor() const override {
        return Json{{"type", "reshape"}, {"channels", c_}, {"height", h_}, {"width", w_}};
    }

  private:
    Eigen::Index c_, h_, w_;
};

}  // namespace qpt
