#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "qpt/layers.hpp"

namespace qpt {

class Network;
std::unique_ptr<Layer> layer_from_descriptor(const Json& d);

/// A stack of per-parameter two-layer branches applied to the same input;
/// outputs are concatenated, one column per branch.
class ParallelHeads : public Layer {
  public:
    ParallelHeads() = default;

    void add_head(std::vector<std::unique_ptr<Layer>> head) { heads_.push_back(std::move(head)); }

    Tensor forward(const Tensor& input, bool training) override {
        require_finite(input, "ParallelHeads");
        const Eigen::Index n = input.dim(0);
        Tensor out({n, static_cast<Eigen::Index>(heads_.size())});
        for (size_t h = 0; h < heads_.size(); ++h) {
            Tensor cur = input;
            for (auto& layer : heads_[h]) cur = layer->forward(cur, training);
            if (cur.rank() != 2 || cur.dim(1) != 1)
                throw std::invalid_argument("ParallelHeads: each head must emit one value");
            for (Eigen::Index i = 0; i < n; ++i)
                out.data(i * static_cast<Eigen::Index>(heads_.size()) + static_cast<Eigen::Index>(h)) =
                    cur.data(i);
        }
        return out;
    }

    Tensor backward(const Tensor& grad_output) override {
        const Eigen::Index n = grad_output.dim(0);
        const Eigen::Index b = static_cast<Eigen::Index>(heads_.size());
        Tensor gx;
        for (Eigen::Index h = 0; h < b; ++h) {
            Tensor g({n, 1});
            for (Eigen::Index i = 0; i < n; ++i) g.data(i) = grad_output.data(i * b + h);
            for (auto it = heads_[static_cast<size_t>(h)].rbegin();
                 it != heads_[static_cast<size_t>(h)].rend(); ++it)
                g = (*it)->backward(g);
            if (h == 0) {
                gx = std::move(g);
            } else {
                gx.data += g.data;
            }
        }
        return gx;
    }

    std::vector<Tensor*> parameters() override { return collect(&Layer::parameters); }
    std::vector<Tensor*> gradients() override { return collect(&Layer::gradients); }
    std::vector<Tensor*> state() override { return collect(&Layer::state); }

    void init(std::mt19937_64& rng) override {
        for (auto& head : heads_)
            for (auto& layer : head) layer->init(rng);
    }

    Json descriptor() const override {
        Json heads = Json::array();
        for (const auto& head : heads_) {
            Json layers = Json::array();
            for (const auto& layer : head) layers.push_back(layer->descriptor());
            heads.push_back(layers);
        }
        return Json{{"type", "heads"}, {"heads", heads}};
    }

    static std::unique_ptr<ParallelHeads> from_descriptor(const Json& d) {
        auto out = std::make_unique<ParallelHeads>();
        for (const auto& head : d.at("heads")) {
            std::vector<std::unique_ptr<Layer>> layers;
            for (const auto& ld : head) layers.push_back(layer_from_descriptor(ld));
            out->add_head(std::move(layers));
        }
        return out;
    }

  private:
    template <typename Fn>
    std::vector<Tensor*> collect(Fn fn) {
        std::vector<Tensor*> out;
        for (auto& head : heads_)
            for (auto& layer : head)
                for (Tensor* t : (layer.get()->*fn)()) out.push_back(t);
        return out;
    }

    std::vector<std::vector<std::unique_ptr<Layer>>> heads_;
};

inline std::unique_ptr<Layer> layer_from_descriptor(const Json& d) {
    const std::string type = d.at("type");
    if (type == "conv2d")
        return std::make_unique<Conv2d>(d.at("in_channels").get<Eigen::Index>(),
                                        d.at("out_channels").get<Eigen::Index>(),
                                        d.at("kernel").get<Eigen::Index>(),
                                        d.at("stride").get<Eigen::Index>());
    if (type == "conv_transpose2d")
        return std::make_unique<ConvTranspose2d>(d.at("in_channels").get<Eigen::Index>(),
                                                 d.at("out_channels").get<Eigen::Index>(),
                                                 d.at("kernel").get<Eigen::Index>());
    if (type == "batchnorm2d")
        return std::make_unique<BatchNorm2d>(d.at("channels").get<Eigen::Index>(),
                                             d.at("momentum").get<double>(),
                                             d.at("epsilon").get<double>());
    if (type == "relu") return std::make_unique<ReLU>();
    if (type == "dense")
        return std::make_unique<Dense>(d.at("in").get<Eigen::Index>(),
                                       d.at("out").get<Eigen::Index>());
    if (type == "flatten") return std::make_unique<Flatten>();
    if (type == "reshape")
        return std::make_unique<Reshape>(d.at("channels").get<Eigen::Index>(),
                                         d.at("height").get<Eigen::Index>(),
                                         d.at("width").get<Eigen::Index>());
    if (type == "heads") return ParallelHeads::from_descriptor(d);
    throw std::runtime_error("unknown layer type in model file: " + type);
}

class Network {
  public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& input, bool training) {
        Tensor cur = input;
        for (auto& layer : layers_) cur = layer->forward(cur, training);
        require_finite(cur, "Network output");
        return cur;
    }

    Tensor backward(const Tensor& grad_output) {
        Tensor g = grad_output;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    /// Inference-mode forward, chunked along the batch dimension.
    Tensor predict(const Tensor& input, Eigen::Index chunk = 256) {
        const Eigen::Index n = input.dim(0);
        Tensor out;
        for (Eigen::Index start = 0; start < n; start += chunk) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = start; i < std::min(start + chunk, n); ++i) idx.push_back(i);
            Tensor piece = forward(input.gather_rows(idx), false);
            if (start == 0) {
                std::vector<Eigen::Index> s = piece.shape;
                s[0] = n;
                out = Tensor(s);
            }
            out.data.segment(start * (piece.numel() / piece.dim(0)), piece.numel()) = piece.data;
        }
        return out;
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* t : l->parameters()) out.push_back(t);
        return out;
    }
    std::vector<Tensor*> gradients() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* t : l->gradients()) out.push_back(t);
        return out;
    }
    std::vector<Tensor*> state() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* t : l->state()) out.push_back(t);
        return out;
    }
    void zero_gradients() {
        for (Tensor* g : gradients()) g->data.setZero();
    }

    void init(uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& l : layers_) l->init(rng);
    }

    size_t n_layers() const { return layers_.size(); }

    Json manifest() const {
        Json layers = Json::array();
        for (const auto& l : layers_) layers.push_back(l->descriptor());
        return Json{{"format_version", 1}, {"layers", layers}};
    }

    /// Model file: magic "QNN1", u32 little-endian manifest length, UTF-8 JSON
    /// manifest, then raw IEEE-754 64-bit little-endian payloads (parameters
    /// then running state, per layer, in manifest order).
    void save(const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("save_model: cannot open " + path.string());
        const std::string manifest_str = manifest().dump();
        out.write("QNN1", 4);
        const uint32_t len = static_cast<uint32_t>(manifest_str.size());
        char lenbuf[4];
        std::memcpy(lenbuf, &len, 4);
        out.write(lenbuf, 4);
        out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
        for (Tensor* t : payload_tensors())
            out.write(reinterpret_cast<const char*>(t->data.data()),
                      static_cast<std::streamsize>(t->numel() * sizeof(double)));
        if (!out) throw std::runtime_error("save_model: write failed for " + path.string());
    }

    static Network load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("load_model: cannot open " + path.string());
        char magic[4];
        if (!in.read(magic, 4) || std::memcmp(magic, "QNN1", 4) != 0)
            throw std::runtime_error("load_model: bad magic in " + path.string());
        char lenbuf[4];
        if (!in.read(lenbuf, 4)) throw std::runtime_error("load_model: truncated header");
        uint32_t len;
        std::memcpy(&len, lenbuf, 4);
        std::string manifest_str(len, '\0');
        if (!in.read(manifest_str.data(), len)) throw std::runtime_error("load_model: truncated manifest");
        Json m = Json::parse(manifest_str, nullptr, false);
        if (m.is_discarded()) throw std::runtime_error("load_model: corrupt manifest JSON");
        if (!m.contains("format_version") || m.at("format_version").get<int>() != 1)
            throw std::runtime_error("load_model: unsupported format version");
        Network net;
        for (const auto& d : m.at("layers")) net.add(layer_from_descriptor(d));
        for (Tensor* t : net.payload_tensors()) {
            if (!in.read(reinterpret_cast<char*>(t->data.data()),
                         static_cast<std::streamsize>(t->numel() * sizeof(double))))
                throw std::runtime_error("load_model: truncated weight payload");
        }
        char extra;
        if (in.read(&extra, 1)) throw std::runtime_error("load_model: trailing bytes after payload");
        return net;
    }

  private:
    std::vector<Tensor*> payload_tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers_) {
            for (Tensor* t : l->parameters()) out.push_back(t);
            for (Tensor* t : l->state()) out.push_back(t);
        }
        return out;
    }

    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Autoencoder configuration; kernel size and latent width follow the
/// per-channel-family defaults, widths are tunable.
struct AutoencoderConfig {
    Eigen::Index image_size = 4;  // chi dimension (4 or 16)
    Eigen::Index kernel = 2;
    Eigen::Index latent = 40;
    std::array<Eigen::Index, 3> channels{16, 32, 64};
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;
};

/// Encoder of three conv+ReLU+batchnorm stages, a dense bottleneck, and the
/// mirrored transposed-conv decoder. The final decoder layer is linear so the
/// output can carry negative matrix entries.
inline Network build_autoencoder(const AutoencoderConfig& cfg) {
    Network net;
    const auto [c1, c2, c3] = cfg.channels;
    const Eigen::Index s = cfg.image_size;
    net.add(std::make_unique<Conv2d>(2, c1, cfg.kernel));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<BatchNorm2d>(c1, cfg.bn_momentum, cfg.bn_epsilon));
    net.add(std::make_unique<Conv2d>(c1, c2, cfg.kernel));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<BatchNorm2d>(c2, cfg.bn_momentum, cfg.bn_epsilon));
    net.add(std::make_unique<Conv2d>(c2, c3, cfg.kernel));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<BatchNorm2d>(c3, cfg.bn_momentum, cfg.bn_epsilon));
    net.add(std::make_unique<Flatten>());
    net.add(std::make_unique<Dense>(c3 * s * s, cfg.latent));
    net.add(std::make_unique<Dense>(cfg.latent, c3 * s * s));
    net.add(std::make_unique<Reshape>(c3, s, s));
    net.add(std::make_unique<ConvTranspose2d>(c3, c2, cfg.kernel));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<BatchNorm2d>(c2, cfg.bn_momentum, cfg.bn_epsilon));
    net.add(std::make_unique<ConvTranspose2d>(c2, c1, cfg.kernel));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<BatchNorm2d>(c1, cfg.bn_momentum, cfg.bn_epsilon));
    net.add(std::make_unique<ConvTranspose2d>(c1, 2, cfg.kernel));
    return net;
}

/// Feed-forward regressor: a ReLU trunk widened by the factor g, then one
/// two-layer branch per estimated parameter with linear outputs.
struct FfnnConfig {
    Eigen::Index input_dim = 4;
    Eigen::Index g = 2;
    Eigen::Index branches = 1;
};

inline Network build_ffnn(const FfnnConfig& cfg) {
    Network net;
    const Eigen::Index wide = cfg.input_dim * cfg.g;
    const Eigen::Index hidden = std::max<Eigen::Index>(1, wide / 2);
    net.add(std::make_unique<Dense>(cfg.input_dim, wide));
    net.add(std::make_unique<ReLU>());
    auto heads = std::make_unique<ParallelHeads>();
    for (Eigen::Index b = 0; b < cfg.branches; ++b) {
        std::vector<std::unique_ptr<Layer>> head;
        head.push_back(std::make_unique<Dense>(wide, hidden));
        head.push_back(std::make_unique<ReLU>());
        head.push_back(std::make_unique<Dense>(hidden, 1));
        heads->add_head(std::move(head));
    }
    net.add(std::move(heads));
    return net;
}

}  // namespace qpt
