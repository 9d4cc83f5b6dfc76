#pragma once

#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qpt {

/// Dense real N-dimensional array, row-major, NCHW for image-like data.
struct Tensor {
    std::vector<Eigen::Index> shape;
    Eigen::VectorXd data;

    Tensor() = default;
    explicit Tensor(std::vector<Eigen::Index> s) : shape(std::move(s)) {
        data = Eigen::VectorXd::Zero(numel_of(shape));
    }

    static Eigen::Index numel_of(const std::vector<Eigen::Index>& s) {
        Eigen::Index n = 1;
        for (Eigen::Index d : s) {
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<Eigen::Index> s) { return Tensor(std::move(s)); }

    Eigen::Index numel() const { return data.size(); }
    Eigen::Index dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    bool all_finite() const { return data.allFinite(); }

    Tensor reshaped(std::vector<Eigen::Index> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("Tensor: reshape size mismatch");
        Tensor out = *this;
        out.shape = std::move(s);
        return out;
    }

    /// Rows `indices` along the leading dimension, in the given order.
    Tensor gather_rows(const std::vector<Eigen::Index>& indices) const {
        if (shape.empty()) throw std::invalid_argument("Tensor: gather on scalar");
        const Eigen::Index row = numel() / shape[0];
        std::vector<Eigen::Index> s = shape;
        s[0] = static_cast<Eigen::Index>(indices.size());
        Tensor out(s);
        for (size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] < 0 || indices[i] >= shape[0])
                throw std::out_of_range("Tensor: gather index");
            out.data.segment(static_cast<Eigen::Index>(i) * row, row) =
                data.segment(indices[i] * row, row);
        }
        return out;
    }

    std::string shape_string() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }
};

inline void require_shape(const Tensor& t, const std::vector<Eigen::Index>& s, const char* where) {
    if (t.shape != s)
        throw std::invalid_argument(std::string(where) + ": shape mismatch, got " + t.shape_string());
}

inline void require_finite(const Tensor& t, const char* where) {
    if (!t.all_finite())
        throw std::invalid_argument(std::string(where) + ": non-finite values in tensor");
}

}  // namespace qpt
