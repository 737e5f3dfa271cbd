#pragma once

#include "xrid/error.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace xrid {

// Dense row-major float32 buffer with an explicit shape. Rank 1 and 2 cover
// everything the pipeline needs; no broadcasting lives here.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(static_cast<size_t>(numel_of(t.shape)), 0.0f);
        return t;
    }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t = zeros(std::move(shape));
        for (float& v : t.data) {
            v = value;
        }
        return t;
    }

    static Tensor scalar(float value) { return Tensor({1}, {value}); }

    static Tensor row(std::vector<float> values) {
        const int n = static_cast<int>(values.size());
        return Tensor({n}, std::move(values));
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    int64_t numel() const { return numel_of(shape); }

    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors
    int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (float v : data) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }
};

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) {
            s += "x";
        }
    }
    return s + "]";
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.same_shape(b), Errc::shape_mismatch,
            std::string(op) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

} // namespace xrid
