// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double array with an explicit shape. Scalars have rank 0
// (empty shape, one element). This is the only numeric container the
// computation engine operates on.

#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace himap {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct NdArray {
    Shape shape;
    std::vector<double> v;

    NdArray() = default;
    explicit NdArray(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
    NdArray(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != shape_numel(shape))
            throw std::invalid_argument("NdArray: " + std::to_string(v.size()) +
                                        " values do not fill shape " + shape_str(shape));
    }

    static NdArray scalar(double x) { return NdArray({}, {x}); }
    static NdArray zeros(Shape s) { return NdArray(std::move(s)); }
    static NdArray full(Shape s, double x) {
        NdArray a(std::move(s));
        for (double& e : a.v) e = x;
        return a;
    }

    std::size_t numel() const { return v.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar_like() const { return v.size() == 1; }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    // Rank-2 accessors (bounds unchecked; callers validate shapes up front).
    double& at2(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t row_width() const { return shape.empty() ? 1 : numel() / (shape[0] ? shape[0] : 1); }

    bool same_shape(const NdArray& o) const { return shape == o.shape; }
};

inline double max_abs_diff(const NdArray& a, const NdArray& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch " +
                                                      shape_str(a.shape) + " vs " + shape_str(b.shape));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = std::abs(a.v[i] - b.v[i]);
        if (d > m) m = d;
    }
    return m;
}

}  // namespace himap
