#pragma once

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace actseg {

// Dense row-major double tensor. Shapes used throughout: scalar (1x1),
// column vector (n x 1), matrix (r x c). No other ranks.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    static Tensor column(std::vector<double> xs) {
        Tensor t;
        t.rows = static_cast<int>(xs.size());
        t.cols = 1;
        t.v = std::move(xs);
        return t;
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    bool all_finite() const {
        for (double x : v) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }
};

} // namespace actseg
