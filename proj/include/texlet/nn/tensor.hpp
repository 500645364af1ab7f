// tensor.hpp — dense row-major double tensor. Rank 0 (scalar), 1 and 2 cover
// everything the models need; higher-rank data is kept flattened.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "texlet/common.hpp"

namespace texlet::nn {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            require(d > 0, "tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor scalar(double v) {
        Tensor t(std::vector<int>{});
        t.data = {v};
        return t;
    }
    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.shape = {1, (int)v.size()};
        t.data = std::move(v);
        return t;
    }
    static Tensor matrix(int r, int c, double fill = 0.0) { return Tensor({r, c}, fill); }

    int64_t numel() const { return (int64_t)data.size(); }
    bool is_scalar() const { return shape.empty(); }
    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const {
        return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 1);
    }

    double& at(int r, int c) { return data[(size_t)r * cols() + c]; }
    double at(int r, int c) const { return data[(size_t)r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// C += op(A) * op(B); shapes already validated by the caller.
inline void gemm_acc(bool trans_a, bool trans_b, const Tensor& a, const Tensor& b, Tensor& c) {
    int m = c.rows(), n = c.cols();
    int k = trans_a ? a.rows() : a.cols();
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    int ar = a.cols(), br = b.cols();

    if (!trans_a && !trans_b) {
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = pa[(size_t)i * ar + p];
                if (av == 0.0) continue;
                const double* bp = pb + (size_t)p * br;
                double* cp = pc + (size_t)i * n;
                for (int j = 0; j < n; ++j) cp[j] += av * bp[j];
            }
    } else if (trans_a && !trans_b) {
        for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
                double av = pa[(size_t)p * ar + i];
                if (av == 0.0) continue;
                const double* bp = pb + (size_t)p * br;
                double* cp = pc + (size_t)i * n;
                for (int j = 0; j < n; ++j) cp[j] += av * bp[j];
            }
    } else if (!trans_a && trans_b) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double* ap = pa + (size_t)i * ar;
                const double* bp = pb + (size_t)j * br;
                double acc = 0;
                for (int p = 0; p < k; ++p) acc += ap[p] * bp[p];
                pc[(size_t)i * n + j] += acc;
            }
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0;
                for (int p = 0; p < k; ++p)
                    acc += pa[(size_t)p * ar + i] * pb[(size_t)j * br + p];
                pc[(size_t)i * n + j] += acc;
            }
    }
}

}  // namespace texlet::nn
