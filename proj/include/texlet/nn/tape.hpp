// tape.hpp — dynamic-graph reverse-mode differentiation over Tensor. Each
// forward op records a node with a backward closure; backward() walks the
// tape in reverse and accumulates into parameter gradients. All math is in
// double precision so gradients can be checked against central finite
// differences at tight tolerances.
#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "texlet/nn/params.hpp"
#include "texlet/nn/tensor.hpp"

namespace texlet::nn {

struct Value {
    int id = -1;
};

// Precomputed sparse linear map: out[i] = sum_t w[i*taps+t] * src[index[i*taps+t]].
struct LinearGather {
    int taps = 0;
    std::vector<int> index;
    std::vector<double> weight;
    std::vector<int> out_shape;
};

class Tape {
public:
    explicit Tape(ModelParams* params = nullptr) : params_(params) {}

    Value constant(Tensor t) {
        check_finite(t);
        return push(std::move(t), false);
    }

    // Differentiable leaf not bound to ModelParams (used by gradient checks).
    Value leaf(Tensor t) {
        check_finite(t);
        return push(std::move(t), true);
    }

    Value param(const std::string& name) {
        require(params_ != nullptr, "tape has no parameter store");
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return {it->second};
        Value v = push(params_->value(name), true);
        nodes_[v.id].pname = name;
        param_nodes_[name] = v.id;
        return v;
    }

    const Tensor& val(Value v) const { return nodes_[v.id].value; }

    Tensor& grad(Value v) {
        Node& n = nodes_[v.id];
        if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
        return n.grad;
    }

    bool needs_grad(Value v) const { return nodes_[v.id].needs_grad; }

    void backward(Value loss) {
        require(val(loss).is_scalar(), "backward requires a scalar loss");
        require(nodes_[loss.id].needs_grad, "loss does not depend on any parameter");
        grad(loss).data[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.data.empty()) continue;
            if (n.back) n.back(*this, i);
        }
        if (params_) {
            for (auto& [name, id] : param_nodes_) {
                Node& n = nodes_[id];
                if (n.grad.data.empty()) continue;
                Tensor& g = params_->grad(name);
                for (size_t k = 0; k < g.data.size(); ++k) g.data[k] += n.grad.data[k];
            }
        }
    }

    size_t size() const { return nodes_.size(); }

    // -- used by op implementations --
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::string pname;
        std::function<void(Tape&, int)> back;
    };

    Value push(Tensor value, bool needs_grad, std::function<void(Tape&, int)> back = nullptr) {
        check_finite(value);
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return {(int)nodes_.size() - 1};
    }

    Node& node(int id) { return nodes_[id]; }

private:
    static void check_finite(const Tensor& t) {
#ifndef NDEBUG
        assert(t.all_finite() && "non-finite tensor on tape");
#else
        (void)t;
#endif
    }

    std::vector<Node> nodes_;
    ModelParams* params_;
    std::unordered_map<std::string, int> param_nodes_;
};

namespace detail {

inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    fail(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

inline bool row_broadcastable(const Tensor& a, const Tensor& b) {
    // b broadcasts across rows of a
    return a.shape.size() == 2 && b.cols() == a.cols() && b.rows() == 1;
}

}  // namespace detail

inline Value matmul(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        detail::shape_error("matmul", a, b);
    Tensor out({a.shape[0], b.shape[1]});
    gemm_acc(false, false, a, b, out);
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(std::move(out), ng, [av, bv](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(av)) gemm_acc(false, true, g, tp.val(bv), tp.grad(av));
        if (tp.needs_grad(bv)) gemm_acc(true, false, tp.val(av), g, tp.grad(bv));
    });
}

inline Value add(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    bool bcast = !a.same_shape(b);
    if (bcast && !detail::row_broadcastable(a, b)) detail::shape_error("add", a, b);
    Tensor out = a;
    if (!bcast) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    } else {
        int n = a.cols();
        for (int r = 0; r < a.rows(); ++r)
            for (int c = 0; c < n; ++c) out.data[(size_t)r * n + c] += b.data[c];
    }
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(std::move(out), ng, [av, bv, bcast](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (tp.needs_grad(bv)) {
            Tensor& db = tp.grad(bv);
            if (!bcast) {
                for (size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
            } else {
                int n = (int)db.data.size();
                int rows = (int)(g.data.size() / n);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < n; ++c) db.data[c] += g.data[(size_t)r * n + c];
            }
        }
    });
}

inline Value sub(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    if (!a.same_shape(b)) detail::shape_error("sub", a, b);
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(std::move(out), ng, [av, bv](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (tp.needs_grad(bv)) {
            Tensor& db = tp.grad(bv);
            for (size_t i = 0; i < g.data.size(); ++i) db.data[i] -= g.data[i];
        }
    });
}

inline Value mul(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    if (!a.same_shape(b)) detail::shape_error("mul", a, b);
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(std::move(out), ng, [av, bv](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            const Tensor& b2 = tp.val(bv);
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * b2.data[i];
        }
        if (tp.needs_grad(bv)) {
            Tensor& db = tp.grad(bv);
            const Tensor& a2 = tp.val(av);
            for (size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i] * a2.data[i];
        }
    });
}

inline Value scale(Tape& t, Value av, double c) {
    Tensor out = t.val(av);
    for (double& x : out.data) x *= c;
    return t.push(std::move(out), t.needs_grad(av), [av, c](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += c * g.data[i];
    });
}

inline Value add_const(Tape& t, Value av, double c) {
    Tensor out = t.val(av);
    for (double& x : out.data) x += c;
    return t.push(std::move(out), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    });
}

inline Value neg(Tape& t, Value av) { return scale(t, av, -1.0); }

inline Value exp_op(Tape& t, Value av) {
    Tensor out = t.val(av);
    for (double& x : out.data) x = std::exp(x);
    return t.push(std::move(out), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * y.data[i];
    });
}

inline Value sigmoid(Tape& t, Value av) {
    Tensor out = t.val(av);
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    return t.push(std::move(out), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i)
            da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

// Exact GELU: 0.5*x*(1+erf(x/sqrt(2))).
inline Value gelu(Tape& t, Value av) {
    Tensor out = t.val(av);
    for (double& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
    return t.push(std::move(out), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        const Tensor& x = tp.val(av);
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i) {
            double v = x.data[i];
            double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
            double pdf = std::exp(-0.5 * v * v) * 0.39894228040143267794;
            da.data[i] += g.data[i] * (cdf + v * pdf);
        }
    });
}

// Hard clamp; gradient passes only strictly inside the interval.
inline Value clamp(Tape& t, Value av, double lo, double hi) {
    Tensor out = t.val(av);
    for (double& x : out.data) x = std::clamp(x, lo, hi);
    return t.push(std::move(out), t.needs_grad(av), [av, lo, hi](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        const Tensor& x = tp.val(av);
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > lo && x.data[i] < hi) da.data[i] += g.data[i];
    });
}

inline Value transpose(Tape& t, Value av) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2, "transpose needs a matrix, got " + a.shape_str());
    int m = a.shape[0], n = a.shape[1];
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[(size_t)j * m + i] = a.data[(size_t)i * n + j];
    return t.push(std::move(out), t.needs_grad(av), [av, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                da.data[(size_t)i * n + j] += g.data[(size_t)j * m + i];
    });
}

inline Value softmax_rows(Tape& t, Value av) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2, "softmax needs a matrix, got " + a.shape_str());
    int m = a.shape[0], n = a.shape[1];
    Tensor out = a;
    for (int i = 0; i < m; ++i) {
        double* row = &out.data[(size_t)i * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
    }
    return t.push(std::move(out), t.needs_grad(av), [av, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        const Tensor& y = tp.node(self).value;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i) {
            const double* gr = &g.data[(size_t)i * n];
            const double* yr = &y.data[(size_t)i * n];
            double dotgy = 0;
            for (int j = 0; j < n; ++j) dotgy += gr[j] * yr[j];
            double* dr = &da.data[(size_t)i * n];
            for (int j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dotgy);
        }
    });
}

// Row-wise layer norm with learned gain/bias (each [1 x n]).
inline Value layer_norm(Tape& t, Value av, Value gainv, Value biasv, double eps = 1e-5) {
    const Tensor& a = t.val(av);
    const Tensor& gain = t.val(gainv);
    const Tensor& bias = t.val(biasv);
    require(a.shape.size() == 2, "layer_norm needs a matrix, got " + a.shape_str());
    int m = a.shape[0], n = a.shape[1];
    if (gain.cols() != n || bias.cols() != n) detail::shape_error("layer_norm", a, gain);

    Tensor out({m, n});
    Tensor xhat({m, n});
    Tensor inv_std({m, 1});
    for (int i = 0; i < m; ++i) {
        const double* row = &a.data[(size_t)i * n];
        double mu = 0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= n;
        double var = 0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std.data[i] = is;
        for (int j = 0; j < n; ++j) {
            double xh = (row[j] - mu) * is;
            xhat.data[(size_t)i * n + j] = xh;
            out.data[(size_t)i * n + j] = xh * gain.data[j] + bias.data[j];
        }
    }
    bool ng = t.needs_grad(av) || t.needs_grad(gainv) || t.needs_grad(biasv);
    return t.push(std::move(out), ng,
                  [av, gainv, biasv, xhat, inv_std, m, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& gain = tp.val(gainv);
        if (tp.needs_grad(gainv)) {
            Tensor& dg = tp.grad(gainv);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    dg.data[j] += g.data[(size_t)i * n + j] * xhat.data[(size_t)i * n + j];
        }
        if (tp.needs_grad(biasv)) {
            Tensor& db = tp.grad(biasv);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) db.data[j] += g.data[(size_t)i * n + j];
        }
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            for (int i = 0; i < m; ++i) {
                const double* gr = &g.data[(size_t)i * n];
                const double* xh = &xhat.data[(size_t)i * n];
                double mean_dxhat = 0, mean_dxhat_xhat = 0;
                for (int j = 0; j < n; ++j) {
                    double dxh = gr[j] * gain.data[j];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xh[j];
                }
                mean_dxhat /= n;
                mean_dxhat_xhat /= n;
                double is = inv_std.data[i];
                for (int j = 0; j < n; ++j) {
                    double dxh = gr[j] * gain.data[j];
                    da.data[(size_t)i * n + j] +=
                        is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                }
            }
        }
    });
}

inline Value concat_cols(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[0] != b.shape[0])
        detail::shape_error("concat_cols", a, b);
    int m = a.shape[0], p = a.shape[1], q = b.shape[1];
    Tensor out({m, p + q});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < p; ++j) out.data[(size_t)i * (p + q) + j] = a.data[(size_t)i * p + j];
        for (int j = 0; j < q; ++j)
            out.data[(size_t)i * (p + q) + p + j] = b.data[(size_t)i * q + j];
    }
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(std::move(out), ng, [av, bv, m, p, q](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < p; ++j)
                    da.data[(size_t)i * p + j] += g.data[(size_t)i * (p + q) + j];
        }
        if (tp.needs_grad(bv)) {
            Tensor& db = tp.grad(bv);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < q; ++j)
                    db.data[(size_t)i * q + j] += g.data[(size_t)i * (p + q) + p + j];
        }
    });
}

inline Value slice_cols(Tape& t, Value av, int c0, int c1) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2 && c0 >= 0 && c1 <= a.shape[1] && c0 < c1,
            "slice_cols: bad range on " + a.shape_str());
    int m = a.shape[0], n = a.shape[1], w = c1 - c0;
    Tensor out({m, w});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
            out.data[(size_t)i * w + j] = a.data[(size_t)i * n + c0 + j];
    return t.push(std::move(out), t.needs_grad(av), [av, m, n, w, c0](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                da.data[(size_t)i * n + c0 + j] += g.data[(size_t)i * w + j];
    });
}

inline Value slice_rows(Tape& t, Value av, int r0, int r1) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2 && r0 >= 0 && r1 <= a.shape[0] && r0 < r1,
            "slice_rows: bad range on " + a.shape_str());
    int n = a.shape[1], m = r1 - r0;
    Tensor out({m, n});
    std::copy(a.data.begin() + (size_t)r0 * n, a.data.begin() + (size_t)r1 * n, out.data.begin());
    return t.push(std::move(out), t.needs_grad(av), [av, r0, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                da.data[(size_t)(r0 + i) * n + j] += g.data[(size_t)i * n + j];
    });
}

inline Value concat_rows(Tape& t, const std::vector<Value>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    int n = t.val(parts[0]).cols();
    int m = 0;
    bool ng = false;
    for (Value p : parts) {
        const Tensor& v = t.val(p);
        require(v.shape.size() == 2 && v.shape[1] == n,
                "concat_rows: inconsistent shape " + v.shape_str());
        m += v.shape[0];
        ng = ng || t.needs_grad(p);
    }
    Tensor out({m, n});
    int r = 0;
    for (Value p : parts) {
        const Tensor& v = t.val(p);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + (size_t)r * n);
        r += v.shape[0];
    }
    return t.push(std::move(out), ng, [parts, n](Tape& tp, int self) {
        const Tensor& g = tp.node(self).grad;
        int r = 0;
        for (Value p : parts) {
            int rows = tp.val(p).shape[0];
            if (tp.needs_grad(p)) {
                Tensor& dp = tp.grad(p);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < n; ++j)
                        dp.data[(size_t)i * n + j] += g.data[(size_t)(r + i) * n + j];
            }
            r += rows;
        }
    });
}

inline Value mean_rows(Tape& t, Value av) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2, "mean_rows needs a matrix, got " + a.shape_str());
    int m = a.shape[0], n = a.shape[1];
    Tensor out({1, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[j] += a.data[(size_t)i * n + j];
    for (int j = 0; j < n; ++j) out.data[j] /= m;
    return t.push(std::move(out), t.needs_grad(av), [av, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) da.data[(size_t)i * n + j] += g.data[j] / m;
    });
}

inline Value tile_rows(Tape& t, Value av, int m) {
    const Tensor& a = t.val(av);
    require(a.rows() == 1, "tile_rows needs a row vector, got " + a.shape_str());
    int n = a.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[(size_t)i * n + j] = a.data[j];
    return t.push(std::move(out), t.needs_grad(av), [av, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) da.data[j] += g.data[(size_t)i * n + j];
    });
}

inline Value sum_all(Tape& t, Value av) {
    const Tensor& a = t.val(av);
    double s = 0;
    for (double v : a.data) s += v;
    return t.push(Tensor::scalar(s), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        double g = tp.node(self).grad.data[0];
        Tensor& da = tp.grad(av);
        for (double& v : da.data) v += g;
    });
}

inline Value mean_all(Tape& t, Value av) {
    const Tensor& a = t.val(av);
    double s = 0;
    for (double v : a.data) s += v;
    double n = (double)a.numel();
    return t.push(Tensor::scalar(s / n), t.needs_grad(av), [av, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        double g = tp.node(self).grad.data[0] / n;
        Tensor& da = tp.grad(av);
        for (double& v : da.data) v += g;
    });
}

inline Value mse(Tape& t, Value av, Value bv) {
    const Tensor& a = t.val(av);
    const Tensor& b = t.val(bv);
    if (!a.same_shape(b)) detail::shape_error("mse", a, b);
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    double n = (double)a.numel();
    bool ng = t.needs_grad(av) || t.needs_grad(bv);
    return t.push(Tensor::scalar(s / n), ng, [av, bv, n](Tape& tp, int self) {
        double g = 2.0 * tp.node(self).grad.data[0] / n;
        const Tensor& a2 = tp.val(av);
        const Tensor& b2 = tp.val(bv);
        if (tp.needs_grad(av)) {
            Tensor& da = tp.grad(av);
            for (size_t i = 0; i < a2.data.size(); ++i)
                da.data[i] += g * (a2.data[i] - b2.data[i]);
        }
        if (tp.needs_grad(bv)) {
            Tensor& db = tp.grad(bv);
            for (size_t i = 0; i < a2.data.size(); ++i)
                db.data[i] -= g * (a2.data[i] - b2.data[i]);
        }
    });
}

// Loss rows scaled by fixed per-row weights (no gradient w.r.t. weights).
inline Value scale_rows(Tape& t, Value av, const std::vector<double>& w) {
    const Tensor& a = t.val(av);
    require(a.shape.size() == 2 && (int)w.size() == a.shape[0],
            "scale_rows: weight count mismatch with " + a.shape_str());
    int m = a.shape[0], n = a.shape[1];
    Tensor out = a;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[(size_t)i * n + j] *= w[i];
    return t.push(std::move(out), t.needs_grad(av), [av, w, m, n](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) da.data[(size_t)i * n + j] += w[i] * g.data[(size_t)i * n + j];
    });
}

inline Value reshape(Tape& t, Value av, std::vector<int> shape) {
    const Tensor& a = t.val(av);
    require(Tensor::numel_of(shape) == a.numel(),
            "reshape: element count mismatch for " + a.shape_str());
    Tensor out = a;
    out.shape = std::move(shape);
    return t.push(std::move(out), t.needs_grad(av), [av](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    });
}

// Fixed permutation/selection of elements: out.data[i] = in.data[idx[i]].
inline Value gather_fixed(Tape& t, Value av, std::shared_ptr<const std::vector<int>> idx,
                          std::vector<int> out_shape) {
    const Tensor& a = t.val(av);
    Tensor out(std::move(out_shape));
    require((int64_t)idx->size() == out.numel(), "gather_fixed: index count mismatch");
    for (size_t i = 0; i < idx->size(); ++i) out.data[i] = a.data[(*idx)[i]];
    return t.push(std::move(out), t.needs_grad(av), [av, idx](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        for (size_t i = 0; i < idx->size(); ++i) da.data[(*idx)[i]] += g.data[i];
    });
}

// Sparse weighted gather (bilinear paste taps and similar fixed linear maps).
inline Value weighted_gather(Tape& t, Value av, std::shared_ptr<const LinearGather> lg) {
    const Tensor& a = t.val(av);
    Tensor out(lg->out_shape);
    size_t m = (size_t)out.numel();
    require(lg->index.size() == m * lg->taps && lg->weight.size() == m * lg->taps,
            "weighted_gather: tap table size mismatch");
    for (size_t i = 0; i < m; ++i) {
        double acc = 0;
        for (int k = 0; k < lg->taps; ++k) {
            size_t e = i * lg->taps + k;
            acc += lg->weight[e] * a.data[lg->index[e]];
        }
        out.data[i] = acc;
    }
    return t.push(std::move(out), t.needs_grad(av), [av, lg](Tape& tp, int self) {
        if (!tp.needs_grad(av)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& da = tp.grad(av);
        size_t m = g.data.size();
        for (size_t i = 0; i < m; ++i)
            for (int k = 0; k < lg->taps; ++k) {
                size_t e = i * lg->taps + k;
                da.data[lg->index[e]] += lg->weight[e] * g.data[i];
            }
    });
}

// Stop-gradient: value flows, gradient does not.
inline Value detach(Tape& t, Value av) { return t.constant(t.val(av)); }

// softmax(Q K^T / sqrt(dk)) V
inline Value scaled_dot_attention(Tape& t, Value q, Value k, Value v) {
    const Tensor& qt = t.val(q);
    const Tensor& kt = t.val(k);
    require(qt.cols() == kt.cols(), "attention: query/key width mismatch");
    require(kt.rows() == t.val(v).rows(), "attention: key/value row mismatch");
    Value scores = scale(t, matmul(t, q, transpose(t, k)), 1.0 / std::sqrt((double)qt.cols()));
    return matmul(t, softmax_rows(t, scores), v);
}

}  // namespace texlet::nn
