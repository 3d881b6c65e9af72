#include "changen/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace changen::nn {

namespace {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

Var make(std::vector<int> shape, std::vector<real> v, std::initializer_list<Var> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->v = std::move(v);
    if (grad_enabled()) {
        bool req = false;
        for (const Var& p : parents) req = req || p->requires_grad;
        if (req) {
            n->requires_grad = true;
            n->parents.assign(parents.begin(), parents.end());
        }
    }
    return n;
}

void check_same(const Var& a, const Var& b, const char* op) {
    if (a->shape != b->shape) throw DimensionError(std::string(op) + ": shape mismatch");
}

int first_dim(const Var& x) {
    if (x->shape.empty()) throw DimensionError("op: scalar has no first dim");
    return x->shape[0];
}

size_t rest_size(const Var& x) {
    return numel(x->shape) / static_cast<size_t>(x->shape[0]);
}

// Unary elementwise op with derivative computed from input value.
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    std::vector<real> v(a->size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = f(a->v[i]);
    Var out = make(a->shape, std::move(v), {a});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a;
        out->backward_fn = [o, pa, df]() {
            pa->ensure_grad();
            for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i] * df(pa->v[i]);
        };
    }
    return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    std::vector<real> v(a->size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->v[i] + b->v[i];
    Var out = make(a->shape, std::move(v), {a, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a, pb = b;
        out->backward_fn = [o, pa, pb]() {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] += o->g[i];
            }
        };
    }
    return out;
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    std::vector<real> v(a->size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->v[i] - b->v[i];
    Var out = make(a->shape, std::move(v), {a, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a, pb = b;
        out->backward_fn = [o, pa, pb]() {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] -= o->g[i];
            }
        };
    }
    return out;
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    std::vector<real> v(a->size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = a->v[i] * b->v[i];
    Var out = make(a->shape, std::move(v), {a, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a, pb = b;
        out->backward_fn = [o, pa, pb]() {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i] * pb->v[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] += o->g[i] * pa->v[i];
            }
        };
    }
    return out;
}

Var scale(const Var& a, real c) {
    return unary(a, [c](real x) { return c * x; }, [c](real) { return c; });
}

Var add_scalar(const Var& a, real c) {
    return unary(a, [c](real x) { return x + c; }, [](real) { return real{1}; });
}

Var silu(const Var& a) {
    auto sig = [](real x) { return real{1} / (real{1} + std::exp(-x)); };
    return unary(a, [sig](real x) { return x * sig(x); },
                 [sig](real x) {
                     real s = sig(x);
                     return s * (real{1} + x * (real{1} - s));
                 });
}

Var gelu(const Var& a) {
    constexpr real c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr real k = 0.044715;
    return unary(a,
                 [=](real x) { return real{0.5} * x * (real{1} + std::tanh(c * (x + k * x * x * x))); },
                 [=](real x) {
                     real u = c * (x + k * x * x * x);
                     real t = std::tanh(u);
                     return real{0.5} * (real{1} + t) +
                            real{0.5} * x * (real{1} - t * t) * c * (real{1} + 3 * k * x * x);
                 });
}

Var abs_val(const Var& a) {
    return unary(a, [](real x) { return std::abs(x); },
                 [](real x) { return x > 0 ? real{1} : (x < 0 ? real{-1} : real{0}); });
}

Var exp_val(const Var& a) {
    // derivative recomputed from input; avoids keeping the output alive
    return unary(a, [](real x) { return std::exp(x); }, [](real x) { return std::exp(x); });
}

Var clamp01(const Var& a) {
    return unary(a, [](real x) { return std::clamp(x, real{0}, real{1}); },
                 [](real x) { return (x >= 0 && x <= 1) ? real{1} : real{0}; });
}

Var matmul(const Var& a, const Var& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw DimensionError("matmul: incompatible shapes");
    int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<real> v(static_cast<size_t>(m) * n);
    {
        CMatMap A(a->v.data(), m, k), B(b->v.data(), k, n);
        MatMap(v.data(), m, n).noalias() = A * B;
    }
    Var out = make({m, n}, std::move(v), {a, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a, pb = b;
        out->backward_fn = [o, pa, pb, m, k, n]() {
            CMatMap G(o->g.data(), m, n);
            if (pa->requires_grad) {
                pa->ensure_grad();
                CMatMap B(pb->v.data(), k, n);
                MatMap(pa->g.data(), m, k).noalias() += G * B.transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                CMatMap A(pa->v.data(), m, k);
                MatMap(pb->g.data(), k, n).noalias() += A.transpose() * G;
            }
        };
    }
    return out;
}

Var transpose(const Var& a) {
    if (a->shape.size() != 2) throw DimensionError("transpose: needs 2-D input");
    int m = a->shape[0], n = a->shape[1];
    std::vector<real> v(a->size());
    CMatMap A(a->v.data(), m, n);
    MatMap(v.data(), n, m) = A.transpose();
    Var out = make({n, m}, std::move(v), {a});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pa = a;
        out->backward_fn = [o, pa, m, n]() {
            pa->ensure_grad();
            CMatMap G(o->g.data(), n, m);
            MatMap(pa->g.data(), m, n) += G.transpose();
        };
    }
    return out;
}

Var add_rowvec(const Var& x, const Var& b) {
    if (x->shape.size() != 2 || b->size() != static_cast<size_t>(x->shape[1]))
        throw DimensionError("add_rowvec: shape mismatch");
    int n = x->shape[0], d = x->shape[1];
    std::vector<real> v(x->size());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c)
            v[static_cast<size_t>(r) * d + c] = x->v[static_cast<size_t>(r) * d + c] + b->v[c];
    Var out = make(x->shape, std::move(v), {x, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x, pb = b;
        out->backward_fn = [o, px, pb, n, d]() {
            if (px->requires_grad) {
                px->ensure_grad();
                for (size_t i = 0; i < o->g.size(); ++i) px->g[i] += o->g[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < d; ++c) pb->g[c] += o->g[static_cast<size_t>(r) * d + c];
            }
        };
    }
    return out;
}

Var mul_rowvec(const Var& x, const Var& vvec) {
    if (x->shape.size() != 2 || vvec->size() != static_cast<size_t>(x->shape[1]))
        throw DimensionError("mul_rowvec: shape mismatch");
    int n = x->shape[0], d = x->shape[1];
    std::vector<real> v(x->size());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c)
            v[static_cast<size_t>(r) * d + c] = x->v[static_cast<size_t>(r) * d + c] * vvec->v[c];
    Var out = make(x->shape, std::move(v), {x, vvec});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x, pv = vvec;
        out->backward_fn = [o, px, pv, n, d]() {
            if (px->requires_grad) {
                px->ensure_grad();
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < d; ++c)
                        px->g[static_cast<size_t>(r) * d + c] +=
                            o->g[static_cast<size_t>(r) * d + c] * pv->v[c];
            }
            if (pv->requires_grad) {
                pv->ensure_grad();
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < d; ++c)
                        pv->g[c] += o->g[static_cast<size_t>(r) * d + c] *
                                    px->v[static_cast<size_t>(r) * d + c];
            }
        };
    }
    return out;
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_rowvec(matmul(x, w), b); }

Var layer_norm(const Var& x, real eps) {
    if (x->shape.size() != 2) throw DimensionError("layer_norm: needs 2-D input");
    int n = x->shape[0], d = x->shape[1];
    std::vector<real> v(x->size());
    auto inv_std = std::make_shared<std::vector<real>>(n);
    for (int r = 0; r < n; ++r) {
        const real* row = x->v.data() + static_cast<size_t>(r) * d;
        real mu = 0;
        for (int c = 0; c < d; ++c) mu += row[c];
        mu /= d;
        real var = 0;
        for (int c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= d;
        real is = real{1} / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        real* orow = v.data() + static_cast<size_t>(r) * d;
        for (int c = 0; c < d; ++c) orow[c] = (row[c] - mu) * is;
    }
    Var out = make(x->shape, std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px, inv_std, n, d]() {
            px->ensure_grad();
            for (int r = 0; r < n; ++r) {
                const real* y = o->v.data() + static_cast<size_t>(r) * d;
                const real* g = o->g.data() + static_cast<size_t>(r) * d;
                real gm = 0, gym = 0;
                for (int c = 0; c < d; ++c) {
                    gm += g[c];
                    gym += g[c] * y[c];
                }
                gm /= d;
                gym /= d;
                real is = (*inv_std)[r];
                real* gx = px->g.data() + static_cast<size_t>(r) * d;
                for (int c = 0; c < d; ++c) gx[c] += is * (g[c] - gm - y[c] * gym);
            }
        };
    }
    return out;
}

Var softmax_rows(const Var& x) {
    if (x->shape.size() != 2) throw DimensionError("softmax_rows: needs 2-D input");
    int n = x->shape[0], d = x->shape[1];
    std::vector<real> v(x->size());
    for (int r = 0; r < n; ++r) {
        const real* row = x->v.data() + static_cast<size_t>(r) * d;
        real* orow = v.data() + static_cast<size_t>(r) * d;
        real mx = row[0];
        for (int c = 1; c < d; ++c) mx = std::max(mx, row[c]);
        real sum = 0;
        for (int c = 0; c < d; ++c) {
            orow[c] = std::exp(row[c] - mx);
            sum += orow[c];
        }
        for (int c = 0; c < d; ++c) orow[c] /= sum;
    }
    Var out = make(x->shape, std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px, n, d]() {
            px->ensure_grad();
            for (int r = 0; r < n; ++r) {
                const real* p = o->v.data() + static_cast<size_t>(r) * d;
                const real* g = o->g.data() + static_cast<size_t>(r) * d;
                real dot = 0;
                for (int c = 0; c < d; ++c) dot += p[c] * g[c];
                real* gx = px->g.data() + static_cast<size_t>(r) * d;
                for (int c = 0; c < d; ++c) gx[c] += p[c] * (g[c] - dot);
            }
        };
    }
    return out;
}

Var modulate(const Var& x, const Var& shift, const Var& sc) {
    return add_rowvec(add(x, mul_rowvec(x, sc)), shift);
}

Var reshape(const Var& x, std::vector<int> shape) {
    if (numel(shape) != x->size()) throw DimensionError("reshape: element count mismatch");
    Var out = make(std::move(shape), x->v, {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px]() {
            px->ensure_grad();
            for (size_t i = 0; i < o->g.size(); ++i) px->g[i] += o->g[i];
        };
    }
    return out;
}

Var permute_rows(const Var& x, std::vector<int> src_rows) {
    int n = first_dim(x);
    size_t d = rest_size(x);
    int m = static_cast<int>(src_rows.size());
    std::vector<real> v(static_cast<size_t>(m) * d, real{0});
    for (int r = 0; r < m; ++r) {
        int s = src_rows[r];
        if (s >= n) throw DimensionError("permute_rows: index out of range");
        if (s >= 0)
            std::copy_n(x->v.data() + static_cast<size_t>(s) * d, d, v.data() + static_cast<size_t>(r) * d);
    }
    std::vector<int> shape = x->shape;
    shape[0] = m;
    Var out = make(std::move(shape), std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        auto idx = std::make_shared<std::vector<int>>(std::move(src_rows));
        out->backward_fn = [o, px, idx, d]() {
            px->ensure_grad();
            for (size_t r = 0; r < idx->size(); ++r) {
                int s = (*idx)[r];
                if (s < 0) continue;
                real* dst = px->g.data() + static_cast<size_t>(s) * d;
                const real* src = o->g.data() + r * d;
                for (size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        };
    }
    return out;
}

Var permute_elems(const Var& x, std::vector<int64_t> src_idx, std::vector<int> out_shape) {
    if (numel(out_shape) != src_idx.size())
        throw DimensionError("permute_elems: index/shape mismatch");
    std::vector<real> v(src_idx.size(), real{0});
    int64_t n = static_cast<int64_t>(x->size());
    for (size_t i = 0; i < src_idx.size(); ++i) {
        int64_t s = src_idx[i];
        if (s >= n) throw DimensionError("permute_elems: index out of range");
        if (s >= 0) v[i] = x->v[static_cast<size_t>(s)];
    }
    Var out = make(std::move(out_shape), std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        auto idx = std::make_shared<std::vector<int64_t>>(std::move(src_idx));
        out->backward_fn = [o, px, idx]() {
            px->ensure_grad();
            for (size_t i = 0; i < idx->size(); ++i) {
                int64_t s = (*idx)[i];
                if (s >= 0) px->g[static_cast<size_t>(s)] += o->g[i];
            }
        };
    }
    return out;
}

Var slice_rows(const Var& x, int start, int len) {
    int n = first_dim(x);
    if (start < 0 || len < 1 || start + len > n) throw DimensionError("slice_rows: bad range");
    size_t d = rest_size(x);
    std::vector<real> v(static_cast<size_t>(len) * d);
    std::copy_n(x->v.data() + static_cast<size_t>(start) * d, v.size(), v.data());
    std::vector<int> shape = x->shape;
    shape[0] = len;
    Var out = make(std::move(shape), std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px, start, d]() {
            px->ensure_grad();
            real* dst = px->g.data() + static_cast<size_t>(start) * d;
            for (size_t i = 0; i < o->g.size(); ++i) dst[i] += o->g[i];
        };
    }
    return out;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty input");
    size_t d = rest_size(parts[0]);
    int total = 0;
    for (const Var& p : parts) {
        if (rest_size(p) != d) throw DimensionError("concat_rows: row size mismatch");
        total += first_dim(p);
    }
    std::vector<real> v;
    v.reserve(static_cast<size_t>(total) * d);
    for (const Var& p : parts) v.insert(v.end(), p->v.begin(), p->v.end());
    std::vector<int> shape = parts[0]->shape;
    shape[0] = total;

    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->v = std::move(v);
    if (grad_enabled()) {
        bool req = false;
        for (const Var& p : parts) req = req || p->requires_grad;
        if (req) {
            n->requires_grad = true;
            n->parents = parts;
            Node* o = n.get();
            auto ps = std::make_shared<std::vector<Var>>(parts);
            n->backward_fn = [o, ps]() {
                size_t off = 0;
                for (const Var& p : *ps) {
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (size_t i = 0; i < p->size(); ++i) p->g[i] += o->g[off + i];
                    }
                    off += p->size();
                }
            };
        }
    }
    return n;
}

Var slice_cols(const Var& x, int start, int len) {
    if (x->shape.size() != 2) throw DimensionError("slice_cols: needs 2-D input");
    int n = x->shape[0], d = x->shape[1];
    if (start < 0 || len < 1 || start + len > d) throw DimensionError("slice_cols: bad range");
    std::vector<real> v(static_cast<size_t>(n) * len);
    for (int r = 0; r < n; ++r)
        std::copy_n(x->v.data() + static_cast<size_t>(r) * d + start, len,
                    v.data() + static_cast<size_t>(r) * len);
    Var out = make({n, len}, std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px, start, len, n, d]() {
            px->ensure_grad();
            for (int r = 0; r < n; ++r) {
                real* dst = px->g.data() + static_cast<size_t>(r) * d + start;
                const real* src = o->g.data() + static_cast<size_t>(r) * len;
                for (int c = 0; c < len; ++c) dst[c] += src[c];
            }
        };
    }
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty input");
    int n = parts[0]->shape[0];
    int total = 0;
    for (const Var& p : parts) {
        if (p->shape.size() != 2 || p->shape[0] != n)
            throw DimensionError("concat_cols: row count mismatch");
        total += p->shape[1];
    }
    std::vector<real> v(static_cast<size_t>(n) * total);
    int off = 0;
    for (const Var& p : parts) {
        int d = p->shape[1];
        for (int r = 0; r < n; ++r)
            std::copy_n(p->v.data() + static_cast<size_t>(r) * d, d,
                        v.data() + static_cast<size_t>(r) * total + off);
        off += d;
    }
    auto node = std::make_shared<Node>();
    node->shape = {n, total};
    node->v = std::move(v);
    if (grad_enabled()) {
        bool req = false;
        for (const Var& p : parts) req = req || p->requires_grad;
        if (req) {
            node->requires_grad = true;
            node->parents = parts;
            Node* o = node.get();
            auto ps = std::make_shared<std::vector<Var>>(parts);
            node->backward_fn = [o, ps, n, total]() {
                int off2 = 0;
                for (const Var& p : *ps) {
                    int d = p->shape[1];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int r = 0; r < n; ++r) {
                            const real* src = o->g.data() + static_cast<size_t>(r) * total + off2;
                            real* dst = p->g.data() + static_cast<size_t>(r) * d;
                            for (int c = 0; c < d; ++c) dst[c] += src[c];
                        }
                    }
                    off2 += d;
                }
            };
        }
    }
    return node;
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->shape.size() != 3 || w->shape.size() != 4)
        throw DimensionError("conv2d: expects x [C,H,W], w [Cout,Cin,kh,kw]");
    int cin = x->shape[0], h = x->shape[1], wd = x->shape[2];
    int cout = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    if (w->shape[1] != cin) throw DimensionError("conv2d: channel mismatch");
    if (b->size() != static_cast<size_t>(cout)) throw DimensionError("conv2d: bias mismatch");
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw DimensionError("conv2d: output would be empty");

    int krows = cin * kh * kw;
    int npos = ho * wo;
    // colsT: [Cin*kh*kw, Ho*Wo]
    auto colsT = std::make_shared<std::vector<real>>(static_cast<size_t>(krows) * npos, real{0});
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                real* row = colsT->data() + (static_cast<size_t>(ci) * kh * kw + ky * kw + kx) * npos;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const real* src = x->v.data() + (static_cast<size_t>(ci) * h + iy) * wd;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < wd) row[oy * wo + ox] = src[ix];
                    }
                }
            }

    std::vector<real> v(static_cast<size_t>(cout) * npos);
    {
        CMatMap W2(w->v.data(), cout, krows);
        CMatMap C2(colsT->data(), krows, npos);
        MatMap(v.data(), cout, npos).noalias() = W2 * C2;
        for (int co = 0; co < cout; ++co) {
            real bias = b->v[co];
            real* row = v.data() + static_cast<size_t>(co) * npos;
            for (int i = 0; i < npos; ++i) row[i] += bias;
        }
    }
    Var out = make({cout, ho, wo}, std::move(v), {x, w, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x, pw = w, pb = b;
        out->backward_fn = [o, px, pw, pb, colsT, cin, h, wd, cout, kh, kw, stride, pad, ho, wo,
                            krows, npos]() {
            CMatMap G(o->g.data(), cout, npos);
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int co = 0; co < cout; ++co) pb->g[co] += G.row(co).sum();
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                CMatMap C2(colsT->data(), krows, npos);
                MatMap(pw->g.data(), cout, krows).noalias() += G * C2.transpose();
            }
            if (px->requires_grad) {
                px->ensure_grad();
                CMatMap W2(pw->v.data(), cout, krows);
                Mat dcols = W2.transpose() * G;  // [krows, npos]
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const real* row =
                                dcols.data() +
                                (static_cast<size_t>(ci) * kh * kw + ky * kw + kx) * npos;
                            for (int oy = 0; oy < ho; ++oy) {
                                int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                real* dst = px->g.data() + (static_cast<size_t>(ci) * h + iy) * wd;
                                for (int ox = 0; ox < wo; ++ox) {
                                    int ix = ox * stride + kx - pad;
                                    if (ix >= 0 && ix < wd) dst[ix] += row[oy * wo + ox];
                                }
                            }
                        }
            }
        };
    }
    return out;
}

Var depthwise_conv3x3(const Var& x, const Var& w, const Var& b) {
    if (x->shape.size() != 3 || w->shape.size() != 3 || w->shape[1] != 3 || w->shape[2] != 3)
        throw DimensionError("depthwise_conv3x3: expects x [C,H,W], w [C,3,3]");
    int c = x->shape[0], h = x->shape[1], wd = x->shape[2];
    if (w->shape[0] != c || b->size() != static_cast<size_t>(c))
        throw DimensionError("depthwise_conv3x3: channel mismatch");

    std::vector<real> v(x->size());
    for (int ci = 0; ci < c; ++ci) {
        const real* in = x->v.data() + static_cast<size_t>(ci) * h * wd;
        const real* k = w->v.data() + static_cast<size_t>(ci) * 9;
        real bias = b->v[ci];
        real* outp = v.data() + static_cast<size_t>(ci) * h * wd;
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < wd; ++x2) {
                real acc = bias;
                for (int ky = -1; ky <= 1; ++ky) {
                    int iy = y + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = -1; kx <= 1; ++kx) {
                        int ix = x2 + kx;
                        if (ix < 0 || ix >= wd) continue;
                        acc += in[iy * wd + ix] * k[(ky + 1) * 3 + (kx + 1)];
                    }
                }
                outp[y * wd + x2] = acc;
            }
    }
    Var out = make(x->shape, std::move(v), {x, w, b});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x, pw = w, pb = b;
        out->backward_fn = [o, px, pw, pb, c, h, wd]() {
            for (int ci = 0; ci < c; ++ci) {
                const real* g = o->g.data() + static_cast<size_t>(ci) * h * wd;
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    real acc = 0;
                    for (int i = 0; i < h * wd; ++i) acc += g[i];
                    pb->g[ci] += acc;
                }
                if (pw->requires_grad) {
                    pw->ensure_grad();
                    const real* in = px->v.data() + static_cast<size_t>(ci) * h * wd;
                    real* gk = pw->g.data() + static_cast<size_t>(ci) * 9;
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            real acc = 0;
                            for (int y = std::max(0, -ky); y < h - std::max(0, ky); ++y)
                                for (int x2 = std::max(0, -kx); x2 < wd - std::max(0, kx); ++x2)
                                    acc += g[y * wd + x2] * in[(y + ky) * wd + (x2 + kx)];
                            gk[(ky + 1) * 3 + (kx + 1)] += acc;
                        }
                }
                if (px->requires_grad) {
                    px->ensure_grad();
                    const real* k = pw->v.data() + static_cast<size_t>(ci) * 9;
                    real* gx = px->g.data() + static_cast<size_t>(ci) * h * wd;
                    for (int y = 0; y < h; ++y)
                        for (int x2 = 0; x2 < wd; ++x2) {
                            real gv = g[y * wd + x2];
                            for (int ky = -1; ky <= 1; ++ky) {
                                int iy = y + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = -1; kx <= 1; ++kx) {
                                    int ix = x2 + kx;
                                    if (ix < 0 || ix >= wd) continue;
                                    gx[iy * wd + ix] += gv * k[(ky + 1) * 3 + (kx + 1)];
                                }
                            }
                        }
                }
            }
        };
    }
    return out;
}

Var upsample_nearest(const Var& x, int factor) {
    if (x->shape.size() != 3) throw DimensionError("upsample_nearest: expects [C,H,W]");
    if (factor < 1) throw ParameterError("upsample_nearest: factor must be >= 1");
    if (factor == 1) return x;
    int c = x->shape[0], h = x->shape[1], wd = x->shape[2];
    int ho = h * factor, wo = wd * factor;
    std::vector<real> v(static_cast<size_t>(c) * ho * wo);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < ho; ++y) {
            const real* src = x->v.data() + (static_cast<size_t>(ci) * h + y / factor) * wd;
            real* dst = v.data() + (static_cast<size_t>(ci) * ho + y) * wo;
            for (int x2 = 0; x2 < wo; ++x2) dst[x2] = src[x2 / factor];
        }
    Var out = make({c, ho, wo}, std::move(v), {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px, c, h, wd, factor]() {
            px->ensure_grad();
            int ho2 = h * factor, wo2 = wd * factor;
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < ho2; ++y) {
                    real* dst = px->g.data() + (static_cast<size_t>(ci) * h + y / factor) * wd;
                    const real* src = o->g.data() + (static_cast<size_t>(ci) * ho2 + y) * wo2;
                    for (int x2 = 0; x2 < wo2; ++x2) dst[x2 / factor] += src[x2];
                }
        };
    }
    return out;
}

Var sum(const Var& x) {
    real acc = 0;
    for (real a : x->v) acc += a;
    Var out = make({1}, {acc}, {x});
    if (out->requires_grad) {
        Node* o = out.get();
        Var px = x;
        out->backward_fn = [o, px]() {
            px->ensure_grad();
            for (size_t i = 0; i < px->g.size(); ++i) px->g[i] += o->g[0];
        };
    }
    return out;
}

Var mean(const Var& x) { return scale(sum(x), real{1} / static_cast<real>(x->size())); }

Var mse_loss(const Var& pred, const std::vector<real>& target) {
    if (pred->size() != target.size()) throw DimensionError("mse_loss: shape mismatch");
    real acc = 0;
    for (size_t i = 0; i < target.size(); ++i) {
        real d = pred->v[i] - target[i];
        acc += d * d;
    }
    real n = static_cast<real>(target.size());
    Var out = make({1}, {acc / n}, {pred});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pp = pred;
        auto t = std::make_shared<std::vector<real>>(target);
        out->backward_fn = [o, pp, t, n]() {
            pp->ensure_grad();
            real s = real{2} / n * o->g[0];
            for (size_t i = 0; i < t->size(); ++i) pp->g[i] += s * (pp->v[i] - (*t)[i]);
        };
    }
    return out;
}

Var bce_with_logits(const Var& logits, const std::vector<real>& targets) {
    if (logits->size() != targets.size()) throw DimensionError("bce_with_logits: shape mismatch");
    real acc = 0;
    for (size_t i = 0; i < targets.size(); ++i) {
        real z = logits->v[i], y = targets[i];
        acc += std::max(z, real{0}) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    real n = static_cast<real>(targets.size());
    Var out = make({1}, {acc / n}, {logits});
    if (out->requires_grad) {
        Node* o = out.get();
        Var pl = logits;
        auto t = std::make_shared<std::vector<real>>(targets);
        out->backward_fn = [o, pl, t, n]() {
            pl->ensure_grad();
            real s = o->g[0] / n;
            for (size_t i = 0; i < t->size(); ++i) {
                real sig = real{1} / (real{1} + std::exp(-pl->v[i]));
                pl->g[i] += s * (sig - (*t)[i]);
            }
        };
    }
    return out;
}

Var detach(const Var& x) { return constant(x->shape, x->v); }

}  // namespace changen::nn
