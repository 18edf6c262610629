#include "pave/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace pave {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Small and vector-shaped products go through plain scalar loops: Eigen's
// lazy/gemv kernels for those shapes round differently depending on the
// runtime alignment of the buffers, which would make reruns non-reproducible.
// Only true gemm (which packs its operands) is bit-stable, so Eigen is used
// for the large matrix-matrix case alone.
bool scalar_product(std::int64_t m, std::int64_t k, std::int64_t n) {
    return m * k * n <= 4096 || m == 1 || n == 1;
}

void check_finite(const TensorNode& t) {
#ifndef NDEBUG
    for (double v : t.data) {
        if (!std::isfinite(v)) throw std::runtime_error("non-finite value produced in op'" + t.name + "'");
    }
#endif
}

Var node_like(std::vector<std::int64_t> shape, std::vector<Var> parents, const char* opname) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    n->name = opname;
    for (const auto& p : n->parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    return n;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->shape != b->shape) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                                    shape_str(b->shape));
    }
}

// y = f(a) elementwise with dy/da supplied as a function of (a, y).
// Templated so the per-element calls inline.
template <class F, class DF>
Var unary_op(const Var& a, const char* opname, F f, DF dfda) {
    Var out = node_like(a->shape, {a}, opname);
    out->data.resize(a->data.size());
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = f(a->data[i]);
    check_finite(*out);
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa, dfda]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) {
                pa->grad[i] += o->grad[i] * dfda(pa->data[i], o->data[i]);
            }
        };
    }
    return out;
}

}  // namespace

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Var make_var(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("make_var: negative dimension");
        n *= d;
    }
    if (static_cast<std::int64_t>(data.size()) != n) {
        throw std::invalid_argument("make_var: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto v = std::make_shared<TensorNode>();
    v->shape = std::move(shape);
    v->data = std::move(data);
    v->requires_grad = requires_grad;
    return v;
}

Var zeros(std::vector<std::int64_t> shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Var full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return make_var(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Var scalar(double value) { return make_var({1}, {value}); }

Var clone_leaf(const Var& v) {
    auto c = std::make_shared<TensorNode>();
    c->shape = v->shape;
    c->data = v->data;
    c->requires_grad = v->requires_grad;
    c->name = v->name;
    return c;
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Var out = node_like(a->shape, {a, b}, "add");
    out->data.resize(a->data.size());
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb]() {
            if (pa->requires_grad || !pa->parents.empty()) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < pa->data.size(); ++i) pa->grad[i] += o->grad[i];
            }
            if (pb->requires_grad || !pb->parents.empty()) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < pb->data.size(); ++i) pb->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Var out = node_like(a->shape, {a, b}, "sub");
    out->data.resize(a->data.size());
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb]() {
            pa->ensure_grad();
            pb->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) {
                pa->grad[i] += o->grad[i];
                pb->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Var out = node_like(a->shape, {a, b}, "mul");
    out->data.resize(a->data.size());
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb]() {
            pa->ensure_grad();
            pb->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) {
                pa->grad[i] += o->grad[i] * pb->data[i];
                pb->grad[i] += o->grad[i] * pa->data[i];
            }
        };
    }
    return out;
}

Var divide(const Var& a, const Var& b) {
    require_same_shape(a, b, "divide");
    Var out = node_like(a->shape, {a, b}, "divide");
    out->data.resize(a->data.size());
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] / b->data[i];
    check_finite(*out);
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb]() {
            pa->ensure_grad();
            pb->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) {
                const double inv = 1.0 / pb->data[i];
                pa->grad[i] += o->grad[i] * inv;
                pb->grad[i] -= o->grad[i] * pa->data[i] * inv * inv;
            }
        };
    }
    return out;
}

Var scale(const Var& a, double s) {
    return unary_op(a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary_op(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
    return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
    return unary_op(a, "sigmoid",
                    [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
    return unary_op(a, "softplus", [](double x) { return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0))); },
                    [](double x, double) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var exp_(const Var& a) {
    return unary_op(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_(const Var& a) {
    return unary_op(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs_(const Var& a) {
    return unary_op(a, "abs", [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var powc(const Var& a, double p) {
    return unary_op(a, "powc", [p](double x) { return std::pow(x, p); },
                    [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Var matmul(const Var& a, const Var& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a->shape) + " x " + shape_str(b->shape));
    }
    const auto m = a->dim(0), k = a->dim(1), n = b->dim(1);
    Var out = node_like({m, n}, {a, b}, "matmul");
    out->data.resize(static_cast<std::size_t>(m * n));
    if (scalar_product(m, k, n)) {
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::int64_t p = 0; p < k; ++p) acc += a->data[static_cast<std::size_t>(i * k + p)] * b->data[static_cast<std::size_t>(p * n + j)];
                out->data[static_cast<std::size_t>(i * n + j)] = acc;
            }
        }
    } else {
        CMatMap A(a->data.data(), m, k), B(b->data.data(), k, n);
        MatMap C(out->data.data(), m, n);
        C.noalias() = A * B;
    }
    check_finite(*out);
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb, m, k, n]() {
            pa->ensure_grad();
            pb->ensure_grad();
            const double* g = o->grad.data();
            const double* ad = pa->data.data();
            const double* bd = pb->data.data();
            double* ga = pa->grad.data();
            double* gb = pb->grad.data();
            if (scalar_product(m, n, k)) {  // GA += G [m,n] * B^T [n,k]
                for (std::int64_t i = 0; i < m; ++i) {
                    for (std::int64_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
                        ga[i * k + p] += acc;
                    }
                }
            } else {
                CMatMap G(g, m, n), B2(bd, k, n);
                MatMap GA(ga, m, k);
                GA.noalias() += G * B2.transpose();
            }
            if (scalar_product(k, m, n)) {  // GB += A^T [k,m] * G [m,n]
                for (std::int64_t p = 0; p < k; ++p) {
                    for (std::int64_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < m; ++i) acc += ad[i * k + p] * g[i * n + j];
                        gb[p * n + j] += acc;
                    }
                }
            } else {
                CMatMap G(g, m, n), A2(ad, m, k);
                MatMap GB(gb, k, n);
                GB.noalias() += A2.transpose() * G;
            }
        };
    }
    return out;
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(1)) {
        throw std::invalid_argument("matmul_nt: incompatible shapes " + shape_str(a->shape) + " x " +
                                    shape_str(b->shape) + "^T");
    }
    const auto m = a->dim(0), k = a->dim(1), n = b->dim(0);
    Var out = node_like({m, n}, {a, b}, "matmul_nt");
    out->data.resize(static_cast<std::size_t>(m * n));
    if (scalar_product(m, k, n)) {
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::int64_t p = 0; p < k; ++p) acc += a->data[static_cast<std::size_t>(i * k + p)] * b->data[static_cast<std::size_t>(j * k + p)];
                out->data[static_cast<std::size_t>(i * n + j)] = acc;
            }
        }
    } else {
        CMatMap A(a->data.data(), m, k), B(b->data.data(), n, k);
        MatMap C(out->data.data(), m, n);
        C.noalias() = A * B.transpose();
    }
    check_finite(*out);
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a, pb = b;
        out->backprop = [o, pa, pb, m, k, n]() {
            pa->ensure_grad();
            pb->ensure_grad();
            const double* g = o->grad.data();
            const double* ad = pa->data.data();
            const double* bd = pb->data.data();
            double* ga = pa->grad.data();
            double* gb = pb->grad.data();
            if (scalar_product(m, n, k)) {  // GA += G [m,n] * B [n,k]
                for (std::int64_t i = 0; i < m; ++i) {
                    for (std::int64_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[j * k + p];
                        ga[i * k + p] += acc;
                    }
                }
            } else {
                CMatMap G(g, m, n), B2(bd, n, k);
                MatMap GA(ga, m, k);
                GA.noalias() += G * B2;
            }
            if (scalar_product(n, m, k)) {  // GB += G^T [n,m] * A [m,k]
                for (std::int64_t j = 0; j < n; ++j) {
                    for (std::int64_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < m; ++i) acc += g[i * n + j] * ad[i * k + p];
                        gb[j * k + p] += acc;
                    }
                }
            } else {
                CMatMap G(g, m, n), A2(ad, m, k);
                MatMap GB(gb, n, k);
                GB.noalias() += G.transpose() * A2;
            }
        };
    }
    return out;
}

Var add_bias(const Var& x, const Var& b) {
    if (x->rank() < 1 || b->rank() != 1 || x->shape.back() != b->dim(0)) {
        throw std::invalid_argument("add_bias: shapes " + shape_str(x->shape) + " + " + shape_str(b->shape));
    }
    const auto n = b->dim(0);
    Var out = node_like(x->shape, {x, b}, "add_bias");
    out->data.resize(x->data.size());
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] + b->data[i % n];
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var px = x, pb = b;
        out->backprop = [o, px, pb, n]() {
            px->ensure_grad();
            pb->ensure_grad();
            for (std::size_t i = 0; i < px->data.size(); ++i) {
                px->grad[i] += o->grad[i];
                pb->grad[i % n] += o->grad[i];
            }
        };
    }
    return out;
}

Var reshape(const Var& a, std::vector<std::int64_t> new_shape) {
    std::int64_t n = 1;
    for (auto d : new_shape) n *= d;
    if (n != a->numel()) {
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(a->shape) + " -> " + shape_str(new_shape));
    }
    Var out = node_like(std::move(new_shape), {a}, "reshape");
    out->data = a->data;
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) pa->grad[i] += o->grad[i];
        };
    }
    return out;
}

Var slice_rows(const Var& a, std::int64_t start, std::int64_t count) {
    if (a->rank() != 2 || start < 0 || count < 0 || start + count > a->dim(0)) {
        throw std::invalid_argument("slice_rows: invalid range");
    }
    const auto n = a->dim(1);
    Var out = node_like({count, n}, {a}, "slice_rows");
    out->data.assign(a->data.begin() + start * n, a->data.begin() + (start + count) * n);
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa, start, n]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < o->data.size(); ++i) pa->grad[static_cast<std::size_t>(start * n) + i] += o->grad[i];
        };
    }
    return out;
}

Var slice_cols(const Var& a, std::int64_t start, std::int64_t count) {
    if (a->rank() != 2 || start < 0 || count < 0 || start + count > a->dim(1)) {
        throw std::invalid_argument("slice_cols: invalid range");
    }
    const auto m = a->dim(0), n = a->dim(1);
    Var out = node_like({m, count}, {a}, "slice_cols");
    out->data.resize(static_cast<std::size_t>(m * count));
    for (std::int64_t r = 0; r < m; ++r) {
        std::copy_n(a->data.begin() + r * n + start, count, out->data.begin() + r * count);
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa, start, m, n, count]() {
            pa->ensure_grad();
            for (std::int64_t r = 0; r < m; ++r) {
                for (std::int64_t c = 0; c < count; ++c) {
                    pa->grad[static_cast<std::size_t>(r * n + start + c)] += o->grad[static_cast<std::size_t>(r * count + c)];
                }
            }
        };
    }
    return out;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const auto n = parts[0]->rank() == 2 ? parts[0]->dim(1) : -1;
    std::int64_t rows = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->dim(1) != n) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p->dim(0);
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    Var out = node_like({rows, n}, std::move(parents), "concat_rows");
    out->data.reserve(static_cast<std::size_t>(rows * n));
    for (const auto& p : parts) out->data.insert(out->data.end(), p->data.begin(), p->data.end());
    if (out->requires_grad) {
        TensorNode* o = out.get();
        std::vector<Var> ps = parts;
        out->backprop = [o, ps]() {
            std::size_t off = 0;
            for (const auto& p : ps) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += o->grad[off + i];
                off += p->data.size();
            }
        };
    }
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const auto m = parts[0]->dim(0);
    std::int64_t cols = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->dim(1);
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    Var out = node_like({m, cols}, std::move(parents), "concat_cols");
    out->data.resize(static_cast<std::size_t>(m * cols));
    std::int64_t coff = 0;
    for (const auto& p : parts) {
        const auto pn = p->dim(1);
        for (std::int64_t r = 0; r < m; ++r) {
            std::copy_n(p->data.begin() + r * pn, pn, out->data.begin() + r * cols + coff);
        }
        coff += pn;
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        std::vector<Var> ps = parts;
        out->backprop = [o, ps, m, cols]() {
            std::int64_t off = 0;
            for (const auto& p : ps) {
                p->ensure_grad();
                const auto pn = p->dim(1);
                for (std::int64_t r = 0; r < m; ++r) {
                    for (std::int64_t c = 0; c < pn; ++c) {
                        p->grad[static_cast<std::size_t>(r * pn + c)] += o->grad[static_cast<std::size_t>(r * cols + off + c)];
                    }
                }
                off += pn;
            }
        };
    }
    return out;
}

Var gather_rows(const Var& a, const std::vector<std::int64_t>& indices) {
    if (a->rank() != 2) throw std::invalid_argument("gather_rows: need rank-2");
    const auto m = a->dim(0), n = a->dim(1);
    for (auto i : indices) {
        if (i < 0 || i >= m) throw std::invalid_argument("gather_rows: index out of range");
    }
    Var out = node_like({static_cast<std::int64_t>(indices.size()), n}, {a}, "gather_rows");
    out->data.resize(indices.size() * static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        std::copy_n(a->data.begin() + indices[r] * n, n, out->data.begin() + static_cast<std::int64_t>(r) * n);
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        std::vector<std::int64_t> idx = indices;
        out->backprop = [o, pa, idx, n]() {
            pa->ensure_grad();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                for (std::int64_t c = 0; c < n; ++c) {
                    pa->grad[static_cast<std::size_t>(idx[r] * n + c)] += o->grad[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)];
                }
            }
        };
    }
    return out;
}

Var repeat_rows(const Var& a, std::int64_t times) {
    if (a->rank() != 2 || times < 1) throw std::invalid_argument("repeat_rows: bad args");
    const auto m = a->dim(0), n = a->dim(1);
    Var out = node_like({m * times, n}, {a}, "repeat_rows");
    out->data.resize(static_cast<std::size_t>(m * times * n));
    for (std::int64_t t = 0; t < times; ++t) {
        std::copy(a->data.begin(), a->data.end(), out->data.begin() + t * m * n);
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa, times]() {
            pa->ensure_grad();
            const std::size_t sz = pa->data.size();
            for (std::int64_t t = 0; t < times; ++t) {
                for (std::size_t i = 0; i < sz; ++i) pa->grad[i] += o->grad[static_cast<std::size_t>(t) * sz + i];
            }
        };
    }
    return out;
}

Var sum(const Var& a) {
    Var out = node_like({1}, {a}, "sum");
    double s = 0.0;
    for (double v : a->data) s += v;
    out->data = {s};
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) pa->grad[i] += o->grad[0];
        };
    }
    return out;
}

Var mean(const Var& a) {
    if (a->numel() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a->numel()));
}

Var softmax(const Var& a, std::size_t axis) {
    if (axis >= a->rank()) throw std::invalid_argument("softmax: axis out of range");
    if (a->dim(axis) == 0) throw std::invalid_argument("softmax: empty axis");
    const std::int64_t axis_len = a->dim(axis);
    std::int64_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < a->rank(); ++i) inner *= a->dim(i);
    for (std::size_t i = 0; i < axis; ++i) outer *= a->dim(i);
    Var out = node_like(a->shape, {a}, "softmax");
    out->data.resize(a->data.size());
    for (std::int64_t ou = 0; ou < outer; ++ou) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = ou * axis_len * inner + in;
            double mx = -1e308;
            for (std::int64_t k = 0; k < axis_len; ++k) mx = std::max(mx, a->data[static_cast<std::size_t>(base + k * inner)]);
            double denom = 0.0;
            for (std::int64_t k = 0; k < axis_len; ++k) {
                const double e = std::exp(a->data[static_cast<std::size_t>(base + k * inner)] - mx);
                out->data[static_cast<std::size_t>(base + k * inner)] = e;
                denom += e;
            }
            for (std::int64_t k = 0; k < axis_len; ++k) out->data[static_cast<std::size_t>(base + k * inner)] /= denom;
        }
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pa = a;
        out->backprop = [o, pa, outer, inner, axis_len]() {
            pa->ensure_grad();
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = ou * axis_len * inner + in;
                    double dot = 0.0;
                    for (std::int64_t k = 0; k < axis_len; ++k) {
                        const auto i = static_cast<std::size_t>(base + k * inner);
                        dot += o->grad[i] * o->data[i];
                    }
                    for (std::int64_t k = 0; k < axis_len; ++k) {
                        const auto i = static_cast<std::size_t>(base + k * inner);
                        pa->grad[i] += o->data[i] * (o->grad[i] - dot);
                    }
                }
            }
        };
    }
    return out;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->rank() < 1) throw std::invalid_argument("layer_norm: need rank >= 1");
    const std::int64_t d = x->shape.back();
    if (gamma->numel() != d || beta->numel() != d) {
        throw std::invalid_argument("layer_norm: gamma/beta length " + std::to_string(gamma->numel()) + "/" +
                                    std::to_string(beta->numel()) + " does not match feature dim " + std::to_string(d));
    }
    const std::int64_t rows = x->numel() / d;
    Var out = node_like(x->shape, {x, gamma, beta}, "layer_norm");
    out->data.resize(x->data.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows)), means(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x->data.data() + r * d;
        double mu = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        means[static_cast<std::size_t>(r)] = mu;
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            out->data[static_cast<std::size_t>(r * d + j)] = (xr[j] - mu) * is * gamma->data[static_cast<std::size_t>(j)] +
                                                             beta->data[static_cast<std::size_t>(j)];
        }
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var px = x, pg = gamma, pb = beta;
        out->backprop = [o, px, pg, pb, rows, d, means, inv_std]() {
            px->ensure_grad();
            pg->ensure_grad();
            pb->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xr = px->data.data() + r * d;
                const double* gr = o->grad.data() + r * d;
                const double mu = means[static_cast<std::size_t>(r)];
                const double is = inv_std[static_cast<std::size_t>(r)];
                double sum_gy = 0.0, sum_gyx = 0.0;
                for (std::int64_t j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - mu) * is;
                    const double gy = gr[j] * pg->data[static_cast<std::size_t>(j)];
                    sum_gy += gy;
                    sum_gyx += gy * xhat;
                    pg->grad[static_cast<std::size_t>(j)] += gr[j] * xhat;
                    pb->grad[static_cast<std::size_t>(j)] += gr[j];
                }
                for (std::int64_t j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - mu) * is;
                    const double gy = gr[j] * pg->data[static_cast<std::size_t>(j)];
                    px->grad[static_cast<std::size_t>(r * d + j)] +=
                        is * (gy - sum_gy / static_cast<double>(d) - xhat * sum_gyx / static_cast<double>(d));
                }
            }
        };
    }
    return out;
}

Tape backward(const Var& loss) {
    if (loss->numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    Tape tape;
    // Iterative post-order DFS; each node appears once, after all its parents'
    // consumers, so the reversed order is a valid gradient schedule.
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (!visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            tape.order.push_back(node);
            stack.pop_back();
        }
    }
    // tape.order is now topologically sorted (parents before consumers).
    for (TensorNode* n : tape.order) {
        n->grad.assign(n->data.size(), 0.0);
    }
    loss->grad[0] = 1.0;
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
    return tape;
}

double finite_difference_check(const std::function<Var(const Var&)>& fn, const Var& x, double eps) {
    Var x0 = clone_leaf(x);
    x0->requires_grad = true;
    Var y = fn(x0);
    backward(y);
    std::vector<double> analytic = x0->grad;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x0->data.size(); ++i) {
        Var xp = clone_leaf(x);
        xp->data[i] += eps;
        Var xm = clone_leaf(x);
        xm->data[i] -= eps;
        const double fd = (fn(xp)->data[0] - fn(xm)->data[0]) / (2.0 * eps);
        const double rel = std::fabs(fd - analytic[i]) / (std::fabs(analytic[i]) + 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

std::uint64_t Rng::next_u64() {
    // splitmix64
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    return z ^ (z >> 27);
}

}  // namespace pave
