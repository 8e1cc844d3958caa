#pragma once

// Dense float64 tensors with reverse-mode gradient accumulation.
// Graphs are built dynamically: every op records a backprop closure on the
// result node. backward() walks the graph in reverse topological order and
// adds into each parent's grad buffer (explicit zeroing between steps).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace aft {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl>();
        impl->shape = std::move(shape);
        impl->value.assign(numel(impl->shape), 0.0);
        impl->requires_grad = requires_grad;
        return Tensor(impl);
    }

    static Tensor constant(Shape shape, std::vector<double> data) {
        auto impl = std::make_shared<TensorImpl>();
        if (numel(shape) != data.size())
            throw ShapeError("constant: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        impl->shape = std::move(shape);
        impl->value = std::move(data);
        return Tensor(impl);
    }

    static Tensor param(Shape shape, std::vector<double> data) {
        Tensor t = constant(std::move(shape), std::move(data));
        t.impl_->requires_grad = true;
        return t;
    }

    static Tensor vec(std::vector<double> data) {
        const std::size_t n = data.size();
        return constant({n}, std::move(data));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return constant({rows, cols}, std::move(data));
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->value.size(); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t rows() const { return impl_->shape.at(0); }
    std::size_t cols() const { return impl_->shape.at(1); }

    std::vector<double>& data() { return impl_->value; }
    const std::vector<double>& data() const { return impl_->value; }
    double operator[](std::size_t i) const { return impl_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return impl_->value[r * cols() + c]; }

    bool requires_grad() const { return impl_->requires_grad; }
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() { impl_->grad.assign(impl_->value.size(), 0.0); }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    TensorImpl* raw() const { return impl_.get(); }

    bool all_finite() const {
        for (double v : impl_->value)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(value);
    for (const auto& p : parents) {
        impl->requires_grad = impl->requires_grad || p.requires_grad();
        impl->parents.push_back(p.impl());
    }
    return Tensor(impl);
}

}  // namespace detail

// ---- elementwise ----

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    Tensor out = detail::make_result(a.shape(), std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    Tensor out = detail::make_result(a.shape(), std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    Tensor out = detail::make_result(a.shape(), std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    ai->grad[i] += o->grad[i] * bi->value[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    bi->grad[i] += o->grad[i] * ai->value[i];
            }
        };
    }
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
    Tensor out = detail::make_result(a.shape(), std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, c] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i] * c;
        };
    }
    return out;
}

// out = s[idx] * a, where s is a (trainable) vector; the route by which the
// focus weight alpha_f multiplies each per-focus attention output.
inline Tensor scale_by_element(const Tensor& a, const Tensor& s, std::size_t idx) {
    if (idx >= s.size()) throw ShapeError("scale_by_element: index out of range");
    double c = s[idx];
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
    Tensor out = detail::make_result(a.shape(), std::move(v), {a, s});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto si = s.impl().get();
        out.raw()->backprop = [o, ai, si, idx, c] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i] * c;
            }
            if (si->requires_grad) {
                si->ensure_grad();
                double acc = 0.0;
                for (std::size_t i = 0; i < o->grad.size(); ++i) acc += o->grad[i] * ai->value[i];
                si->grad[idx] += acc;
            }
        };
    }
    return out;
}

inline Tensor tanh_t(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a[i]);
    Tensor out = detail::make_result(a.shape(), std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                ai->grad[i] += o->grad[i] * (1.0 - o->value[i] * o->value[i]);
        };
    }
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-a[i]));
    Tensor out = detail::make_result(a.shape(), std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                ai->grad[i] += o->grad[i] * o->value[i] * (1.0 - o->value[i]);
        };
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] > 0.0 ? a[i] : 0.0;
    Tensor out = detail::make_result(a.shape(), std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                if (ai->value[i] > 0.0) ai->grad[i] += o->grad[i];
        };
    }
    return out;
}

// ---- linear algebra ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> v(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* vrow = v.data() + i * n;
        const double* arow = pa + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double aval = arow[t];
            const double* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) vrow[j] += aval * brow[j];
        }
    }
    Tensor out = detail::make_result({m, n}, std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi, m, k, n] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                // dA = dC * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        const double* grow = o->grad.data() + i * n;
                        const double* brow = bi->value.data() + t * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ai->grad[i * k + t] += acc;
                    }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                // dB = A^T * dC
                for (std::size_t i = 0; i < m; ++i) {
                    const double* arow = ai->value.data() + i * k;
                    const double* grow = o->grad.data() + i * n;
                    for (std::size_t t = 0; t < k; ++t) {
                        const double aval = arow[t];
                        double* brow = bi->grad.data() + t * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += aval * grow[j];
                    }
                }
            }
        };
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a.data()[i * n + j];
    Tensor out = detail::make_result({n, m}, std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, m, n] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += o->grad[j * m + i];
        };
    }
    return out;
}

// Broadcast-add a length-n vector to every row of an m x n matrix.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 1 || a.cols() != b.size())
        throw ShapeError("add_rowvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = a.data()[i * n + j] + b[j];
    Tensor out = detail::make_result(a.shape(), std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi, m, n] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) bi->grad[j] += o->grad[i * n + j];
            }
        };
    }
    return out;
}

inline Tensor concat_vec(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw ShapeError("concat_vec: rank-1 tensors required");
    std::vector<double> v;
    v.reserve(a.size() + b.size());
    v.insert(v.end(), a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    Tensor out = detail::make_result({a.size() + b.size()}, std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        const std::size_t na = a.size();
        out.raw()->backprop = [o, ai, bi, na] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < na; ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = na; i < o->grad.size(); ++i) bi->grad[i - na] += o->grad[i];
            }
        };
    }
    return out;
}

// Column-wise concatenation of equal-height matrices.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
        throw ShapeError("concat_cols: row counts differ");
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
    std::vector<double> v(m * (na + nb));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.data().data() + i * na, na, v.data() + i * (na + nb));
        std::copy_n(b.data().data() + i * nb, nb, v.data() + i * (na + nb) + na);
    }
    Tensor out = detail::make_result({m, na + nb}, std::move(v), {a, b});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto bi = b.impl().get();
        out.raw()->backprop = [o, ai, bi, m, na, nb] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < na; ++j)
                        ai->grad[i * na + j] += o->grad[i * (na + nb) + j];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < nb; ++j)
                        bi->grad[i * nb + j] += o->grad[i * (na + nb) + na + j];
            }
        };
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, std::size_t lo, std::size_t hi) {
    if (a.rank() != 2 || lo > hi || hi > a.rows())
        throw ShapeError("slice_rows: invalid range");
    const std::size_t n = a.cols(), m = hi - lo;
    std::vector<double> v(a.data().begin() + lo * n, a.data().begin() + hi * n);
    Tensor out = detail::make_result({m, n}, std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, lo, n] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[lo * n + i] += o->grad[i];
        };
    }
    return out;
}

inline Tensor row(const Tensor& a, std::size_t i) {
    if (a.rank() != 2 || i >= a.rows()) throw ShapeError("row: index out of range");
    const std::size_t n = a.cols();
    std::vector<double> v(a.data().begin() + i * n, a.data().begin() + (i + 1) * n);
    Tensor out = detail::make_result({n}, std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, i, n] {
            ai->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += o->grad[j];
        };
    }
    return out;
}

// Stack rank-1 tensors of equal length into a matrix, one per row.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty input");
    const std::size_t n = rows[0].size();
    std::vector<double> v;
    v.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.size() != n) throw ShapeError("stack_rows: ragged input");
        v.insert(v.end(), r.data().begin(), r.data().end());
    }
    Tensor out = detail::make_result({rows.size(), n}, std::move(v), rows);
    if (out.requires_grad()) {
        auto o = out.raw();
        std::vector<TensorImpl*> ps;
        for (const auto& r : rows) ps.push_back(r.impl().get());
        out.raw()->backprop = [o, ps, n] {
            for (std::size_t i = 0; i < ps.size(); ++i) {
                if (!ps[i]->requires_grad) continue;
                ps[i]->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) ps[i]->grad[j] += o->grad[i * n + j];
            }
        };
    }
    return out;
}

// Matrix-vector product A (m x n) * x (n) -> (m).
inline Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size())
        throw ShapeError("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(x.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* arow = a.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += arow[j] * x[j];
        v[i] = acc;
    }
    Tensor out = detail::make_result({m}, std::move(v), {a, x});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        auto xi = x.impl().get();
        out.raw()->backprop = [o, ai, xi, m, n] {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        ai->grad[i * n + j] += o->grad[i] * xi->value[j];
            }
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        xi->grad[j] += o->grad[i] * ai->value[i * n + j];
            }
        };
    }
    return out;
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor out = detail::make_result({1}, {acc}, {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai] {
            ai->ensure_grad();
            for (auto& g : ai->grad) g += o->grad[0];
        };
    }
    return out;
}

// Mean over the rows of an m x n matrix -> length-n vector.
inline Tensor mean_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("mean_rows: rank-2 tensor required");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] += a.data()[i * n + j];
    for (auto& x : v) x /= static_cast<double>(m);
    Tensor out = detail::make_result({n}, std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, m, n] {
            ai->ensure_grad();
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += o->grad[j] * inv;
        };
    }
    return out;
}

// ---- normalization / softmax / loss ----

// Softmax over a rank-1 score vector restricted to the true entries of mask;
// masked-out outputs are exactly zero. Stabilized by the unmasked maximum.
inline Tensor masked_softmax(const Tensor& scores, const std::vector<std::uint8_t>& mask) {
    if (scores.rank() != 1 || mask.size() != scores.size())
        throw ShapeError("masked_softmax: mask length must match scores");
    const std::size_t n = scores.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) mx = std::max(mx, scores[i]);
    if (!std::isfinite(mx))
        throw std::invalid_argument("masked_softmax: empty support (all-false mask)");
    std::vector<double> v(n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) {
            v[i] = std::exp(scores[i] - mx);
            z += v[i];
        }
    for (std::size_t i = 0; i < n; ++i) v[i] /= z;
    Tensor out = detail::make_result({n}, std::move(v), {scores});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto si = scores.impl().get();
        auto m = mask;
        out.raw()->backprop = [o, si, m, n] {
            si->ensure_grad();
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (m[i]) dot += o->grad[i] * o->value[i];
            for (std::size_t i = 0; i < n; ++i)
                if (m[i]) si->grad[i] += o->value[i] * (o->grad[i] - dot);
        };
    }
    return out;
}

inline Tensor softmax_vec(const Tensor& scores) {
    return masked_softmax(scores, std::vector<std::uint8_t>(scores.size(), 1));
}

// Row-wise softmax of an m x n matrix (dense, no masking).
inline Tensor softmax_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("softmax_rows: rank-2 tensor required");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* srow = a.data().data() + i * n;
        double mx = srow[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, srow[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            v[i * n + j] = std::exp(srow[j] - mx);
            z += v[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= z;
    }
    Tensor out = detail::make_result(a.shape(), std::move(v), {a});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ai = a.impl().get();
        out.raw()->backprop = [o, ai, m, n] {
            ai->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    dot += o->grad[i * n + j] * o->value[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    ai->grad[i * n + j] += o->value[i * n + j] * (o->grad[i * n + j] - dot);
            }
        };
    }
    return out;
}

// Row-wise layer normalization with learned gain/bias (population variance,
// eps inside the square root).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    const bool is_vec = x.rank() == 1;
    const std::size_t m = is_vec ? 1 : x.rows();
    const std::size_t n = is_vec ? x.size() : x.cols();
    if (gain.size() != n || bias.size() != n)
        throw ShapeError("layer_norm: gain/bias length must equal feature width");
    std::vector<double> v(m * n), xhat(m * n), inv_sigma(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.data().data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xr[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xr[j] - mean) * inv;
            v[i * n + j] = gain[j] * xhat[i * n + j] + bias[j];
        }
    }
    Tensor out = detail::make_result(x.shape(), std::move(v), {x, gain, bias});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto xi = x.impl().get();
        auto gi = gain.impl().get();
        auto bi = bias.impl().get();
        out.raw()->backprop = [o, xi, gi, bi, m, n, xhat = std::move(xhat),
                               inv_sigma = std::move(inv_sigma)] {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = o->grad.data() + i * n;
                const double* xh = xhat.data() + i * n;
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) gi->grad[j] += grow[j] * xh[j];
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    for (std::size_t j = 0; j < n; ++j) bi->grad[j] += grow[j];
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gy = grow[j] * gi->value[j];
                        s1 += gy;
                        s2 += gy * xh[j];
                    }
                    s1 /= static_cast<double>(n);
                    s2 /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gy = grow[j] * gi->value[j];
                        xi->grad[i * n + j] += inv_sigma[i] * (gy - s1 - xh[j] * s2);
                    }
                }
            }
        };
    }
    return out;
}

// Mean over the batch of -log softmax(logits)[target].
inline Tensor cross_entropy_loss(const Tensor& logits, const std::vector<std::size_t>& targets) {
    const bool is_vec = logits.rank() == 1;
    const std::size_t b = is_vec ? 1 : logits.rows();
    const std::size_t c = is_vec ? logits.size() : logits.cols();
    if (targets.size() != b)
        throw ShapeError("cross_entropy_loss: target count must equal batch size");
    for (auto t : targets)
        if (t >= c) throw std::out_of_range("cross_entropy_loss: target class out of range");
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* lr = logits.data().data() + i * c;
        double mx = lr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(lr[j] - mx);
            z += probs[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
        loss -= std::log(probs[i * c + targets[i]]);
    }
    loss /= static_cast<double>(b);
    Tensor out = detail::make_result({1}, {loss}, {logits});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto li = logits.impl().get();
        out.raw()->backprop = [o, li, b, c, probs = std::move(probs), targets] {
            li->ensure_grad();
            const double g = o->grad[0] / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    li->grad[i * c + j] +=
                        g * (probs[i * c + j] - (targets[i] == j ? 1.0 : 0.0));
        };
    }
    return out;
}

// Gather rows of an embedding table; backward scatter-adds into the table.
inline Tensor embed_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    if (table.rank() != 2) throw ShapeError("embed_rows: rank-2 table required");
    const std::size_t n = table.cols();
    for (auto id : ids)
        if (id >= table.rows()) throw std::out_of_range("embed_rows: id out of vocabulary range");
    std::vector<double> v;
    v.reserve(ids.size() * n);
    for (auto id : ids)
        v.insert(v.end(), table.data().begin() + id * n, table.data().begin() + (id + 1) * n);
    Tensor out = detail::make_result({ids.size(), n}, std::move(v), {table});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto ti = table.impl().get();
        out.raw()->backprop = [o, ti, ids, n] {
            ti->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < n; ++j)
                    ti->grad[ids[i] * n + j] += o->grad[i * n + j];
        };
    }
    return out;
}

// ---- backward ----

// Reverse-mode sweep from a scalar loss node. Parameter gradients accumulate
// across calls; callers zero them between optimizer steps.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar (got " +
                                    shape_str(loss.shape()) + ")");
    // Iterative post-order DFS for the topological order.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{loss.raw(), 0}};
    seen.insert(loss.raw());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto* node : order)
        if (node != loss.raw()) node->ensure_grad();
    loss.raw()->ensure_grad();
    loss.raw()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

}  // namespace aft
