#pragma once

// Auto-focus attention on the autodiff graph: per-focus banded softmax
// attentions mixed under question-conditioned focus weights, the multi-head
// wrapper, and the encoder stack (post-norm, position-wise feed-forward).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/kernels.hpp"
#include "aft/params.hpp"
#include "aft/tensor.hpp"

namespace aft {

struct FocalSet {
    std::vector<std::size_t> lengths;

    FocalSet() = default;
    explicit FocalSet(std::vector<std::size_t> ls) : lengths(std::move(ls)) { validate(); }

    void validate() const {
        if (lengths.empty()) throw std::invalid_argument("FocalSet: must be non-empty");
        std::size_t prev = 0;
        for (auto f : lengths) {
            if (f < 1) throw std::invalid_argument("FocalSet: focal lengths must be >= 1");
            if (f <= prev && prev != 0)
                throw std::invalid_argument("FocalSet: focal lengths must be strictly increasing");
            prev = f;
        }
    }

    std::size_t size() const { return lengths.size(); }
};

inline void check_simplex(const Tensor& alpha, std::size_t nf) {
    if (alpha.rank() != 1 || alpha.size() != nf)
        throw ShapeError("focus weights: expected length " + std::to_string(nf));
    double s = 0.0;
    for (std::size_t i = 0; i < nf; ++i) {
        if (!(alpha[i] > 0.0 && alpha[i] < 1.0 + 1e-9))
            throw std::invalid_argument("focus weights: entries must lie in (0,1)");
        s += alpha[i];
    }
    if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("focus weights: must sum to 1 (got " + std::to_string(s) +
                                    ")");
}

// Row-wise softmax of an N x N score matrix restricted to the clipped band
// |i-j| <= f. Off-band outputs are exactly zero and never computed.
inline Tensor banded_row_softmax(const Tensor& scores, std::size_t f) {
    if (scores.rank() != 2 || scores.rows() != scores.cols())
        throw ShapeError("banded_row_softmax: square score matrix required");
    const std::size_t n = scores.rows();
    std::vector<double> v(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const BandRange b = band_index_set(j, f, n);
        const double* srow = scores.data().data() + j * n;
        double mx = srow[b.lo];
        for (std::size_t i = b.lo + 1; i <= b.hi; ++i) mx = std::max(mx, srow[i]);
        double z = 0.0;
        for (std::size_t i = b.lo; i <= b.hi; ++i) {
            v[j * n + i] = std::exp(srow[i] - mx);
            z += v[j * n + i];
        }
        for (std::size_t i = b.lo; i <= b.hi; ++i) v[j * n + i] /= z;
    }
    Tensor out = detail::make_result(scores.shape(), std::move(v), {scores});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto si = scores.impl().get();
        out.raw()->backprop = [o, si, n, f] {
            si->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) {
                const BandRange b = band_index_set(j, f, n);
                double dot = 0.0;
                for (std::size_t i = b.lo; i <= b.hi; ++i)
                    dot += o->grad[j * n + i] * o->value[j * n + i];
                for (std::size_t i = b.lo; i <= b.hi; ++i)
                    si->grad[j * n + i] += o->value[j * n + i] * (o->grad[j * n + i] - dot);
            }
        };
    }
    return out;
}

// out = P * V where P is band-limited (zero outside |i-j| <= f); both the
// forward product and the backward pass only walk band entries.
inline Tensor banded_matmul(const Tensor& p, const Tensor& v, std::size_t f) {
    if (p.rank() != 2 || p.rows() != p.cols() || v.rank() != 2 || v.rows() != p.cols())
        throw ShapeError("banded_matmul: incompatible shapes");
    const std::size_t n = p.rows(), dv = v.cols();
    std::vector<double> out_v(n * dv, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const BandRange b = band_index_set(j, f, n);
        for (std::size_t i = b.lo; i <= b.hi; ++i) {
            const double pij = p.data()[j * n + i];
            const double* vrow = v.data().data() + i * dv;
            double* orow = out_v.data() + j * dv;
            for (std::size_t t = 0; t < dv; ++t) orow[t] += pij * vrow[t];
        }
    }
    Tensor out = detail::make_result({n, dv}, std::move(out_v), {p, v});
    if (out.requires_grad()) {
        auto o = out.raw();
        auto pi = p.impl().get();
        auto vi = v.impl().get();
        out.raw()->backprop = [o, pi, vi, n, dv, f] {
            if (pi->requires_grad) pi->ensure_grad();
            if (vi->requires_grad) vi->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) {
                const BandRange b = band_index_set(j, f, n);
                const double* grow = o->grad.data() + j * dv;
                for (std::size_t i = b.lo; i <= b.hi; ++i) {
                    if (pi->requires_grad) {
                        double acc = 0.0;
                        const double* vrow = vi->value.data() + i * dv;
                        for (std::size_t t = 0; t < dv; ++t) acc += grow[t] * vrow[t];
                        pi->grad[j * n + i] += acc;
                    }
                    if (vi->requires_grad) {
                        const double pij = pi->value[j * n + i];
                        double* vgrow = vi->grad.data() + i * dv;
                        for (std::size_t t = 0; t < dv; ++t) vgrow[t] += pij * grow[t];
                    }
                }
            }
        };
    }
    return out;
}

// Single-head auto-focus attention over projected Q/K/V. alpha must satisfy
// the simplex invariant; scaling uses the per-head key dimension.
inline Tensor afa_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& alpha, const FocalSet& focal) {
    check_simplex(alpha, focal.size());
    const std::size_t dh = q.cols();
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor out;
    for (std::size_t fi = 0; fi < focal.size(); ++fi) {
        Tensor probs = banded_row_softmax(scores, focal.lengths[fi]);
        Tensor mixed = scale_by_element(banded_matmul(probs, v, focal.lengths[fi]), alpha, fi);
        out = out.defined() ? add(out, mixed) : mixed;
    }
    return out;
}

// Dense scaled dot-product attention on the graph; the standard-Transformer
// baseline path (no bands, no focus weights).
inline Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const std::size_t dh = q.cols();
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    return matmul(softmax_rows(scores), v);
}

// Question-conditioned gate: softmax(Gate . w + bias) over the focal set.
class FocusGate {
public:
    FocusGate() = default;
    FocusGate(ParamStore& store, const std::string& prefix, std::size_t nf, std::size_t d,
              std::mt19937_64& rng) {
        gate_ = store.add_xavier(prefix + ".gate", nf, d, rng);
        bias_ = store.add_zeros(prefix + ".gate_bias", {nf});
    }

    Tensor forward(const Tensor& w) const {
        Tensor logits = add(matvec(gate_, w), bias_);
        return softmax_vec(logits);
    }

private:
    Tensor gate_, bias_;
};

enum class AttentionMode : std::uint8_t { auto_focus, dense };

struct EncoderConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t d_ff = 128;
    double ln_eps = 1e-5;
    FocalSet focal{{3, 9, 80}};
    AttentionMode mode = AttentionMode::auto_focus;

    std::size_t head_dim() const {
        if (heads == 0 || d % heads != 0)
            throw std::invalid_argument("EncoderConfig: d must be divisible by head count");
        return d / heads;
    }
};

// Multi-head AFA: per-head Q/K/V projections, shared alpha across heads,
// concatenation, output projection.
class MultiHeadAfa {
public:
    MultiHeadAfa() = default;
    MultiHeadAfa(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
                 std::mt19937_64& rng)
        : cfg_(&cfg) {
        const std::size_t dh = cfg.head_dim();
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const std::string hp = prefix + ".h" + std::to_string(h);
            wq_.push_back(store.add_xavier(hp + ".wq", cfg.d, dh, rng));
            wk_.push_back(store.add_xavier(hp + ".wk", cfg.d, dh, rng));
            wv_.push_back(store.add_xavier(hp + ".wv", cfg.d, dh, rng));
        }
        wo_ = store.add_xavier(prefix + ".wo", cfg.d, cfg.d, rng);
        bo_ = store.add_zeros(prefix + ".bo", {cfg.d});
    }

    Tensor forward(const Tensor& x, const Tensor& alpha) const {
        Tensor concat;
        for (std::size_t h = 0; h < wq_.size(); ++h) {
            Tensor q = matmul(x, wq_[h]);
            Tensor k = matmul(x, wk_[h]);
            Tensor v = matmul(x, wv_[h]);
            Tensor head = cfg_->mode == AttentionMode::dense
                              ? dense_attention(q, k, v)
                              : afa_attention(q, k, v, alpha, cfg_->focal);
            concat = concat.defined() ? concat_cols(concat, head) : head;
        }
        return add_rowvec(matmul(concat, wo_), bo_);
    }

private:
    const EncoderConfig* cfg_ = nullptr;
    std::vector<Tensor> wq_, wk_, wv_;
    Tensor wo_, bo_;
};

// One post-norm encoder layer: attention + residual + LN, FFN + residual + LN.
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
                 std::mt19937_64& rng)
        : cfg_(&cfg), attn_(store, prefix + ".attn", cfg, rng) {
        w1_ = store.add_xavier(prefix + ".ffn.w1", cfg.d, cfg.d_ff, rng);
        b1_ = store.add_zeros(prefix + ".ffn.b1", {cfg.d_ff});
        w2_ = store.add_xavier(prefix + ".ffn.w2", cfg.d_ff, cfg.d, rng);
        b2_ = store.add_zeros(prefix + ".ffn.b2", {cfg.d});
        ln1_g_ = store.add_const_vec(prefix + ".ln1.gain", cfg.d, 1.0);
        ln1_b_ = store.add_zeros(prefix + ".ln1.bias", {cfg.d});
        ln2_g_ = store.add_const_vec(prefix + ".ln2.gain", cfg.d, 1.0);
        ln2_b_ = store.add_zeros(prefix + ".ln2.bias", {cfg.d});
    }

    Tensor forward(const Tensor& x, const Tensor& alpha) const {
        Tensor a = layer_norm(add(x, attn_.forward(x, alpha)), ln1_g_, ln1_b_, cfg_->ln_eps);
        Tensor ff = add_rowvec(matmul(relu(add_rowvec(matmul(a, w1_), b1_)), w2_), b2_);
        return layer_norm(add(a, ff), ln2_g_, ln2_b_, cfg_->ln_eps);
    }

private:
    const EncoderConfig* cfg_ = nullptr;
    MultiHeadAfa attn_;
    Tensor w1_, b1_, w2_, b2_;
    Tensor ln1_g_, ln1_b_, ln2_g_, ln2_b_;
};

// The AFT encoder: alpha is computed once per question and shared by every
// layer and head. Output M keeps the input's N x d shape.
class AftEncoder {
public:
    AftEncoder() = default;
    AftEncoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
               std::mt19937_64& rng) {
        if (cfg.layers < 1) throw std::invalid_argument("AftEncoder: layer count must be >= 1");
        for (std::size_t l = 0; l < cfg.layers; ++l)
            layers_.emplace_back(store, prefix + ".layer" + std::to_string(l), cfg, rng);
    }

    Tensor forward(const Tensor& r, const Tensor& alpha) const {
        Tensor x = r;
        for (const auto& layer : layers_) x = layer.forward(x, alpha);
        return x;
    }

private:
    std::vector<EncoderLayer> layers_;
};

}  // namespace aft
