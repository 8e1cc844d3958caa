#pragma once

// Plain float64 attention kernels, independent of the autodiff graph.
// The banded kernel only touches score entries inside each band, so its
// work scales with sum of band widths rather than N^2; the dense oracle is
// a literal double-loop softmax(QK^T/sqrt(d))V used as a reference.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace aft {

struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> data)
        : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != r * c) throw std::invalid_argument("Mat: data size mismatch");
    }
    double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
    const double* row(std::size_t i) const { return v.data() + i * cols; }
    double* row(std::size_t i) { return v.data() + i * cols; }
};

// Inclusive clipped index band around a query position.
struct BandRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::size_t width() const { return hi - lo + 1; }
};

inline BandRange band_index_set(std::size_t j, std::size_t f, std::size_t n) {
    if (j >= n)
        throw std::out_of_range("band_index_set: position " + std::to_string(j) +
                                " out of range for length " + std::to_string(n));
    if (f < 1) throw std::invalid_argument("band_index_set: focal length must be >= 1");
    BandRange b;
    b.lo = j >= f ? j - f : 0;
    b.hi = std::min(n - 1, j + f);
    return b;
}

// Softmax over the true entries of mask; masked-out outputs are exactly zero.
inline std::vector<double> masked_softmax_kernel(const std::vector<double>& scores,
                                                 const std::vector<std::uint8_t>& mask) {
    if (scores.size() != mask.size())
        throw std::invalid_argument("masked_softmax: mask length must match scores");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (mask[i]) mx = std::max(mx, scores[i]);
    if (!std::isfinite(mx))
        throw std::invalid_argument("masked_softmax: empty support (all-false mask)");
    std::vector<double> out(scores.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (mask[i]) {
            out[i] = std::exp(scores[i] - mx);
            z += out[i];
        }
    for (auto& x : out) x /= z;
    return out;
}

inline void check_attention_shapes(const Mat& q, const Mat& k, const Mat& v) {
    if (q.rows != k.rows || q.rows != v.rows || q.cols != k.cols)
        throw std::invalid_argument("attention: Q/K/V shapes disagree");
    if (q.rows == 0 || q.cols == 0) throw std::invalid_argument("attention: empty input");
}

// Reference dense attention: softmax(QK^T/sqrt(d_h))V by direct loops.
inline Mat dense_attention_oracle(const Mat& q, const Mat& k, const Mat& v) {
    check_attention_shapes(q, k, v);
    const std::size_t n = q.rows, d = q.cols, dv = v.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Mat out(n, dv);
    std::vector<double> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) s += q.at(j, t) * k.at(i, t);
            scores[i] = s * inv_sqrt_d;
        }
        double mx = scores[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, scores[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = std::exp(scores[i] - mx);
            z += scores[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double p = scores[i] / z;
            for (std::size_t t = 0; t < dv; ++t) out.at(j, t) += p * v.at(i, t);
        }
    }
    return out;
}

inline void check_focus_weights(const std::vector<double>& alpha, std::size_t nf) {
    if (alpha.size() != nf)
        throw std::invalid_argument("afa: focus weight count must match focal set size");
    double s = 0.0;
    for (double a : alpha) {
        if (!(a > 0.0 && a < 1.0 + 1e-9))
            throw std::invalid_argument("afa: focus weights must lie in (0,1)");
        s += a;
    }
    if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("afa: focus weights must sum to 1");
}

// Auto-focus attention: convex combination over focal lengths of banded
// softmax attentions. Per-focus softmax is normalized over exactly the
// clipped band D_j^f; keys/values are shared across focal lengths.
inline Mat afa(const Mat& q, const Mat& k, const Mat& v, const std::vector<double>& alpha,
               const std::vector<std::size_t>& focal) {
    check_attention_shapes(q, k, v);
    check_focus_weights(alpha, focal.size());
    const std::size_t n = q.rows, d = q.cols, dv = v.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Mat out(n, dv);
    std::vector<double> band_scores;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t fi = 0; fi < focal.size(); ++fi) {
            const BandRange b = band_index_set(j, focal[fi], n);
            band_scores.resize(b.width());
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = b.lo; i <= b.hi; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += q.at(j, t) * k.at(i, t);
                band_scores[i - b.lo] = s * inv_sqrt_d;
                mx = std::max(mx, band_scores[i - b.lo]);
            }
            double z = 0.0;
            for (auto& s : band_scores) {
                s = std::exp(s - mx);
                z += s;
            }
            const double w = alpha[fi] / z;
            for (std::size_t i = b.lo; i <= b.hi; ++i) {
                const double p = band_scores[i - b.lo] * w;
                for (std::size_t t = 0; t < dv; ++t) out.at(j, t) += p * v.at(i, t);
            }
        }
    }
    return out;
}

// Exact number of score evaluations performed by the banded kernel.
inline std::uint64_t banded_score_count(std::size_t n, const std::vector<std::size_t>& focal) {
    std::uint64_t total = 0;
    for (auto f : focal)
        for (std::size_t j = 0; j < n; ++j) total += band_index_set(j, f, n).width();
    return total;
}

inline std::uint64_t dense_score_count(std::size_t n) {
    return static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
}

}  // namespace aft
