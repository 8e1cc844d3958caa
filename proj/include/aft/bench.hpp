#pragma once

// Single-thread attention micro-benchmark: median wall time over repeated
// runs of the banded auto-focus kernel versus the dense kernel at the same
// size, together with the exact score-evaluation counts.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aft/kernels.hpp"

namespace aft {

struct BenchConfig {
    std::size_t num_frames = 80;
    std::size_t d = 64;
    std::size_t heads = 4;
    std::vector<std::size_t> focal{3, 9, 80};
    std::size_t reps = 5;
    std::uint64_t seed = 17;
};

struct BenchResult {
    BenchConfig config;
    double banded_median_ms = 0.0;
    double dense_median_ms = 0.0;
    std::uint64_t banded_scores = 0;
    std::uint64_t dense_scores = 0;
};

namespace detail {

inline Mat random_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (auto& x : m.v) x = dist(rng);
    return m;
}

template <typename F>
inline double median_time_ms(F&& body, std::size_t reps) {
    std::vector<double> samples;
    body();  // warm-up, not timed
    for (std::size_t r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

}  // namespace detail

inline BenchResult bench_attention(const BenchConfig& cfg) {
    if (cfg.reps < 3) throw std::invalid_argument("bench: reps must be >= 3");
    if (cfg.heads == 0 || cfg.d % cfg.heads != 0)
        throw std::invalid_argument("bench: d must be divisible by heads");
    std::mt19937_64 rng(cfg.seed);
    const std::size_t dh = cfg.d / cfg.heads;
    std::vector<Mat> q, k, v;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        q.push_back(detail::random_mat(cfg.num_frames, dh, rng));
        k.push_back(detail::random_mat(cfg.num_frames, dh, rng));
        v.push_back(detail::random_mat(cfg.num_frames, dh, rng));
    }
    std::vector<double> alpha(cfg.focal.size(),
                              1.0 / static_cast<double>(cfg.focal.size()));

    BenchResult res;
    res.config = cfg;
    volatile double sink = 0.0;  // keep the kernels from being optimized away
    res.banded_median_ms = detail::median_time_ms(
        [&] {
            for (std::size_t h = 0; h < cfg.heads; ++h)
                sink = sink + afa(q[h], k[h], v[h], alpha, cfg.focal).v[0];
        },
        cfg.reps);
    res.dense_median_ms = detail::median_time_ms(
        [&] {
            for (std::size_t h = 0; h < cfg.heads; ++h)
                sink = sink + dense_attention_oracle(q[h], k[h], v[h]).v[0];
        },
        cfg.reps);
    // Counts are per attention map (combinatorial identity, timing-free).
    res.banded_scores = banded_score_count(cfg.num_frames, cfg.focal);
    res.dense_scores = dense_score_count(cfg.num_frames);
    return res;
}

inline nlohmann::json to_json(const BenchResult& r) {
    return nlohmann::json{
        {"config",
         {{"num_frames", r.config.num_frames}, {"d", r.config.d}, {"heads", r.config.heads},
          {"focal_lengths", r.config.focal}, {"reps", r.config.reps}, {"seed", r.config.seed}}},
        {"banded_median_ms", r.banded_median_ms},
        {"dense_median_ms", r.dense_median_ms},
        {"banded_scores", r.banded_scores},
        {"dense_scores", r.dense_scores}};
}

inline void write_bench_json(const std::string& path, const BenchResult& r) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << to_json(r).dump(2) << "\n";
}

}  // namespace aft
