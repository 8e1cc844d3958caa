#pragma once

// Run configuration: JSON-backed, with a desk-scale default and a
// paper-faithful preset, plus a stable FNV-1a hash used to pair checkpoints
// with the configuration that produced them.

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "aft/datagen.hpp"
#include "aft/model.hpp"

namespace aft {

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 2;
    double grad_clip = 5.0;  // 0 disables clipping
};

struct DataConfig {
    std::size_t episodes = 600;
    std::size_t qa_per_episode = 3;
    double balance_threshold = 0.5;
    std::size_t min_answer_count = 30;
    std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
    GenConfig gen;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    std::uint64_t seed = 7;

    void validate() const {
        // vocab_size/num_classes are dataset-derived, so only the structural
        // model fields are checked here.
        if (model.heads == 0 || model.d % model.heads != 0)
            throw std::invalid_argument("RunConfig: d must be divisible by heads");
        FocalSet(model.focal).validate();
        data.gen.validate();
        if (train.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (!(train.lr > 0.0)) throw std::invalid_argument("lr must be positive");
        if (data.qa_per_episode < 1)
            throw std::invalid_argument("qa_per_episode must be >= 1");
    }
};

// Paper-faithful preset: full hidden width and schedule; impractical on a
// desk machine but expressible.
inline RunConfig paper_preset() {
    RunConfig cfg;
    cfg.model.d = 512;
    cfg.model.heads = 8;
    cfg.model.layers = 2;
    cfg.model.d_ff = 2048;
    cfg.train.epochs = 50;
    cfg.train.batch_size = 16;
    cfg.train.lr = 1e-4;
    return cfg;
}

inline RunConfig desk_preset() { return RunConfig{}; }

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "paper") cfg = paper_preset();
        else if (p == "desk") cfg = desk_preset();
        else throw std::invalid_argument("unknown preset: " + p);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::maybe(m, "d", cfg.model.d);
        detail::maybe(m, "heads", cfg.model.heads);
        detail::maybe(m, "layers", cfg.model.layers);
        detail::maybe(m, "d_ff", cfg.model.d_ff);
        detail::maybe(m, "focal_lengths", cfg.model.focal);
        detail::maybe(m, "max_frames", cfg.model.max_frames);
        if (m.contains("attention")) {
            const auto a = m.at("attention").get<std::string>();
            if (a == "auto_focus") cfg.model.mode = AttentionMode::auto_focus;
            else if (a == "dense") cfg.model.mode = AttentionMode::dense;
            else throw std::invalid_argument("unknown attention mode: " + a);
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::maybe(t, "lr", cfg.train.lr);
        detail::maybe(t, "batch_size", cfg.train.batch_size);
        detail::maybe(t, "epochs", cfg.train.epochs);
        detail::maybe(t, "grad_clip", cfg.train.grad_clip);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::maybe(d, "episodes", cfg.data.episodes);
        detail::maybe(d, "qa_per_episode", cfg.data.qa_per_episode);
        detail::maybe(d, "balance_threshold", cfg.data.balance_threshold);
        detail::maybe(d, "min_answer_count", cfg.data.min_answer_count);
        detail::maybe(d, "split_ratios", cfg.data.split_ratios);
        detail::maybe(d, "num_frames", cfg.data.gen.num_frames);
        detail::maybe(d, "noise", cfg.data.gen.noise);
        detail::maybe(d, "noise_corr", cfg.data.gen.noise_corr);
        detail::maybe(d, "d_appearance", cfg.data.gen.d_appearance);
        detail::maybe(d, "d_motion", cfg.data.gen.d_motion);
        detail::maybe(d, "min_events", cfg.data.gen.min_events);
        detail::maybe(d, "max_events", cfg.data.gen.max_events);
        detail::maybe(d, "effect_prob", cfg.data.gen.effect_prob);
        detail::maybe(d, "counter_prob", cfg.data.gen.counter_prob);
        detail::maybe(d, "embedding_seed", cfg.data.gen.embedding_seed);
    }
    detail::maybe(j, "seed", cfg.seed);
    cfg.model.d_appearance = cfg.data.gen.d_appearance;
    cfg.model.d_motion = cfg.data.gen.d_motion;
    cfg.model.max_frames = std::max(cfg.model.max_frames, cfg.data.gen.num_frames);
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    return parse_run_config(j);
}

// Canonical serialization used for hashing and checkpoint pairing.
inline nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json focal = cfg.model.focal;
    return nlohmann::json{
        {"model",
         {{"d", cfg.model.d}, {"heads", cfg.model.heads}, {"layers", cfg.model.layers},
          {"d_ff", cfg.model.d_ff}, {"focal_lengths", focal},
          {"max_frames", cfg.model.max_frames},
          {"attention", cfg.model.mode == AttentionMode::auto_focus ? "auto_focus" : "dense"}}},
        {"train",
         {{"lr", cfg.train.lr}, {"batch_size", cfg.train.batch_size},
          {"epochs", cfg.train.epochs}, {"grad_clip", cfg.train.grad_clip}}},
        {"data",
         {{"episodes", cfg.data.episodes}, {"qa_per_episode", cfg.data.qa_per_episode},
          {"balance_threshold", cfg.data.balance_threshold},
          {"min_answer_count", cfg.data.min_answer_count},
          {"split_ratios", cfg.data.split_ratios}, {"num_frames", cfg.data.gen.num_frames},
          {"noise", cfg.data.gen.noise}, {"noise_corr", cfg.data.gen.noise_corr},
          {"d_appearance", cfg.data.gen.d_appearance},
          {"d_motion", cfg.data.gen.d_motion}, {"min_events", cfg.data.gen.min_events},
          {"max_events", cfg.data.gen.max_events}, {"effect_prob", cfg.data.gen.effect_prob},
          {"counter_prob", cfg.data.gen.counter_prob},
          {"embedding_seed", cfg.data.gen.embedding_seed}}},
        {"seed", cfg.seed}};
}

inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a_hash(to_json(cfg).dump()); }

}  // namespace aft
