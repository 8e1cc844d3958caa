#pragma once

// Deterministic training loop (mini-batch gradient accumulation with Adam),
// split evaluation with per-type/per-sport metric rows, and the epoch log.

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aft/corpus.hpp"
#include "aft/metrics.hpp"
#include "aft/model.hpp"
#include "aft/optim.hpp"

namespace aft {

// Non-finite loss and similar numeric breakdowns; mapped to its own process
// exit code by the command-line driver.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainExample {
    std::size_t episode = 0;  // index into Corpus::episodes
    std::vector<std::size_t> tokens;
    std::size_t label = 0;
    std::size_t record = 0;  // index into the source record list
};

// Tokenizes and maps answers to pool ids; records whose answer is outside
// the pool are a data validation error (the pool must match the dataset).
inline std::vector<TrainExample> prepare_examples(const Corpus& corpus,
                                                  const std::vector<QARecord>& records) {
    std::vector<TrainExample> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const QARecord& r = records[i];
        if (!corpus.pool.contains(r.answer))
            throw std::runtime_error("answer '" + r.answer +
                                     "' is not in the answer pool; dataset and pool disagree");
        TrainExample ex;
        ex.episode = corpus.episode_index.at(r.episode_id);
        ex.tokens = tokenize(r.question, corpus.vocab);
        ex.label = corpus.pool.id(r.answer);
        ex.record = i;
        out.push_back(std::move(ex));
    }
    return out;
}

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> epochs;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epochs ran
    double best_val_accuracy = 0.0;
    std::map<std::string, std::vector<double>> best_params;
};

namespace detail {

inline std::map<std::string, std::vector<double>> snapshot(const ParamStore& params) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : params) out.emplace(name, t.data());
    return out;
}

inline void restore(ParamStore& params, const std::map<std::string, std::vector<double>>& snap) {
    for (auto& [name, t] : params) t.data() = snap.at(name);
}

inline void clip_global_norm(ParamStore& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& [name, t] : params)
        for (double g : t.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& [name, t] : params)
        for (double& g : t.grad()) g *= scale;
}

}  // namespace detail

template <typename Model>
inline double evaluate_accuracy(const Model& model, const Corpus& corpus,
                                const std::vector<TrainExample>& examples) {
    if (examples.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& ex : examples) {
        const EpisodeData& ep = corpus.episodes[ex.episode];
        Tensor logits = model.forward(ep.appearance, ep.motion, ex.tokens);
        if (argmax_class(logits.data()) == ex.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

// Trains in place. Shuffling, batching, and reduction order are fixed by the
// seed, so repeated runs produce identical epoch logs. The checkpoint of the
// best validation epoch (ties to the earlier epoch) is kept in the result
// and restored into the model before returning.
inline TrainResult train_model(AftModel& model, const Corpus& corpus,
                               const TrainConfig& cfg, std::uint64_t seed) {
    if (corpus.pool.size() != model.config().num_classes)
        throw std::runtime_error("model answer-head size does not match the answer pool");
    if (corpus.vocab.size() != model.config().vocab_size)
        throw std::runtime_error("model vocabulary size does not match the dataset vocabulary");

    const auto train_ex = prepare_examples(corpus, corpus.train);
    const auto val_ex = prepare_examples(corpus, corpus.val);
    if (train_ex.empty()) throw std::runtime_error("training split is empty");

    AdamOptimizer opt(AdamConfig{cfg.lr});
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(train_ex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.best_params = detail::snapshot(model.params());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t base = 0; base < order.size(); base += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), base + cfg.batch_size);
            model.params().zero_grads();
            double batch_loss = 0.0;
            for (std::size_t k = base; k < end; ++k) {
                const TrainExample& ex = train_ex[order[k]];
                const EpisodeData& ep = corpus.episodes[ex.episode];
                Tensor logits = model.forward(ep.appearance, ep.motion, ex.tokens);
                Tensor loss = cross_entropy_loss(stack_rows({logits}), {ex.label});
                // Accumulated gradients across the batch; scale per example.
                Tensor scaled = scale(loss, 1.0 / static_cast<double>(end - base));
                backward(scaled);
                batch_loss += loss[0];
            }
            batch_loss /= static_cast<double>(end - base);
            if (!std::isfinite(batch_loss))
                throw NumericalError("training diverged: non-finite loss");
            detail::clip_global_norm(model.params(), cfg.grad_clip);
            opt.step(model.params());
            loss_sum += batch_loss * static_cast<double>(end - base);
        }
        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train_ex.size());
        row.val_accuracy = evaluate_accuracy(model, corpus, val_ex);
        result.epochs.push_back(row);
        // Ties on validation accuracy go to the lower training loss so a lucky
        // early epoch on a tiny validation split cannot pin stale parameters.
        const bool improved = result.best_epoch == 0 ||
                              row.val_accuracy > result.best_val_accuracy ||
                              (row.val_accuracy == result.best_val_accuracy &&
                               row.train_loss < result.epochs[result.best_epoch - 1].train_loss);
        if (improved) {
            result.best_epoch = epoch;
            result.best_val_accuracy = row.val_accuracy;
            result.best_params = detail::snapshot(model.params());
        }
    }
    detail::restore(model.params(), result.best_params);
    return result;
}

inline void write_epoch_log(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.precision(17);
    os << "epoch,train_loss,val_accuracy\n";
    for (const auto& r : rows)
        os << r.epoch << "," << r.train_loss << "," << r.val_accuracy << "\n";
}

// ---- evaluation ----

struct EvalOutput {
    std::vector<MetricsRow> rows;         // aggregate first, then per type, per sport
    std::vector<Prediction> predictions;  // in record order
};

template <typename Predict>
inline EvalOutput evaluate_split(const Corpus& corpus, const std::string& split,
                                 Predict&& predict) {
    const auto& records = corpus.records(split);
    if (records.empty()) throw std::runtime_error("split '" + split + "' is empty");
    std::vector<std::size_t> predicted, truth;
    EvalOutput out;
    for (const auto& r : records) {
        const std::size_t label = corpus.pool.id(r.answer);
        const std::size_t guess = predict(r);
        predicted.push_back(guess);
        truth.push_back(label);
        out.predictions.push_back(
            {r.episode_id, r.question, corpus.pool.labels[guess], r.answer});
    }
    const auto subset_row = [&](const std::string& type, const std::string& sport) {
        std::vector<std::size_t> p, t;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (type != "all" && question_type_name(records[i].type) != type) continue;
            if (sport != "all" && records[i].sport != sport) continue;
            p.push_back(predicted[i]);
            t.push_back(truth[i]);
        }
        MetricsRow row{split, type, sport, 0.0, 0.0, p.size()};
        if (!p.empty()) {
            row.accuracy = accuracy(p, t);
            row.macro_f1 = macro_f1(p, t);
        }
        return row;
    };
    out.rows.push_back(subset_row("all", "all"));
    std::set<std::string> types, sports;
    for (const auto& r : records) {
        types.insert(question_type_name(r.type));
        sports.insert(r.sport);
    }
    for (const auto& t : types) out.rows.push_back(subset_row(t, "all"));
    for (const auto& s : sports) out.rows.push_back(subset_row("all", s));
    return out;
}

inline EvalOutput evaluate_model(const AftModel& model, const Corpus& corpus,
                                 const std::string& split) {
    return evaluate_split(corpus, split, [&](const QARecord& r) {
        const EpisodeData& ep = corpus.episode(r.episode_id);
        Tensor logits =
            model.forward(ep.appearance, ep.motion, tokenize(r.question, corpus.vocab));
        return argmax_class(logits.data());
    });
}

}  // namespace aft
