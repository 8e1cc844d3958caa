// aftqa: dataset generation, training, evaluation, attention benchmarking,
// standalone balancing, and focus-weight diagnostics for the auto-focus
// question-answering stack.
//
// Exit codes: 0 success, 2 config error, 3 data validation error,
// 4 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aft/bench.hpp"
#include "aft/checkpoint.hpp"
#include "aft/config.hpp"
#include "aft/corpus.hpp"
#include "aft/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::string data_dir;
    std::string checkpoint_path;
    std::string split = "test";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

aft::RunConfig load_config(const CommonOpts& opts) {
    aft::RunConfig cfg =
        opts.config_path.empty() ? aft::desk_preset() : aft::load_run_config(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

// Completes the model config from dataset-derived sizes.
aft::ModelConfig model_config(const aft::RunConfig& cfg, const aft::Corpus& corpus) {
    aft::ModelConfig mc = cfg.model;
    mc.vocab_size = corpus.vocab.size();
    mc.num_classes = corpus.pool.size();
    mc.d_appearance = cfg.data.gen.d_appearance;
    mc.d_motion = cfg.data.gen.d_motion;
    mc.max_frames = std::max(mc.max_frames, cfg.data.gen.num_frames);
    mc.validate();
    return mc;
}

aft::Corpus load_data(const CommonOpts& opts) {
    if (opts.data_dir.empty())
        throw std::invalid_argument("--data <dataset dir> is required for this subcommand");
    return aft::read_corpus(opts.data_dir);
}

int cmd_gen(const CommonOpts& opts) {
    const aft::RunConfig cfg = load_config(opts);
    const aft::Corpus corpus = aft::build_corpus(cfg);
    for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
    fs::create_directories(opts.out_dir);
    aft::write_corpus(opts.out_dir, corpus);
    std::cout << "episodes=" << corpus.episodes.size() << " train=" << corpus.train.size()
              << " val=" << corpus.val.size() << " test=" << corpus.test.size()
              << " classes=" << corpus.pool.size() << " vocab=" << corpus.vocab.size() << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& opts) {
    const aft::RunConfig cfg = load_config(opts);
    const aft::Corpus corpus = load_data(opts);
    aft::AftModel model(model_config(cfg, corpus), cfg.seed);
    const aft::TrainResult result = aft::train_model(model, corpus, cfg.train, cfg.seed + 1);
    fs::create_directories(opts.out_dir);
    aft::write_epoch_log((fs::path(opts.out_dir) / "epochs.csv").string(), result.epochs);
    aft::save_checkpoint((fs::path(opts.out_dir) / "model.ckpt").string(), model.params(),
                         aft::config_hash(cfg));
    std::cout << "best_epoch=" << result.best_epoch
              << " best_val_accuracy=" << result.best_val_accuracy << "\n";
    return kExitOk;
}

// Shared by eval and focus-dump: build the model and load a checkpoint whose
// config hash must match the active config.
aft::AftModel load_model(const aft::RunConfig& cfg, const aft::Corpus& corpus,
                         const std::string& checkpoint_path) {
    if (checkpoint_path.empty())
        throw std::invalid_argument("--checkpoint <file> is required for this subcommand");
    aft::AftModel model(model_config(cfg, corpus), cfg.seed);
    const std::uint64_t hash = aft::load_checkpoint(checkpoint_path, model.params());
    if (hash != aft::config_hash(cfg))
        throw std::invalid_argument("checkpoint was produced by a different configuration");
    return model;
}

int cmd_eval(const CommonOpts& opts) {
    const aft::RunConfig cfg = load_config(opts);
    const aft::Corpus corpus = load_data(opts);
    const aft::AftModel model = load_model(cfg, corpus, opts.checkpoint_path);
    const aft::EvalOutput out = aft::evaluate_model(model, corpus, opts.split);
    fs::create_directories(opts.out_dir);
    aft::write_metrics_csv((fs::path(opts.out_dir) / "metrics.csv").string(), out.rows);
    aft::write_predictions_jsonl((fs::path(opts.out_dir) / "predictions.jsonl").string(),
                                 out.predictions);
    std::cout << "split=" << opts.split << " accuracy=" << out.rows[0].accuracy
              << " macro_f1=" << out.rows[0].macro_f1 << " count=" << out.rows[0].count << "\n";
    return kExitOk;
}

int cmd_bench(const CommonOpts& opts, aft::BenchConfig bench_cfg) {
    if (!opts.config_path.empty()) {
        const aft::RunConfig cfg = load_config(opts);
        bench_cfg.d = cfg.model.d;
        bench_cfg.heads = cfg.model.heads;
        bench_cfg.focal = cfg.model.focal;
    }
    if (opts.seed_set) bench_cfg.seed = opts.seed;
    const aft::BenchResult res = aft::bench_attention(bench_cfg);
    fs::create_directories(opts.out_dir);
    aft::write_bench_json((fs::path(opts.out_dir) / "bench.json").string(), res);
    std::cout << "banded_scores=" << res.banded_scores << " dense_scores=" << res.dense_scores
              << " banded_ms=" << res.banded_median_ms << " dense_ms=" << res.dense_median_ms
              << "\n";
    return kExitOk;
}

int cmd_balance(const CommonOpts& opts, const std::string& in_path, double threshold) {
    auto records = aft::read_qa_jsonl(in_path);
    const std::size_t before = records.size();
    records = aft::balance_filter(std::move(records), threshold,
                                  opts.seed_set ? opts.seed : 0);
    fs::create_directories(opts.out_dir);
    aft::write_qa_jsonl((fs::path(opts.out_dir) / "balanced.jsonl").string(), records);
    std::cout << "input=" << before << " kept=" << records.size() << "\n";
    return kExitOk;
}

int cmd_focus_dump(const CommonOpts& opts) {
    const aft::RunConfig cfg = load_config(opts);
    const aft::Corpus corpus = load_data(opts);
    const aft::AftModel model = load_model(cfg, corpus, opts.checkpoint_path);
    const auto& records = corpus.records(opts.split);
    if (records.empty()) throw std::runtime_error("split '" + opts.split + "' is empty");

    fs::create_directories(opts.out_dir);
    std::ofstream os((fs::path(opts.out_dir) / "focus_weights.csv").string());
    if (!os) throw std::runtime_error("cannot open focus_weights.csv for writing");
    os.precision(17);
    os << "question_id,question_type";
    for (auto f : cfg.model.focal) os << ",alpha_f" << f;
    os << "\n";
    std::map<std::string, std::vector<double>> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const auto alpha = model.focus_weights(aft::tokenize(r.question, corpus.vocab));
        os << r.episode_id << "#" << i << "," << aft::question_type_name(r.type);
        for (double a : alpha) os << "," << a;
        os << "\n";
        auto& s = sums[aft::question_type_name(r.type)];
        s.resize(alpha.size(), 0.0);
        for (std::size_t k = 0; k < alpha.size(); ++k) s[k] += alpha[k];
        ++counts[aft::question_type_name(r.type)];
    }
    for (const auto& [type, s] : sums) {
        os << "mean," << type;
        for (double v : s) os << "," << v / static_cast<double>(counts.at(type));
        os << "\n";
    }
    std::cout << "rows=" << records.size() << " types=" << sums.size() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"auto-focus video question answering toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string balance_in;
    double balance_threshold = 0.5;
    aft::BenchConfig bench_cfg;
    bench_cfg.num_frames = 1024;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "run configuration (JSON)");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--seed", opts.seed, "seed override")
            ->each([&](const std::string&) { opts.seed_set = true; });
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen);
    auto* train = app.add_subcommand("train", "train a model");
    add_common(train);
    train->add_option("--data", opts.data_dir, "dataset directory (from gen)");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--data", opts.data_dir, "dataset directory (from gen)");
    eval->add_option("--checkpoint", opts.checkpoint_path, "checkpoint file");
    eval->add_option("--split", opts.split, "split to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}));
    auto* bench = app.add_subcommand("bench", "attention throughput benchmark");
    add_common(bench);
    bench->add_option("--frames", bench_cfg.num_frames, "sequence length");
    bench->add_option("--reps", bench_cfg.reps, "timed repetitions");
    auto* balance = app.add_subcommand("balance", "run the balancing filter standalone");
    add_common(balance);
    balance->add_option("--in", balance_in, "input QA records (jsonl)")->required();
    balance->add_option("--threshold", balance_threshold, "frequency threshold");
    auto* focus = app.add_subcommand("focus-dump", "dump per-question focus weights");
    add_common(focus);
    focus->add_option("--data", opts.data_dir, "dataset directory (from gen)");
    focus->add_option("--checkpoint", opts.checkpoint_path, "checkpoint file");
    focus->add_option("--split", opts.split, "split to dump")
        ->check(CLI::IsMember({"train", "val", "test"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(opts);
        if (train->parsed()) return cmd_train(opts);
        if (eval->parsed()) return cmd_eval(opts);
        if (bench->parsed()) return cmd_bench(opts, bench_cfg);
        if (balance->parsed()) return cmd_balance(opts, balance_in, balance_threshold);
        if (focus->parsed()) return cmd_focus_dump(opts);
    } catch (const aft::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
