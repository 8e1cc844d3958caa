#pragma once

// End-to-end corpus assembly: generate episodes, instantiate QA templates,
// run the balancing filter, build the answer pool, split by episode, and
// build the question vocabulary from the training split. Also the on-disk
// dataset layout used by the command-line driver.

#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "aft/config.hpp"
#include "aft/dataio.hpp"
#include "aft/datagen.hpp"
#include "aft/text.hpp"

namespace aft {

struct Corpus {
    std::vector<EpisodeData> episodes;
    std::map<std::string, std::size_t> episode_index;  // id -> position
    std::vector<QARecord> train, val, test;
    AnswerPool pool;
    Vocabulary vocab;
    std::vector<std::string> warnings;

    const EpisodeData& episode(const std::string& id) const {
        auto it = episode_index.find(id);
        if (it == episode_index.end())
            throw std::out_of_range("Corpus: unknown episode " + id);
        return episodes[it->second];
    }
    const std::vector<QARecord>& records(const std::string& split) const {
        if (split == "train") return train;
        if (split == "val") return val;
        if (split == "test") return test;
        throw std::invalid_argument("unknown split: " + split);
    }
};

namespace detail {

inline const SportSpec& sport_by_name(const GenConfig& cfg, const std::string& name) {
    for (const auto& s : cfg.sports)
        if (s.name == name) return s;
    throw std::out_of_range("unknown sport: " + name);
}

// Per-episode subsample: round-robin over question types so every type that
// the episode can support stays represented.
inline std::vector<QARecord> sample_qa(std::vector<QARecord> all, std::size_t cap,
                                       std::uint64_t seed) {
    if (all.size() <= cap) return all;
    std::map<QuestionType, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < all.size(); ++i) by_type[all[i].type].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto& [t, idxs] : by_type) std::shuffle(idxs.begin(), idxs.end(), rng);
    std::vector<QARecord> out;
    std::size_t round = 0;
    while (out.size() < cap) {
        bool any = false;
        for (auto& [t, idxs] : by_type) {
            if (round < idxs.size() && out.size() < cap) {
                out.push_back(std::move(all[idxs[round]]));
                any = true;
            }
        }
        if (!any) break;
        ++round;
    }
    return out;
}

}  // namespace detail

inline Corpus build_corpus(const RunConfig& cfg) {
    cfg.validate();
    const GenConfig& gen = cfg.data.gen;
    Corpus corpus;
    std::vector<QARecord> all;
    std::vector<std::pair<std::string, std::string>> episode_sports;

    for (std::size_t i = 0; i < cfg.data.episodes; ++i) {
        const std::size_t sport_idx = i % gen.sports.size();
        std::ostringstream id;
        id << gen.sports[sport_idx].name << "-" << std::setw(6) << std::setfill('0') << i;
        EpisodeData ep = generate_episode(gen, sport_idx, id.str(),
                                          detail::mix_seed(cfg.seed, i));
        auto qa = generate_qa(ep.log, gen.sports[sport_idx], gen.counter_window);
        qa = detail::sample_qa(std::move(qa), cfg.data.qa_per_episode,
                               detail::mix_seed(cfg.seed ^ 0x5151, i));
        all.insert(all.end(), std::make_move_iterator(qa.begin()),
                   std::make_move_iterator(qa.end()));
        episode_sports.emplace_back(ep.log.episode_id, ep.log.sport);
        corpus.episode_index.emplace(ep.log.episode_id, corpus.episodes.size());
        corpus.episodes.push_back(std::move(ep));
    }

    all = balance_filter(std::move(all), cfg.data.balance_threshold, cfg.seed ^ 0xba1a);
    auto [pool, kept] = build_answer_pool(std::move(all), cfg.data.min_answer_count);
    corpus.pool = std::move(pool);

    SplitResult split = stratified_split(episode_sports, cfg.data.split_ratios,
                                         cfg.seed ^ 0x5197);
    corpus.warnings = split.warnings;
    for (auto& r : kept) {
        if (split.train.count(r.episode_id)) corpus.train.push_back(std::move(r));
        else if (split.val.count(r.episode_id)) corpus.val.push_back(std::move(r));
        else corpus.test.push_back(std::move(r));
    }

    for (const auto& r : corpus.train)
        for (const auto& tok : split_tokens(r.question)) corpus.vocab.add(tok);
    return corpus;
}

// ---- dataset directory layout ----
//
// <out>/train.jsonl, val.jsonl, test.jsonl  QA records
// <out>/logs.jsonl                          ground-truth event logs
// <out>/features/<episode_id>.aftf          per-episode feature files
// <out>/manifest.tsv                        episode id -> feature path
// <out>/vocab.txt                           question vocabulary
// <out>/answers.txt                         answer pool (one label per line)

inline void write_answer_pool(const std::string& path, const AnswerPool& pool) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& label : pool.labels) os << label << "\n";
}

inline AnswerPool read_answer_pool(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    AnswerPool pool;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        pool.ids.emplace(line, pool.labels.size());
        pool.labels.push_back(line);
        pool.counts.push_back(0);
    }
    if (pool.labels.empty()) throw std::runtime_error("answer pool file is empty: " + path);
    return pool;
}

inline void write_corpus(const std::string& dir, const Corpus& corpus) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "features");
    write_qa_jsonl((fs::path(dir) / "train.jsonl").string(), corpus.train);
    write_qa_jsonl((fs::path(dir) / "val.jsonl").string(), corpus.val);
    write_qa_jsonl((fs::path(dir) / "test.jsonl").string(), corpus.test);
    std::vector<EventLog> logs;
    std::vector<std::pair<std::string, std::string>> manifest;
    for (const auto& ep : corpus.episodes) {
        const std::string rel = "features/" + ep.log.episode_id + ".aftf";
        write_feature_file((fs::path(dir) / rel).string(), ep);
        manifest.emplace_back(ep.log.episode_id, rel);
        logs.push_back(ep.log);
    }
    write_event_logs_jsonl((fs::path(dir) / "logs.jsonl").string(), logs);
    write_manifest((fs::path(dir) / "manifest.tsv").string(), manifest);
    corpus.vocab.save((fs::path(dir) / "vocab.txt").string());
    write_answer_pool((fs::path(dir) / "answers.txt").string(), corpus.pool);
}

inline Corpus read_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    Corpus corpus;
    corpus.train = read_qa_jsonl((fs::path(dir) / "train.jsonl").string());
    corpus.val = read_qa_jsonl((fs::path(dir) / "val.jsonl").string());
    corpus.test = read_qa_jsonl((fs::path(dir) / "test.jsonl").string());
    const auto manifest = read_manifest((fs::path(dir) / "manifest.tsv").string());
    const auto logs = read_event_logs_jsonl((fs::path(dir) / "logs.jsonl").string());
    std::map<std::string, const EventLog*> log_by_id;
    for (const auto& log : logs) log_by_id.emplace(log.episode_id, &log);
    for (const auto& [id, rel] : manifest) {
        FeatureData f = read_feature_file((fs::path(dir) / rel).string());
        if (f.episode_id != id)
            throw std::runtime_error("manifest/feature id mismatch for " + id);
        EpisodeData ep;
        auto it = log_by_id.find(id);
        if (it == log_by_id.end())
            throw std::runtime_error("feature file without event log: " + id);
        ep.log = *it->second;
        ep.appearance = std::move(f.appearance);
        ep.motion = std::move(f.motion);
        corpus.episode_index.emplace(id, corpus.episodes.size());
        corpus.episodes.push_back(std::move(ep));
    }
    corpus.vocab = Vocabulary::load((fs::path(dir) / "vocab.txt").string());
    corpus.pool = read_answer_pool((fs::path(dir) / "answers.txt").string());
    return corpus;
}

}  // namespace aft
