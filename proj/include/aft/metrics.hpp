#pragma once

// Evaluation metrics (accuracy, macro F1) and the metrics.csv /
// predictions.jsonl output formats.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace aft {

inline double accuracy(const std::vector<std::size_t>& predicted,
                       const std::vector<std::size_t>& truth) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("accuracy: size mismatch");
    if (truth.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Macro F1 averaged over the classes present in the ground truth; a class
// with zero precision+recall contributes F1 = 0.
inline double macro_f1(const std::vector<std::size_t>& predicted,
                       const std::vector<std::size_t>& truth) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("macro_f1: size mismatch");
    if (truth.empty()) throw std::invalid_argument("macro_f1: empty input");
    std::set<std::size_t> classes(truth.begin(), truth.end());
    double sum = 0.0;
    for (std::size_t c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (predicted[i] == c && truth[i] == c) ++tp;
            else if (predicted[i] == c) ++fp;
            else if (truth[i] == c) ++fn;
        }
        const double denom = static_cast<double>(2 * tp + fp + fn);
        sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return sum / static_cast<double>(classes.size());
}

struct MetricsRow {
    std::string split;
    std::string question_type;  // "all" for the aggregate row
    std::string sport;          // "all" for the aggregate row
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::size_t count = 0;
};

inline std::string metrics_csv_header() {
    return "split,question_type,sport,accuracy,macro_f1,count";
}

inline std::string to_csv(const MetricsRow& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.split << "," << r.question_type << "," << r.sport << "," << r.accuracy << ","
       << r.macro_f1 << "," << r.count;
    return os.str();
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << metrics_csv_header() << "\n";
    for (const auto& r : rows) os << to_csv(r) << "\n";
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != metrics_csv_header())
        throw std::runtime_error("metrics csv: bad header in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        MetricsRow r;
        std::string field;
        std::getline(ls, r.split, ',');
        std::getline(ls, r.question_type, ',');
        std::getline(ls, r.sport, ',');
        std::getline(ls, field, ',');
        r.accuracy = std::stod(field);
        std::getline(ls, field, ',');
        r.macro_f1 = std::stod(field);
        std::getline(ls, field, ',');
        r.count = static_cast<std::size_t>(std::stoull(field));
        rows.push_back(std::move(r));
    }
    return rows;
}

struct Prediction {
    std::string episode_id;
    std::string question;
    std::string predicted;
    std::string truth;
};

inline void write_predictions_jsonl(const std::string& path,
                                    const std::vector<Prediction>& preds) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& p : preds)
        os << nlohmann::json{{"episode_id", p.episode_id}, {"question", p.question},
                             {"predicted", p.predicted}, {"answer", p.truth}}.dump()
           << "\n";
}

}  // namespace aft
