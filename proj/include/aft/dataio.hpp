#pragma once

// On-disk formats: QA records as JSONL, event logs as JSONL, per-episode
// feature files (binary header + row-major little-endian float32), and the
// feature manifest.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aft/datagen.hpp"

namespace aft {

using nlohmann::json;

inline json to_json(const QARecord& r) {
    return json{{"episode_id", r.episode_id}, {"question", r.question},
                {"question_type", question_type_name(r.type)}, {"sport", r.sport},
                {"answer", r.answer}, {"meta_key", r.meta_key}};
}

inline QARecord qa_record_from_json(const json& j) {
    QARecord r;
    r.episode_id = j.at("episode_id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.type = question_type_from_name(j.at("question_type").get<std::string>());
    r.sport = j.at("sport").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.meta_key = j.at("meta_key").get<std::string>();
    return r;
}

inline void write_qa_jsonl(const std::string& path, const std::vector<QARecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : records) os << to_json(r).dump() << "\n";
}

inline std::vector<QARecord> read_qa_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::vector<QARecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(qa_record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// Event-log files are line-delimited JSON with one event per line; episode
// metadata rides along on every line so each line is self-describing.
inline json event_line_json(const EventLog& log, std::size_t seq) {
    const Event& e = log.events[seq];
    json je{{"episode_id", log.episode_id}, {"seq", seq}, {"num_frames", log.num_frames},
            {"sport", log.sport}, {"two_team", log.two_team},
            {"start", e.start_frame}, {"end", e.end_frame}, {"action", e.action_id},
            {"team", team_name(e.team)},
            {"outcome", e.outcome == Outcome::none
                            ? "none"
                            : (e.outcome == Outcome::success ? "success" : "failure")}};
    if (e.cause_link) je["cause_link"] = *e.cause_link;
    if (e.effect_link) je["effect_link"] = *e.effect_link;
    if (!e.outcome_reason.empty()) je["reason"] = e.outcome_reason;
    return je;
}

inline void write_event_logs_jsonl(const std::string& path,
                                   const std::vector<EventLog>& logs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& log : logs)
        for (std::size_t i = 0; i < log.events.size(); ++i)
            os << event_line_json(log, i).dump() << "\n";
}

inline std::vector<EventLog> read_event_logs_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::map<std::string, EventLog> logs;
    std::vector<std::string> order;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json je = json::parse(line);
        const auto id = je.at("episode_id").get<std::string>();
        auto it = logs.find(id);
        if (it == logs.end()) {
            EventLog log;
            log.episode_id = id;
            log.num_frames = je.at("num_frames").get<std::size_t>();
            log.sport = je.at("sport").get<std::string>();
            log.two_team = je.at("two_team").get<bool>();
            it = logs.emplace(id, std::move(log)).first;
            order.push_back(id);
        }
        Event e;
        e.start_frame = je.at("start").get<std::size_t>();
        e.end_frame = je.at("end").get<std::size_t>();
        e.action_id = je.at("action").get<std::size_t>();
        const auto team = je.at("team").get<std::string>();
        e.team = team == "left" ? Team::left : (team == "right" ? Team::right : Team::none);
        const auto outcome = je.at("outcome").get<std::string>();
        e.outcome = outcome == "success" ? Outcome::success
                                         : (outcome == "failure" ? Outcome::failure
                                                                 : Outcome::none);
        if (je.contains("cause_link")) e.cause_link = je["cause_link"].get<std::size_t>();
        if (je.contains("effect_link")) e.effect_link = je["effect_link"].get<std::size_t>();
        if (je.contains("reason")) e.outcome_reason = je["reason"].get<std::string>();
        const std::size_t seq = je.at("seq").get<std::size_t>();
        if (it->second.events.size() <= seq) it->second.events.resize(seq + 1);
        it->second.events[seq] = std::move(e);
    }
    std::vector<EventLog> out;
    out.reserve(order.size());
    for (const auto& id : order) out.push_back(std::move(logs.at(id)));
    return out;
}

// ---- feature files ----
//
// Layout: magic "AFTF", u32 version, u32 episode-id length, id bytes,
// u32 N, u32 d_a, u32 d_m, then N*d_a appearance floats followed by N*d_m
// motion floats, row-major little-endian float32.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("feature file: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

inline float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

inline void write_feature_file(const std::string& path, const EpisodeData& ep) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("AFTF", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(ep.log.episode_id.size()));
    os.write(ep.log.episode_id.data(),
             static_cast<std::streamsize>(ep.log.episode_id.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(ep.appearance.rows));
    detail::put_u32(os, static_cast<std::uint32_t>(ep.appearance.cols));
    detail::put_u32(os, static_cast<std::uint32_t>(ep.motion.cols));
    for (double x : ep.appearance.v) detail::put_f32(os, static_cast<float>(x));
    for (double x : ep.motion.v) detail::put_f32(os, static_cast<float>(x));
    if (!os) throw std::runtime_error("write failed: " + path);
}

struct FeatureData {
    std::string episode_id;
    Mat appearance;
    Mat motion;
};

inline FeatureData read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "AFTF")
        throw std::runtime_error("feature file: bad magic: " + path);
    const std::uint32_t version = detail::get_u32(is);
    if (version != 1)
        throw std::runtime_error("feature file: unsupported version " +
                                 std::to_string(version));
    const std::uint32_t id_len = detail::get_u32(is);
    std::string id(id_len, '\0');
    if (!is.read(id.data(), id_len)) throw std::runtime_error("feature file: truncated id");
    const std::uint32_t n = detail::get_u32(is);
    const std::uint32_t d_a = detail::get_u32(is);
    const std::uint32_t d_m = detail::get_u32(is);
    FeatureData out;
    out.episode_id = std::move(id);
    out.appearance = Mat(n, d_a);
    out.motion = Mat(n, d_m);
    for (auto& x : out.appearance.v) x = static_cast<double>(detail::get_f32(is));
    for (auto& x : out.motion.v) x = static_cast<double>(detail::get_f32(is));
    return out;
}

// Manifest: one line per episode, "episode_id<TAB>relative_path".
inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& [id, rel] : entries) os << id << "\t" << rel << "\n";
}

inline std::map<std::string, std::string> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed manifest line");
        out.emplace(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

}  // namespace aft
