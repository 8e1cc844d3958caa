#pragma once

// Synthetic sports-episode generator with ground-truth event logs,
// template-based question generation for the four question types, a
// brute-force answer oracle, and the dataset-balancing algorithms
// (meta-question de-correlation filter, answer-pool construction,
// stratified splitting).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/kernels.hpp"

namespace aft {

enum class Team : std::uint8_t { left, right, none };
enum class Outcome : std::uint8_t { success, failure, none };

inline Team other_team(Team t) {
    if (t == Team::left) return Team::right;
    if (t == Team::right) return Team::left;
    return Team::none;
}

inline const char* team_name(Team t) {
    switch (t) {
        case Team::left: return "left";
        case Team::right: return "right";
        default: return "none";
    }
}

struct Event {
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    std::size_t action_id = 0;
    Team team = Team::none;
    Outcome outcome = Outcome::none;
    std::optional<std::size_t> cause_link;   // event that caused this one's outcome
    std::optional<std::size_t> effect_link;  // event this one effected
    std::string outcome_reason;
};

struct EventLog {
    std::string episode_id;
    std::size_t num_frames = 0;
    std::vector<Event> events;  // sorted by start_frame
    std::string sport;
    bool two_team = true;
};

// Action alphabet of one sport. Primary actions occupy [0, primaries);
// counter-reactions and effect-reactions follow and are only emitted as
// reactions, which keeps the causal-rule table's closed-form failure rate
// exact (a reaction can never accidentally counter a later primary).
struct SportSpec {
    std::string name;
    std::vector<std::string> actions;
    std::size_t primaries = 0;
    std::size_t counters = 0;  // actions [primaries, primaries+counters)
    bool two_team = true;

    std::size_t counter_of(std::size_t action) const {
        return primaries + action % counters;
    }
    const std::string& action_name(std::size_t id) const { return actions.at(id); }
    std::size_t action_id(const std::string& name) const {
        for (std::size_t i = 0; i < actions.size(); ++i)
            if (actions[i] == name) return i;
        throw std::out_of_range("SportSpec: unknown action " + name);
    }
};

inline std::vector<SportSpec> default_sports() {
    return {
        SportSpec{"volleyball",
                  {"serve", "set", "spike", "dig", "pass", "block", "trap", "receive",
                   "scramble", "rally"},
                  5, 2, true},
        SportSpec{"basketball",
                  {"shoot", "dribble", "pass", "layup", "rebound", "steal", "swat", "defend",
                   "fastbreak", "regroup"},
                  5, 2, true},
        SportSpec{"gym", {"flip", "twist", "jump", "balance", "roll", "split"}, 6, 0, false},
    };
}

struct GenConfig {
    std::size_t num_frames = 80;
    std::size_t d_appearance = 32;
    std::size_t d_motion = 32;
    double noise = 0.3;
    std::size_t noise_corr = 1;  // temporal correlation length of the noise, in frames
    std::size_t min_events = 8;
    std::size_t max_events = 14;
    double effect_prob = 0.55;    // chance a primary event spawns its effect reaction
    double counter_prob = 0.35;   // chance the other team counters a primary event
    std::size_t counter_window = 3;  // frames after the start in which a counter lands
    std::uint64_t embedding_seed = 1234;  // action embeddings, fixed across episodes
    std::vector<SportSpec> sports = default_sports();

    void validate() const {
        if (sports.empty()) throw std::invalid_argument("GenConfig: no sports configured");
        for (const auto& s : sports) {
            if (s.actions.empty())
                throw std::invalid_argument("GenConfig: empty action alphabet for " + s.name);
            if (s.two_team && (s.counters == 0 || s.actions.size() <= s.primaries + s.counters))
                throw std::invalid_argument("GenConfig: two-team sport needs counter and "
                                            "effect reactions: " + s.name);
        }
        if (num_frames < 1) throw std::invalid_argument("GenConfig: num_frames must be >= 1");
        if (noise_corr < 1) throw std::invalid_argument("GenConfig: noise_corr must be >= 1");
    }
};

// The causal-rule table, the single source of truth for outcomes: a primary
// action fails iff the other team performs its designated counter-action
// starting within the window after the action starts. Re-run after deleting
// hypothesized events to answer counterfactuals.
inline void evaluate_outcomes(std::vector<Event>& events, const SportSpec& sport,
                              std::size_t window) {
    if (!sport.two_team) {
        for (auto& e : events) {
            e.outcome = Outcome::none;
            e.cause_link.reset();
        }
        return;
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
        Event& e = events[i];
        if (e.action_id >= sport.primaries) {
            e.outcome = Outcome::none;
            e.cause_link.reset();
            continue;
        }
        const std::size_t counter = sport.counter_of(e.action_id);
        e.outcome = Outcome::success;
        e.cause_link.reset();
        e.outcome_reason = "clean";
        for (std::size_t k = 0; k < events.size(); ++k) {
            if (k == i) continue;
            const Event& c = events[k];
            if (c.team == other_team(e.team) && c.action_id == counter &&
                c.start_frame >= e.start_frame && c.start_frame <= e.start_frame + window) {
                e.outcome = Outcome::failure;
                e.cause_link = k;
                e.outcome_reason = "countered";
                break;
            }
        }
    }
}

struct EpisodeData {
    EventLog log;
    Mat appearance;  // N x d_a
    Mat motion;      // N x d_m
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x7f4a7c15ull;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    return x;
}

inline std::vector<double> action_embedding(const GenConfig& cfg, std::size_t sport_idx,
                                            std::size_t action, Team team, std::size_t dim,
                                            std::uint64_t salt) {
    std::mt19937_64 rng(mix_seed(cfg.embedding_seed,
                                 mix_seed(sport_idx * 131 + action * 7 +
                                              static_cast<std::size_t>(team),
                                          salt)));
    std::normal_distribution<double> dist(0.0, 0.8);
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace detail

// Deterministic per-seed episode: events drive both the latent log and the
// per-frame features (sum of active events' embeddings plus Gaussian noise).
inline EpisodeData generate_episode(const GenConfig& cfg, std::size_t sport_idx,
                                    const std::string& episode_id, std::uint64_t seed) {
    cfg.validate();
    const SportSpec& sport = cfg.sports.at(sport_idx);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> count_dist(cfg.min_events, cfg.max_events);
    std::uniform_int_distribution<std::size_t> duration_dist(1, 3);
    std::uniform_int_distribution<std::size_t> gap_dist(0, 2);
    std::uniform_int_distribution<std::size_t> primary_dist(0, sport.primaries - 1);
    std::bernoulli_distribution team_flip(0.5);
    std::bernoulli_distribution counter_roll(cfg.counter_prob);
    std::bernoulli_distribution effect_roll(cfg.effect_prob);

    // Effect reactions are dealt from a shuffled balanced deck rather than
    // sampled iid, so each episode's bag of effect actions is near-uniform
    // and the answer to an effect question cannot be read off global
    // composition statistics.
    const std::size_t effect_base = sport.primaries + sport.counters;
    const std::size_t n_effects = sport.actions.size() - effect_base;
    std::vector<std::size_t> effect_deck;
    std::size_t deck_pos = 0;
    auto deal_effect = [&]() {
        if (deck_pos == effect_deck.size()) {
            effect_deck.resize(n_effects);
            for (std::size_t i = 0; i < n_effects; ++i) effect_deck[i] = effect_base + i;
            std::shuffle(effect_deck.begin(), effect_deck.end(), rng);
            deck_pos = 0;
        }
        return effect_deck[deck_pos++];
    };

    std::vector<Event> events;
    const std::size_t target = count_dist(rng);
    std::size_t cursor = 0;
    while (events.size() < target && cursor + 1 < cfg.num_frames) {
        Event e;
        e.start_frame = cursor;
        e.end_frame = std::min(cfg.num_frames - 1, cursor + duration_dist(rng));
        e.action_id = primary_dist(rng);
        e.team = sport.two_team ? (team_flip(rng) ? Team::left : Team::right) : Team::none;
        std::size_t cluster_end = e.end_frame;
        const std::size_t self = events.size();
        events.push_back(e);

        if (sport.two_team) {
            if (counter_roll(rng)) {
                Event c;
                std::uniform_int_distribution<std::size_t> lag(1, cfg.counter_window);
                c.start_frame = std::min(cfg.num_frames - 1, e.start_frame + lag(rng));
                c.end_frame = std::min(cfg.num_frames - 1, c.start_frame + duration_dist(rng));
                c.action_id = sport.counter_of(e.action_id);
                c.team = other_team(e.team);
                cluster_end = std::max(cluster_end, c.end_frame);
                events.push_back(c);
            }
            if (effect_roll(rng)) {
                Event f;
                f.start_frame = std::min(cfg.num_frames - 1, cluster_end + 1);
                f.end_frame = std::min(cfg.num_frames - 1, f.start_frame + duration_dist(rng));
                f.action_id = deal_effect();
                f.team = other_team(e.team);
                f.cause_link = self;
                events[self].effect_link = events.size();
                cluster_end = std::max(cluster_end, f.end_frame);
                events.push_back(f);
            }
        }
        // Next primary starts strictly after the whole cluster, so a reaction
        // can never fall inside a later primary's counter window.
        cursor = cluster_end + 1 + gap_dist(rng);
    }
    if (events.empty()) {
        Event e;
        e.start_frame = 0;
        e.end_frame = cfg.num_frames - 1;
        e.action_id = 0;
        e.team = sport.two_team ? Team::left : Team::none;
        events.push_back(e);
    }

    // Generation emits events in start order; links are index-stable.
    evaluate_outcomes(events, sport, cfg.counter_window);

    EpisodeData out;
    out.log.episode_id = episode_id;
    out.log.num_frames = cfg.num_frames;
    out.log.sport = sport.name;
    out.log.two_team = sport.two_team;
    out.log.events = std::move(events);

    out.appearance = Mat(cfg.num_frames, cfg.d_appearance);
    out.motion = Mat(cfg.num_frames, cfg.d_motion);
    std::normal_distribution<double> noise(0.0, cfg.noise);
    for (const Event& e : out.log.events) {
        const auto app = detail::action_embedding(cfg, sport_idx, e.action_id, e.team,
                                                  cfg.d_appearance, 0x0a);
        const auto mot = detail::action_embedding(cfg, sport_idx, e.action_id, e.team,
                                                  cfg.d_motion, 0x0b);
        for (std::size_t t = e.start_frame; t <= e.end_frame; ++t) {
            for (std::size_t j = 0; j < cfg.d_appearance; ++j) out.appearance.at(t, j) += app[j];
            for (std::size_t j = 0; j < cfg.d_motion; ++j) out.motion.at(t, j) += mot[j];
        }
    }
    if (cfg.noise > 0.0 && cfg.noise_corr <= 1) {
        for (auto& v : out.appearance.v) v += noise(rng);
        for (auto& v : out.motion.v) v += noise(rng);
    } else if (cfg.noise > 0.0) {
        // Temporally correlated noise: a circular moving average of white noise
        // over noise_corr frames, rescaled so the per-frame deviation stays at
        // cfg.noise. Narrow attention bands cannot average it away; wide ones can.
        const std::size_t n = cfg.num_frames, L = std::min(cfg.noise_corr, n);
        const double rescale = 1.0 / std::sqrt(static_cast<double>(L));
        auto smear = [&](Mat& m) {
            std::vector<double> white(n);
            for (std::size_t j = 0; j < m.cols; ++j) {
                for (auto& w : white) w = noise(rng);
                for (std::size_t t = 0; t < n; ++t) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < L; ++k) acc += white[(t + k) % n];
                    m.at(t, j) += rescale * acc;
                }
            }
        };
        smear(out.appearance);
        smear(out.motion);
    }
    return out;
}

// ---- questions ----

enum class QuestionType : std::uint8_t { descriptive, temporal, causal, counterfactual };

inline const char* question_type_name(QuestionType t) {
    switch (t) {
        case QuestionType::descriptive: return "descriptive";
        case QuestionType::temporal: return "temporal";
        case QuestionType::causal: return "causal";
        default: return "counterfactual";
    }
}

inline QuestionType question_type_from_name(const std::string& s) {
    if (s == "descriptive") return QuestionType::descriptive;
    if (s == "temporal") return QuestionType::temporal;
    if (s == "causal") return QuestionType::causal;
    if (s == "counterfactual") return QuestionType::counterfactual;
    throw std::invalid_argument("unknown question type: " + s);
}

enum class TemplateId : std::uint8_t {
    count_team_action,
    does_team_action,
    outcome_ordinal,
    temporal_same_team,
    temporal_cross_team,
    causal_effect,
    counterfactual,
    gym_count_action,
    gym_count_total,
    gym_count_before,
    gym_temporal,
};

constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

struct ParsedQuestion {
    TemplateId tpl = TemplateId::count_team_action;
    Team team = Team::none;
    std::size_t action = kNoSlot;
    std::size_t action2 = kNoSlot;  // counterfactual hypothesis / gym "before" anchor
    std::size_t ordinal = 0;        // 1-based; 0 = no ordinal
    bool after = true;
};

inline QuestionType template_type(TemplateId tpl) {
    switch (tpl) {
        case TemplateId::count_team_action:
        case TemplateId::does_team_action:
        case TemplateId::outcome_ordinal:
        case TemplateId::gym_count_action:
        case TemplateId::gym_count_total: return QuestionType::descriptive;
        case TemplateId::temporal_same_team:
        case TemplateId::temporal_cross_team:
        case TemplateId::gym_count_before:
        case TemplateId::gym_temporal: return QuestionType::temporal;
        case TemplateId::causal_effect: return QuestionType::causal;
        default: return QuestionType::counterfactual;
    }
}

inline std::string ordinal_word(std::size_t n) {
    static const char* words[] = {"first", "second", "third",   "fourth", "fifth",  "sixth",
                                  "seventh", "eighth", "ninth", "tenth",  "eleventh", "twelfth"};
    if (n >= 1 && n <= 12) return words[n - 1];
    return std::to_string(n) + "th";
}

// Renders a template instance. With neutral=true, team identity becomes "the
// team" / "the other team" and ordinals are dropped; that rendering is the
// meta-question key.
inline std::string render_question(const ParsedQuestion& q, const SportSpec& sport,
                                   bool neutral = false) {
    const std::string team = neutral ? "the team" : std::string("the ") + team_name(q.team) +
                                                        " team";
    const std::string their = neutral ? "their" : "their";
    const std::string ord = neutral || q.ordinal == 0 ? "" : ordinal_word(q.ordinal) + " ";
    const auto act = [&](std::size_t id) { return sport.action_name(id); };
    std::ostringstream os;
    switch (q.tpl) {
        case TemplateId::count_team_action:
            os << "How many times does " << team << " perform " << act(q.action) << "?";
            break;
        case TemplateId::does_team_action:
            os << "Does " << team << " perform " << act(q.action) << "?";
            break;
        case TemplateId::outcome_ordinal:
            os << "Does " << team << " successfully do " << their << " " << ord
               << act(q.action) << "?";
            break;
        case TemplateId::temporal_same_team:
            os << "What does " << team << " do " << (q.after ? "after" : "before") << " "
               << their << " " << ord << act(q.action) << "?";
            break;
        case TemplateId::temporal_cross_team:
            os << "What does " << team << " do " << (q.after ? "after" : "before")
               << " the other team does " << (neutral ? "" : "the ") << ord << act(q.action)
               << "?";
            break;
        case TemplateId::causal_effect:
            os << "What is the effect of the " << ord << act(q.action) << " of " << team << "?";
            break;
        case TemplateId::counterfactual:
            os << "Would " << team << " succeed in do the " << ord << act(q.action)
               << " if the other team did not do " << act(q.action2) << "?";
            break;
        case TemplateId::gym_count_action:
            os << "How many times does the player perform " << act(q.action) << "?";
            break;
        case TemplateId::gym_count_total:
            os << "How many actions does the player perform?";
            break;
        case TemplateId::gym_count_before:
            os << "How many times do the players do " << act(q.action) << " before "
               << act(q.action2) << "?";
            break;
        case TemplateId::gym_temporal:
            os << "What does the player do " << (q.after ? "after" : "before") << " their "
               << ord << act(q.action) << "?";
            break;
    }
    return os.str();
}

// Meta-question key: team identity and ordinals removed at the template
// level (rendered neutrally, never by string surgery on the surface form).
inline std::string meta_question(const ParsedQuestion& q, const SportSpec& sport) {
    return render_question(q, sport, /*neutral=*/true);
}

namespace detail {

// Indices of a team's events in start order (events are already sorted).
inline std::vector<std::size_t> team_events(const EventLog& log, Team team) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < log.events.size(); ++i)
        if (log.events[i].team == team) out.push_back(i);
    return out;
}

// The i-th (1-based) event of `team` performing `action`; events are scanned
// in start order, overlapping starts tie-break by list order.
inline std::optional<std::size_t> nth_action_event(const EventLog& log, Team team,
                                                   std::size_t action, std::size_t ordinal) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const Event& e = log.events[i];
        if (e.team == team && e.action_id == action && ++seen == ordinal) return i;
    }
    return std::nullopt;
}

}  // namespace detail

// Exhaustive scan of the event log. Returns nullopt when the question is
// unresolvable (missing ordinal, no neighbouring event); such questions are
// discarded upstream.
inline std::optional<std::string> oracle_answer(const EventLog& log, const ParsedQuestion& q,
                                                const SportSpec& sport,
                                                std::size_t counter_window) {
    const auto count_answer = [](std::size_t n) { return std::to_string(n); };
    switch (q.tpl) {
        case TemplateId::count_team_action:
        case TemplateId::gym_count_action: {
            std::size_t n = 0;
            for (const Event& e : log.events)
                if (e.team == q.team && e.action_id == q.action) ++n;
            return count_answer(n);
        }
        case TemplateId::gym_count_total:
            return count_answer(log.events.size());
        case TemplateId::does_team_action: {
            for (const Event& e : log.events)
                if (e.team == q.team && e.action_id == q.action) return "yes";
            return "no";
        }
        case TemplateId::outcome_ordinal: {
            auto idx = detail::nth_action_event(log, q.team, q.action, q.ordinal);
            if (!idx || log.events[*idx].outcome == Outcome::none) return std::nullopt;
            return log.events[*idx].outcome == Outcome::success ? "yes" : "no";
        }
        case TemplateId::temporal_same_team:
        case TemplateId::gym_temporal: {
            auto idx = detail::nth_action_event(log, q.team, q.action, q.ordinal);
            if (!idx) return std::nullopt;
            const auto mine = detail::team_events(log, q.team);
            auto pos = std::find(mine.begin(), mine.end(), *idx);
            if (q.after) {
                if (pos + 1 == mine.end()) return std::nullopt;
                return sport.action_name(log.events[*(pos + 1)].action_id);
            }
            if (pos == mine.begin()) return std::nullopt;
            return sport.action_name(log.events[*(pos - 1)].action_id);
        }
        case TemplateId::temporal_cross_team: {
            auto idx = detail::nth_action_event(log, other_team(q.team), q.action, q.ordinal);
            if (!idx) return std::nullopt;
            const std::size_t anchor = log.events[*idx].start_frame;
            const auto mine = detail::team_events(log, q.team);
            if (q.after) {
                for (auto i : mine)
                    if (log.events[i].start_frame > anchor)
                        return sport.action_name(log.events[i].action_id);
            } else {
                std::optional<std::size_t> last;
                for (auto i : mine)
                    if (log.events[i].start_frame < anchor) last = i;
                if (last) return sport.action_name(log.events[*last].action_id);
            }
            return std::nullopt;
        }
        case TemplateId::causal_effect: {
            auto idx = detail::nth_action_event(log, q.team, q.action, q.ordinal);
            if (!idx || !log.events[*idx].effect_link) return std::nullopt;
            return sport.action_name(log.events[*log.events[*idx].effect_link].action_id);
        }
        case TemplateId::counterfactual: {
            auto idx = detail::nth_action_event(log, q.team, q.action, q.ordinal);
            if (!idx) return std::nullopt;
            // Delete every other-team event of the hypothesized action, then
            // re-run the causal-rule table and read off the outcome.
            std::vector<Event> remaining;
            std::size_t new_idx = kNoSlot;
            for (std::size_t i = 0; i < log.events.size(); ++i) {
                const Event& e = log.events[i];
                if (e.team == other_team(q.team) && e.action_id == q.action2) continue;
                if (i == *idx) new_idx = remaining.size();
                Event copy = e;
                copy.cause_link.reset();
                copy.effect_link.reset();
                remaining.push_back(copy);
            }
            if (new_idx == kNoSlot) return std::nullopt;
            evaluate_outcomes(remaining, sport, counter_window);
            if (remaining[new_idx].outcome == Outcome::none) return std::nullopt;
            return remaining[new_idx].outcome == Outcome::success ? "yes" : "no";
        }
    }
    return std::nullopt;
}

struct QARecord {
    std::string episode_id;
    std::string question;
    QuestionType type = QuestionType::descriptive;
    std::string sport;
    std::string answer;
    std::string meta_key;
};

// All answerable template instantiations for one log. Team-referencing
// templates are suppressed in single-performer mode; unresolvable instances
// are discarded (the oracle returns no answer).
inline std::vector<QARecord> generate_qa(const EventLog& log, const SportSpec& sport,
                                         std::size_t counter_window) {
    std::vector<ParsedQuestion> candidates;
    const auto teams = sport.two_team ? std::vector<Team>{Team::left, Team::right}
                                      : std::vector<Team>{Team::none};

    if (sport.two_team) {
        for (Team team : teams) {
            for (std::size_t a = 0; a < sport.actions.size(); ++a) {
                candidates.push_back({TemplateId::count_team_action, team, a});
                candidates.push_back({TemplateId::does_team_action, team, a});
            }
        }
        // Ordinal templates anchored on events that exist.
        std::map<std::pair<int, std::size_t>, std::size_t> seen, totals;
        for (const Event& e : log.events) ++totals[{static_cast<int>(e.team), e.action_id}];
        for (const Event& e : log.events) {
            const std::size_t ord = ++seen[{static_cast<int>(e.team), e.action_id}];
            if (e.action_id < sport.primaries) {
                candidates.push_back({TemplateId::outcome_ordinal, e.team, e.action_id, kNoSlot,
                                      ord});
                // Effect questions are only asked about unambiguous anchors: a
                // (team, action) pair that occurs once in the episode. Repeated
                // anchors make the answer depend on ordinal disambiguation that
                // the episode-level pooling cannot express.
                if (totals[{static_cast<int>(e.team), e.action_id}] == 1)
                    candidates.push_back({TemplateId::causal_effect, e.team, e.action_id,
                                          kNoSlot, ord});
                if (e.outcome == Outcome::failure) {
                    // Hypothesis = the actual counter (would succeed) and one
                    // unrelated other-team action (still fails).
                    const std::size_t counter = sport.counter_of(e.action_id);
                    candidates.push_back({TemplateId::counterfactual, e.team, e.action_id,
                                          counter, ord});
                    for (const Event& o : log.events)
                        if (o.team == other_team(e.team) && o.action_id != counter) {
                            candidates.push_back({TemplateId::counterfactual, e.team,
                                                  e.action_id, o.action_id, ord});
                            break;
                        }
                }
            }
            // Temporal templates use the same unique-anchor rule as effect
            // questions; see the comment above.
            if (totals[{static_cast<int>(e.team), e.action_id}] == 1)
                for (bool after : {false, true}) {
                    candidates.push_back({TemplateId::temporal_same_team, e.team, e.action_id,
                                          kNoSlot, ord, after});
                    candidates.push_back({TemplateId::temporal_cross_team, other_team(e.team),
                                          e.action_id, kNoSlot, ord, after});
                }
        }
    } else {
        for (std::size_t a = 0; a < sport.actions.size(); ++a)
            candidates.push_back({TemplateId::gym_count_action, Team::none, a});
        candidates.push_back({TemplateId::gym_count_total, Team::none});
        std::set<std::size_t> present;
        for (const Event& e : log.events) present.insert(e.action_id);
        for (std::size_t a : present)
            for (std::size_t b : present)
                if (a != b)
                    candidates.push_back({TemplateId::gym_count_before, Team::none, a, b});
        std::map<std::size_t, std::size_t> seen, totals;
        for (const Event& e : log.events) ++totals[e.action_id];
        for (const Event& e : log.events) {
            const std::size_t ord = ++seen[e.action_id];
            if (totals[e.action_id] == 1)
                for (bool after : {false, true})
                    candidates.push_back({TemplateId::gym_temporal, Team::none, e.action_id,
                                          kNoSlot, ord, after});
        }
    }

    std::vector<QARecord> out;
    for (const ParsedQuestion& q : candidates) {
        std::optional<std::string> answer;
        if (q.tpl == TemplateId::gym_count_before) {
            // Count of action events starting before the first action2 event.
            std::optional<std::size_t> anchor;
            for (const Event& e : log.events)
                if (e.action_id == q.action2) {
                    anchor = e.start_frame;
                    break;
                }
            if (anchor) {
                std::size_t n = 0;
                for (const Event& e : log.events)
                    if (e.action_id == q.action && e.start_frame < *anchor) ++n;
                answer = std::to_string(n);
            }
        } else {
            answer = oracle_answer(log, q, sport, counter_window);
        }
        if (!answer) continue;
        QARecord rec;
        rec.episode_id = log.episode_id;
        rec.question = render_question(q, sport);
        rec.type = template_type(q.tpl);
        rec.sport = sport.name;
        rec.answer = *answer;
        rec.meta_key = meta_question(q, sport);
        out.push_back(std::move(rec));
    }
    return out;
}

// ---- balancing (de-correlation filter) ----

// Removes QA pairs whose meta-question has a single answer, and downsamples
// any answer whose per-meta-question frequency is not strictly lower than
// the threshold. Removals are uniform-random under the seed and minimal in
// count.
inline std::vector<QARecord> balance_filter(std::vector<QARecord> records,
                                            double threshold = 0.5,
                                            std::uint64_t seed = 0) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("balance_filter: threshold must be in (0,1]");
    std::mt19937_64 rng(seed);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].meta_key].push_back(i);

    std::vector<std::uint8_t> keep(records.size(), 1);
    for (auto& [key, idxs] : groups) {
        // Per-answer member lists, deterministic order.
        std::map<std::string, std::vector<std::size_t>> by_answer;
        for (auto i : idxs) by_answer[records[i].answer].push_back(i);

        bool changed = true;
        while (changed) {
            changed = false;
            std::size_t total = 0;
            for (auto& [ans, members] : by_answer) total += members.size();
            if (by_answer.size() <= 1) {
                for (auto& [ans, members] : by_answer)
                    for (auto i : members) keep[i] = 0;
                by_answer.clear();
                break;
            }
            for (auto it = by_answer.begin(); it != by_answer.end();) {
                auto& members = it->second;
                const std::size_t c = members.size();
                if (static_cast<double>(c) < threshold * static_cast<double>(total)) {
                    ++it;
                    continue;
                }
                // Smallest r with (c - r) < threshold * (total - r).
                std::size_t r = 1;
                while (static_cast<double>(c - r) >=
                       threshold * static_cast<double>(total - r))
                    ++r;
                std::shuffle(members.begin(), members.end(), rng);
                for (std::size_t k = 0; k < r; ++k) keep[members.back()] = 0, members.pop_back();
                total -= r;
                changed = true;
                if (members.empty()) {
                    it = by_answer.erase(it);
                    break;  // distinct-answer count changed; restart the sweep
                }
                ++it;
            }
        }
    }
    std::vector<QARecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        if (keep[i]) out.push_back(std::move(records[i]));
    return out;
}

// ---- answer pool ----

struct AnswerPool {
    std::vector<std::string> labels;  // descending count, ties by label
    std::vector<std::size_t> counts;
    std::map<std::string, std::size_t> ids;

    std::size_t size() const { return labels.size(); }
    std::size_t id(const std::string& label) const {
        auto it = ids.find(label);
        if (it == ids.end()) throw std::out_of_range("AnswerPool: unknown label " + label);
        return it->second;
    }
    bool contains(const std::string& label) const { return ids.count(label) != 0; }
};

inline std::pair<AnswerPool, std::vector<QARecord>> build_answer_pool(
    std::vector<QARecord> records, std::size_t min_count = 30) {
    if (min_count < 1) throw std::invalid_argument("build_answer_pool: min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.answer];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [label, n] : counts)
        if (n >= min_count) kept.emplace_back(label, n);
    if (kept.empty())
        throw std::runtime_error("build_answer_pool: no answer class reaches min_count");
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    AnswerPool pool;
    for (const auto& [label, n] : kept) {
        pool.ids.emplace(label, pool.labels.size());
        pool.labels.push_back(label);
        pool.counts.push_back(n);
    }
    std::vector<QARecord> filtered;
    filtered.reserve(records.size());
    for (auto& r : records)
        if (pool.contains(r.answer)) filtered.push_back(std::move(r));
    return {std::move(pool), std::move(filtered)};
}

// ---- splitting ----

struct SplitResult {
    std::set<std::string> train, val, test;
    std::vector<std::string> warnings;

    const std::set<std::string>& subset(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }
};

// Episode-level stratified split: per sport, episodes are shuffled under the
// seed and apportioned by largest remainder, so per-sport deviation from the
// exact ratios is at most one episode. Sports with < 3 episodes go wholly to
// train (warned).
inline SplitResult stratified_split(const std::vector<std::pair<std::string, std::string>>&
                                        episode_sports,  // (episode_id, sport)
                                    const std::array<double, 3>& ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("stratified_split: ratios must sum to 1");
    std::map<std::string, std::vector<std::string>> by_sport;
    for (const auto& [id, sport] : episode_sports) by_sport[sport].push_back(id);

    SplitResult out;
    std::mt19937_64 rng(seed);
    for (auto& [sport, ids] : by_sport) {
        std::sort(ids.begin(), ids.end());
        std::shuffle(ids.begin(), ids.end(), rng);
        if (ids.size() < 3) {
            out.warnings.push_back("sport '" + sport + "' has fewer than 3 episodes; "
                                   "assigned wholly to train");
            for (const auto& id : ids) out.train.insert(id);
            continue;
        }
        const double n = static_cast<double>(ids.size());
        std::array<std::size_t, 3> base{};
        std::array<double, 3> frac{};
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double quota = n * ratios[k];
            base[k] = static_cast<std::size_t>(quota);
            frac[k] = quota - static_cast<double>(base[k]);
            assigned += base[k];
        }
        std::array<std::size_t, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
        for (std::size_t k = 0; assigned < ids.size(); ++k) ++base[order[k % 3]], ++assigned;

        std::size_t pos = 0;
        for (std::size_t k = 0; k < base[0]; ++k) out.train.insert(ids[pos++]);
        for (std::size_t k = 0; k < base[1]; ++k) out.val.insert(ids[pos++]);
        for (std::size_t k = 0; k < base[2]; ++k) out.test.insert(ids[pos++]);
    }
    return out;
}

}  // namespace aft
