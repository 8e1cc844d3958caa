#pragma once

// Question-side pipeline: whitespace/punctuation tokenizer over a closed
// vocabulary, learned embeddings, and a bidirectional GRU producing the
// global question vector w and per-token matrix W.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/params.hpp"
#include "aft/tensor.hpp"

namespace aft {

class Vocabulary {
public:
    static constexpr const char* kUnknown = "<unk>";
    static constexpr const char* kPadding = "<pad>";

    Vocabulary() {
        add(kUnknown);
        add(kPadding);
    }

    std::size_t add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const std::size_t id = tokens_.size();
        ids_.emplace(token, id);
        tokens_.push_back(token);
        return id;
    }

    std::size_t lookup(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? unknown_id() : it->second;
    }

    std::size_t unknown_id() const { return ids_.at(kUnknown); }
    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    // One token per line, line number = id.
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("Vocabulary: cannot write " + path);
        for (const auto& t : tokens_) out << t << "\n";
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("Vocabulary: cannot read " + path);
        Vocabulary vocab;
        vocab.ids_.clear();
        vocab.tokens_.clear();
        std::string line;
        while (std::getline(in, line)) {
            vocab.ids_.emplace(line, vocab.tokens_.size());
            vocab.tokens_.push_back(line);
        }
        if (!vocab.ids_.count(kUnknown))
            throw std::runtime_error("Vocabulary: file missing " + std::string(kUnknown));
        return vocab;
    }

private:
    std::map<std::string, std::size_t> ids_;
    std::vector<std::string> tokens_;
};

// Lowercased split on whitespace; punctuation characters become their own
// tokens ("blocks?" -> "blocks", "?").
inline std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (std::isalnum(c) || ch == '\'' || ch == '-') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            out.emplace_back(1, ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::vector<std::size_t> tokenize(const std::string& question, const Vocabulary& vocab) {
    const auto words = split_tokens(question);
    if (words.empty())
        throw std::invalid_argument("tokenize: question is empty after trimming");
    std::vector<std::size_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.lookup(w));
    return ids;
}

struct QuestionEncoding {
    Tensor w;        // global, length d
    Tensor local;    // per-token, L x d
};

namespace detail {

// Single GRU direction's parameters: update/reset/candidate gates.
struct GruParams {
    Tensor wz, uz, bz, wr, ur, br, wh, uh, bh;

    GruParams() = default;
    GruParams(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::mt19937_64& rng) {
        wz = store.add_xavier(prefix + ".wz", hidden, in, rng);
        uz = store.add_xavier(prefix + ".uz", hidden, hidden, rng);
        bz = store.add_zeros(prefix + ".bz", {hidden});
        wr = store.add_xavier(prefix + ".wr", hidden, in, rng);
        ur = store.add_xavier(prefix + ".ur", hidden, hidden, rng);
        br = store.add_zeros(prefix + ".br", {hidden});
        wh = store.add_xavier(prefix + ".wh", hidden, in, rng);
        uh = store.add_xavier(prefix + ".uh", hidden, hidden, rng);
        bh = store.add_zeros(prefix + ".bh", {hidden});
    }

    Tensor step(const Tensor& x, const Tensor& h) const {
        Tensor z = sigmoid(add(add(matvec(wz, x), matvec(uz, h)), bz));
        Tensor r = sigmoid(add(add(matvec(wr, x), matvec(ur, h)), br));
        Tensor cand = tanh_t(add(add(matvec(wh, x), matvec(uh, mul(r, h))), bh));
        // h' = (1-z) * h + z * cand
        Tensor one_minus_z = sub(Tensor::constant({z.size()}, std::vector<double>(z.size(), 1.0)), z);
        return add(mul(one_minus_z, h), mul(z, cand));
    }
};

}  // namespace detail

// Bidirectional single-layer GRU over embedded tokens. W[t] is the projected
// concatenation of the forward and backward states at t; w is the projected
// concatenation of the two final states.
class QuestionEncoder {
public:
    QuestionEncoder() = default;
    QuestionEncoder(ParamStore& store, const std::string& prefix, std::size_t vocab_size,
                    std::size_t d, std::mt19937_64& rng)
        : d_(d), hidden_(d / 2) {
        if (d % 2 != 0) throw std::invalid_argument("QuestionEncoder: d must be even");
        embedding_ = store.add_xavier(prefix + ".embedding", vocab_size, d, rng);
        fwd_ = detail::GruParams(store, prefix + ".fwd", d, hidden_, rng);
        bwd_ = detail::GruParams(store, prefix + ".bwd", d, hidden_, rng);
        proj_local_ = store.add_xavier(prefix + ".proj_local", d, 2 * hidden_, rng);
        proj_global_ = store.add_xavier(prefix + ".proj_global", d, 2 * hidden_, rng);
    }

    QuestionEncoding forward(const std::vector<std::size_t>& ids) const {
        if (ids.empty()) throw std::invalid_argument("encode_question: empty token sequence");
        Tensor emb = embed_rows(embedding_, ids);
        const std::size_t len = ids.size();

        std::vector<Tensor> fwd_states(len), bwd_states(len);
        Tensor h = Tensor::zeros({hidden_});
        for (std::size_t t = 0; t < len; ++t) {
            h = fwd_.step(row(emb, t), h);
            fwd_states[t] = h;
        }
        h = Tensor::zeros({hidden_});
        for (std::size_t t = len; t-- > 0;) {
            h = bwd_.step(row(emb, t), h);
            bwd_states[t] = h;
        }

        std::vector<Tensor> local_rows(len);
        for (std::size_t t = 0; t < len; ++t)
            local_rows[t] = matvec(proj_local_, concat_vec(fwd_states[t], bwd_states[t]));

        QuestionEncoding enc;
        enc.local = stack_rows(local_rows);
        enc.w = matvec(proj_global_, concat_vec(fwd_states[len - 1], bwd_states[0]));
        return enc;
    }

    std::size_t dim() const { return d_; }

private:
    std::size_t d_ = 0, hidden_ = 0;
    Tensor embedding_;
    detail::GruParams fwd_, bwd_;
    Tensor proj_local_, proj_global_;
};

}  // namespace aft
