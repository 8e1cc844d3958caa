#pragma once

// End-to-end AFT question-answering model and the baselines: the dense
// standard-Transformer variant (same architecture, dense attention), BlindQA
// (question only), and the two random baselines.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aft/attention.hpp"
#include "aft/kernels.hpp"
#include "aft/params.hpp"
#include "aft/tensor.hpp"
#include "aft/text.hpp"

namespace aft {

struct ModelConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t d_ff = 128;
    std::vector<std::size_t> focal{3, 9, 80};
    AttentionMode mode = AttentionMode::auto_focus;
    std::size_t d_appearance = 32;
    std::size_t d_motion = 32;
    std::size_t max_frames = 80;
    std::size_t vocab_size = 0;
    std::size_t num_classes = 0;

    EncoderConfig encoder() const {
        EncoderConfig e;
        e.d = d;
        e.heads = heads;
        e.layers = layers;
        e.d_ff = d_ff;
        e.focal = FocalSet(focal);
        e.mode = mode;
        return e;
    }

    void validate() const {
        if (heads == 0 || d % heads != 0)
            throw std::invalid_argument("ModelConfig: d must be divisible by heads");
        if (num_classes < 2) throw std::invalid_argument("ModelConfig: need >= 2 answer classes");
        if (vocab_size < 1) throw std::invalid_argument("ModelConfig: vocabulary is empty");
        FocalSet(focal).validate();
    }
};

// R[t] = projection . concat(appearance[t], motion[t]); projection is
// d x (d_a + d_m), inputs are constant feature matrices.
inline Tensor project_frames(const Mat& appearance, const Mat& motion, const Tensor& projection) {
    if (appearance.rows != motion.rows)
        throw ShapeError("project_frames: appearance/motion frame counts differ");
    if (projection.rank() != 2 || projection.cols() != appearance.cols + motion.cols)
        throw ShapeError("project_frames: projection width must equal d_a + d_m");
    const std::size_t n = appearance.rows;
    std::vector<double> cat(n * (appearance.cols + motion.cols));
    for (std::size_t t = 0; t < n; ++t) {
        std::copy_n(appearance.row(t), appearance.cols,
                    cat.data() + t * (appearance.cols + motion.cols));
        std::copy_n(motion.row(t), motion.cols,
                    cat.data() + t * (appearance.cols + motion.cols) + appearance.cols);
    }
    Tensor x = Tensor::constant({n, appearance.cols + motion.cols}, std::move(cat));
    return matmul(x, transpose(projection));
}

class AftModel {
public:
    AftModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), enc_cfg_(cfg.encoder()) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        qenc_ = QuestionEncoder(params_, "text", cfg_.vocab_size, cfg_.d, rng);
        gate_ = FocusGate(params_, "focus", enc_cfg_.focal.size(), cfg_.d, rng);
        encoder_ = AftEncoder(params_, "enc", enc_cfg_, rng);
        frame_proj_ =
            params_.add_xavier("frames.proj", cfg_.d, cfg_.d_appearance + cfg_.d_motion, rng);
        pos_emb_ = params_.add_xavier("frames.pos", cfg_.max_frames, cfg_.d, rng);
        fuse_gate_w_ = params_.add_xavier("fuse.gate_w", cfg_.d, 2 * cfg_.d, rng);
        fuse_gate_b_ = params_.add_zeros("fuse.gate_b", {cfg_.d});
        fuse_video_ = params_.add_xavier("fuse.video", cfg_.d, cfg_.d, rng);
        fuse_text_ = params_.add_xavier("fuse.text", cfg_.d, cfg_.d, rng);
        head_w_ = params_.add_xavier("head.w", cfg_.num_classes, cfg_.d, rng);
        head_b_ = params_.add_zeros("head.b", {cfg_.num_classes});
    }

    // Gated fusion of the mean-pooled encoder output and the global question
    // vector, then the linear answer head. The local question matrix W is an
    // extension point for richer fusion and is not consumed here.
    Tensor fuse_and_classify(const Tensor& m_pooled, const Tensor& w) const {
        Tensor g = sigmoid(add(matvec(fuse_gate_w_, concat_vec(m_pooled, w)), fuse_gate_b_));
        Tensor ones = Tensor::constant({g.size()}, std::vector<double>(g.size(), 1.0));
        Tensor s = add(mul(g, matvec(fuse_video_, m_pooled)),
                       mul(sub(ones, g), matvec(fuse_text_, w)));
        return add(matvec(head_w_, s), head_b_);
    }

    // Full pipeline; alpha_override (when given) replaces the gate output,
    // which is how the frozen-focus equivalence to the dense baseline is
    // exercised.
    Tensor forward(const Mat& appearance, const Mat& motion,
                   const std::vector<std::size_t>& token_ids,
                   const Tensor* alpha_override = nullptr) const {
        const std::size_t n = appearance.rows;
        if (n > cfg_.max_frames)
            throw std::invalid_argument("AftModel: episode longer than max_frames");
        Tensor r = project_frames(appearance, motion, frame_proj_);
        Tensor x = add(r, slice_rows(pos_emb_, 0, n));
        QuestionEncoding q = qenc_.forward(token_ids);
        Tensor alpha = alpha_override ? *alpha_override : gate_.forward(q.w);
        Tensor m = encoder_.forward(x, alpha);
        return fuse_and_classify(mean_rows(m), q.w);
    }

    // Focus weights for a question under the current parameters.
    std::vector<double> focus_weights(const std::vector<std::size_t>& token_ids) const {
        QuestionEncoding q = qenc_.forward(token_ids);
        return gate_.forward(q.w).data();
    }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    EncoderConfig enc_cfg_;
    ParamStore params_;
    QuestionEncoder qenc_;
    FocusGate gate_;
    AftEncoder encoder_;
    Tensor frame_proj_, pos_emb_;
    Tensor fuse_gate_w_, fuse_gate_b_, fuse_video_, fuse_text_;
    Tensor head_w_, head_b_;
};

// Question-only baseline: bidirectional encoder plus a one-hidden-layer MLP
// answer decoder. Never sees video input.
class BlindQaModel {
public:
    BlindQaModel(std::size_t vocab_size, std::size_t d, std::size_t num_classes,
                 std::uint64_t seed)
        : d_(d), num_classes_(num_classes) {
        std::mt19937_64 rng(seed);
        qenc_ = QuestionEncoder(params_, "text", vocab_size, d, rng);
        w1_ = params_.add_xavier("mlp.w1", d, d, rng);
        b1_ = params_.add_zeros("mlp.b1", {d});
        w2_ = params_.add_xavier("mlp.w2", num_classes, d, rng);
        b2_ = params_.add_zeros("mlp.b2", {num_classes});
    }

    Tensor forward(const std::vector<std::size_t>& token_ids) const {
        QuestionEncoding q = qenc_.forward(token_ids);
        Tensor h = tanh_t(add(matvec(w1_, q.w), b1_));
        return add(matvec(w2_, h), b2_);
    }

    ParamStore& params() { return params_; }
    std::size_t num_classes() const { return num_classes_; }

private:
    std::size_t d_ = 0, num_classes_ = 0;
    ParamStore params_;
    QuestionEncoder qenc_;
    Tensor w1_, b1_, w2_, b2_;
};

// Ties break toward the lowest class index.
inline std::size_t argmax_class(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("argmax_class: empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

inline std::size_t random_baseline(std::size_t num_classes, std::mt19937_64& rng) {
    if (num_classes < 1) throw std::invalid_argument("random_baseline: empty answer space");
    std::uniform_int_distribution<std::size_t> dist(0, num_classes - 1);
    return dist(rng);
}

enum class QuestionConstraint : std::uint8_t { binary, numeric, unconstrained };

// Leading-token rules: Do/Does/Is/Are/Would -> binary; How many -> numeric.
inline QuestionConstraint classify_question(const std::string& question) {
    const auto toks = split_tokens(question);
    if (toks.empty()) return QuestionConstraint::unconstrained;
    const std::string& first = toks[0];
    if (first == "do" || first == "does" || first == "is" || first == "are" || first == "would")
        return QuestionConstraint::binary;
    if (first == "how" && toks.size() > 1 && toks[1] == "many") return QuestionConstraint::numeric;
    return QuestionConstraint::unconstrained;
}

inline bool is_numeric_label(const std::string& label) {
    if (label.empty()) return false;
    for (char c : label)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

// Uniform draw over the subset of answer classes compatible with the
// question's constraint; falls back to the full space when the subset is
// empty (fallback_count is bumped so callers can log it).
inline std::size_t semantic_aware_random(const std::string& question,
                                         const std::vector<std::string>& answer_labels,
                                         std::mt19937_64& rng,
                                         std::size_t* fallback_count = nullptr) {
    const QuestionConstraint kind = classify_question(question);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < answer_labels.size(); ++i) {
        const std::string& label = answer_labels[i];
        const bool ok = kind == QuestionConstraint::binary ? (label == "yes" || label == "no")
                        : kind == QuestionConstraint::numeric ? is_numeric_label(label)
                                                              : true;
        if (ok) candidates.push_back(i);
    }
    if (candidates.empty()) {
        if (fallback_count) ++*fallback_count;
        return random_baseline(answer_labels.size(), rng);
    }
    std::uniform_int_distribution<std::size_t> dist(0, candidates.size() - 1);
    return candidates[dist(rng)];
}

}  // namespace aft
