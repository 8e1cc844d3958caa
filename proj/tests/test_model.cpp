#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "aft/model.hpp"
#include "aft/optim.hpp"

using namespace aft;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Mat m(r, c);
    for (auto& v : m.v) v = dist(rng);
    return m;
}

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.d_ff = 8;
    cfg.focal = {1, 3};
    cfg.d_appearance = 3;
    cfg.d_motion = 3;
    cfg.max_frames = 6;
    cfg.vocab_size = 6;
    cfg.num_classes = 3;
    return cfg;
}

}  // namespace

TEST_CASE("project_frames: selector projection recovers the appearance block") {
    std::mt19937_64 rng(1);
    Mat app = random_mat(4, 3, rng), mot = random_mat(4, 3, rng);
    std::vector<double> pv(3 * 6, 0.0);
    for (std::size_t i = 0; i < 3; ++i) pv[i * 6 + i] = 1.0;  // [I | 0]
    Tensor r = project_frames(app, mot, Tensor::matrix(3, 6, pv));
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(r.at(t, j) == doctest::Approx(app.at(t, j)).epsilon(1e-14));

    Tensor z = project_frames(Mat(4, 3), Mat(4, 3), Tensor::matrix(3, 6, pv));
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(project_frames(app, Mat(4, 2), Tensor::matrix(3, 6, pv)), ShapeError);
}

TEST_CASE("project_frames N=1 toy case against direct matrix-vector product") {
    Mat app(1, 2, {1.0, 2.0}), mot(1, 2, {3.0, 4.0});
    Tensor proj = Tensor::matrix(2, 4, {1, 0, 1, 0, 0, 2, 0, 2});
    Tensor r = project_frames(app, mot, proj);
    // row = P . [1 2 3 4] = [1+3, 2*2+2*4] = [4, 12]
    CHECK(r.at(0, 0) == doctest::Approx(4.0));
    CHECK(r.at(0, 1) == doctest::Approx(12.0));
}

TEST_CASE("fuse_and_classify: shape, softmax, and argmax tie-breaking") {
    AftModel model(toy_config(), 17);
    std::mt19937_64 rng(2);
    Mat app = random_mat(4, 3, rng), mot = random_mat(4, 3, rng);
    Tensor logits = model.forward(app, mot, {1, 2, 3});
    CHECK(logits.size() == 3);

    Tensor probs = softmax_vec(logits);
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) sum += probs[i];
    CHECK(std::abs(sum - 1.0) < 1e-12);

    CHECK(argmax_class({1.0, 1.0, 0.5}) == 0);
    CHECK(argmax_class({0.0, 2.0, 2.0}) == 1);
}

TEST_CASE("argmax is invariant to adding a constant to all logits") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> logits(5);
        for (auto& v : logits) v = dist(rng);
        const std::size_t base = argmax_class(logits);
        const double c = dist(rng);
        for (auto& v : logits) v += c;
        CHECK(argmax_class(logits) == base);
    }
}

TEST_CASE("aft_model_forward end-to-end grad_check on a 6-frame, 4-token instance") {
    AftModel model(toy_config(), 23);
    std::mt19937_64 rng(4);
    Mat app = random_mat(6, 3, rng), mot = random_mat(6, 3, rng);
    const std::vector<std::size_t> ids{2, 4, 1, 3};
    auto fwd = [&] {
        Tensor logits = model.forward(app, mot, ids);
        return cross_entropy_loss(logits, {1});
    };
    GradReport r = grad_check(fwd, model.params(), 1e-6);
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("frozen full-width focus reproduces the dense standard-Transformer baseline") {
    ModelConfig banded_cfg = toy_config();
    banded_cfg.focal = {16};  // >= N-1: degenerates to full attention
    ModelConfig dense_cfg = banded_cfg;
    dense_cfg.mode = AttentionMode::dense;

    AftModel banded(banded_cfg, 31);
    AftModel dense(dense_cfg, 31);  // same seed -> shared parameters

    std::mt19937_64 rng(5);
    Tensor alpha = Tensor::vec({1.0});
    for (int rep = 0; rep < 5; ++rep) {
        Mat app = random_mat(5, 3, rng), mot = random_mat(5, 3, rng);
        const std::vector<std::size_t> ids{1, 2, 5};
        Tensor a = banded.forward(app, mot, ids, &alpha);
        Tensor b = dense.forward(app, mot, ids, &alpha);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    }
}

TEST_CASE("model forward is deterministic under a fixed seed") {
    std::mt19937_64 rng(6);
    Mat app = random_mat(4, 3, rng), mot = random_mat(4, 3, rng);
    auto run = [&] {
        AftModel model(toy_config(), 41);
        return model.forward(app, mot, {1, 2}).data();
    };
    CHECK(run() == run());
}

TEST_CASE("blindqa is blind: identical logits for any video") {
    BlindQaModel blind(6, 8, 3, 51);
    Tensor a = blind.forward({1, 4, 2});
    Tensor b = blind.forward({1, 4, 2});
    CHECK(a.size() == 3);
    CHECK(a.data() == b.data());  // no video input exists to vary
}

TEST_CASE("blindqa converges to the conditional answer distribution") {
    // Two question patterns; pattern 0 has answer 0 with probability 0.9.
    BlindQaModel blind(6, 8, 2, 61);
    AdamOptimizer opt(AdamConfig{.lr = 5e-3});
    std::mt19937_64 rng(7);
    std::bernoulli_distribution flip(0.9);
    for (int step = 0; step < 400; ++step) {
        const std::vector<std::size_t> ids{2, 3};
        const std::size_t target = flip(rng) ? 0 : 1;
        blind.params().zero_grads();
        backward(cross_entropy_loss(blind.forward(ids), {target}));
        opt.step(blind.params());
    }
    Tensor logits = blind.forward({2, 3});
    CHECK(argmax_class(logits.data()) == 0);
    Tensor probs = softmax_vec(logits);
    CHECK(probs[0] == doctest::Approx(0.9).epsilon(0.15));
}

TEST_CASE("random baseline distribution") {
    std::mt19937_64 rng(8);
    CHECK(random_baseline(1, rng) == 0);  // C=1: always correct

    std::vector<std::size_t> counts(4, 0);
    for (int i = 0; i < 100000; ++i) ++counts[random_baseline(4, rng)];
    for (auto c : counts)
        CHECK(std::abs(static_cast<double>(c) / 100000.0 - 0.25) < 0.01);
}

TEST_CASE("semantic-aware random respects question constraints") {
    std::mt19937_64 rng(9);
    const std::vector<std::string> labels{"yes", "no", "3", "spike", "block"};

    for (int i = 0; i < 200; ++i) {
        const std::size_t bin = semantic_aware_random("Is the spike successful?", labels, rng);
        CHECK((labels[bin] == "yes" || labels[bin] == "no"));
        const std::size_t num =
            semantic_aware_random("How many times does the left team serve?", labels, rng);
        CHECK(is_numeric_label(labels[num]));
    }

    // Binary question over a balanced yes/no space: accuracy ~0.5.
    std::size_t hits = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const std::size_t gold = i % 2;  // balanced
        if (semantic_aware_random("Does the right team block?", labels, rng) == gold) ++hits;
    }
    CHECK(std::abs(static_cast<double>(hits) / draws - 0.5) < 0.03);

    // Empty constrained subset falls back to the full space and is logged.
    std::size_t fallbacks = 0;
    const std::vector<std::string> no_numbers{"yes", "no"};
    semantic_aware_random("How many points?", no_numbers, rng, &fallbacks);
    CHECK(fallbacks == 1);
}
