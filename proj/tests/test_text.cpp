#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "aft/optim.hpp"
#include "aft/text.hpp"

using namespace aft;

TEST_CASE("tokenize: direct lookup with punctuation split") {
    const char* path = "vocab_test.txt";
    {
        std::ofstream out(path);
        out << "how\nmany\nblocks\n?\n<unk>\n";
    }
    Vocabulary vocab = Vocabulary::load(path);
    std::remove(path);

    CHECK(tokenize("How many blocks?", vocab) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(tokenize("How many gizmos?", vocab) ==
          std::vector<std::size_t>{0, 1, vocab.unknown_id(), 3});
    CHECK_THROWS_AS(tokenize("   ", vocab), std::invalid_argument);
}

TEST_CASE("vocabulary ids are contiguous and round-trip through the file format") {
    Vocabulary vocab;
    const std::size_t a = vocab.add("spike");
    const std::size_t b = vocab.add("block");
    CHECK(a == 2);  // after <unk>, <pad>
    CHECK(b == 3);
    CHECK(vocab.add("spike") == a);

    const char* path = "vocab_roundtrip.txt";
    vocab.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    std::remove(path);
    CHECK(loaded.size() == vocab.size());
    CHECK(loaded.lookup("spike") == a);
    CHECK(loaded.unknown_id() == vocab.unknown_id());
}

TEST_CASE("encode_question shape contract and determinism") {
    ParamStore store;
    std::mt19937_64 rng(3);
    QuestionEncoder enc(store, "q", 10, 8, rng);

    QuestionEncoding e5 = enc.forward({1, 2, 3, 4, 5});
    CHECK(e5.local.rows() == 5);
    CHECK(e5.local.cols() == 8);
    CHECK(e5.w.size() == 8);

    QuestionEncoding e1 = enc.forward({7});
    CHECK(e1.local.rows() == 1);
    CHECK(e1.w.size() == 8);

    QuestionEncoding again = enc.forward({1, 2, 3, 4, 5});
    CHECK(e5.w.data() == again.w.data());
    CHECK(e5.local.data() == again.local.data());

    CHECK_THROWS_AS(enc.forward({42}), std::out_of_range);
    CHECK_THROWS_AS(enc.forward({}), std::invalid_argument);
}

TEST_CASE("grad_check: encode_question parameters") {
    ParamStore store;
    std::mt19937_64 rng(5);
    QuestionEncoder enc(store, "q", 6, 6, rng);
    const std::vector<std::size_t> ids{1, 4, 2};
    auto fwd = [&] {
        QuestionEncoding e = enc.forward(ids);
        return add(sum(mul(e.w, e.w)), sum(mul(e.local, e.local)));
    };
    GradReport r = grad_check(fwd, store, 1e-6);
    CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("reversing tokens swaps forward/backward roles under mirrored parameters") {
    ParamStore store;
    std::mt19937_64 rng(7);
    const std::size_t d = 8, hidden = 4;
    QuestionEncoder enc(store, "q", 6, d, rng);

    // Mirror: backward direction gets the forward direction's parameters, and
    // the global projection becomes identity so w = [fwd_final; bwd_first].
    for (const char* suffix : {".wz", ".uz", ".bz", ".wr", ".ur", ".br", ".wh", ".uh", ".bh"}) {
        Tensor f = store.get(std::string("q.fwd") + suffix);
        Tensor b = store.get(std::string("q.bwd") + suffix);
        b.data() = f.data();
    }
    Tensor proj = store.get("q.proj_global");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) proj.data()[i * d + j] = i == j ? 1.0 : 0.0;

    QuestionEncoding fwd = enc.forward({1, 2});
    QuestionEncoding rev = enc.forward({2, 1});
    for (std::size_t i = 0; i < hidden; ++i) {
        CHECK(rev.w[i] == doctest::Approx(fwd.w[hidden + i]).epsilon(1e-12));
        CHECK(rev.w[hidden + i] == doctest::Approx(fwd.w[i]).epsilon(1e-12));
    }
}
