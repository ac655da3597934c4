#include <catch_amalgamated.hpp>

#include "diffseg/metrics.hpp"
#include "diffseg/rng.hpp"

using namespace diffseg;

namespace {

BinaryMask filled(int h, int w, uint8_t v) {
    BinaryMask m(h, w);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
}

BinaryMask random_mask(int h, int w, RngStream& rng, double p = 0.5) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

// Independent set-form computation: |X|, |Y|, |X∩Y| accumulated separately
// from the confusion-matrix path.
struct SetCounts {
    uint64_t x = 0, y = 0, inter = 0, uni = 0;
};

SetCounts set_counts(const BinaryMask& pred, const BinaryMask& truth) {
    SetCounts s;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0, t = truth.data[i] != 0;
        s.x += p;
        s.y += t;
        s.inter += p && t;
        s.uni += p || t;
    }
    return s;
}

}  // namespace

TEST_CASE("confusion counts match hand cases") {
    BinaryMask ones4 = filled(4, 4, 1);
    Confusion c = confusion(ones4, ones4);
    CHECK(c.tp == 16);
    CHECK(c.fp == 0);
    CHECK(c.tn == 0);
    CHECK(c.fn == 0);

    BinaryMask ones2 = filled(2, 2, 1), zeros2 = filled(2, 2, 0);
    Confusion c2 = confusion(ones2, zeros2);
    CHECK(c2.fp == 4);
    CHECK(c2.tp + c2.tn + c2.fn == 0);
    CHECK(c2.total() == 4);
}

TEST_CASE("confusion rejects shape mismatch") {
    CHECK_THROWS_AS(confusion(BinaryMask(2, 2), BinaryMask(2, 3)), input_error);
}

TEST_CASE("perfect prediction scores 1 everywhere") {
    RngStream rng(11);
    BinaryMask m = random_mask(8, 8, rng);
    MetricReport r = evaluate(m, m);
    CHECK(r.dice == 1.0);
    CHECK(r.jaccard == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("hand-enumerated overlap: |X|=4, |Y|=4, |X∩Y|=2") {
    // 4x4 grid: pred marks pixels 0-3, truth marks pixels 2-5.
    BinaryMask pred(4, 4), truth(4, 4);
    for (int i = 0; i < 4; ++i) pred.data[i] = 1;
    for (int i = 2; i < 6; ++i) truth.data[i] = 1;
    MetricReport r = evaluate(pred, truth);
    CHECK(r.dice == Catch::Approx(0.5).epsilon(1e-15));
    CHECK(r.jaccard == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r.precision == Catch::Approx(0.5));
    CHECK(r.recall == Catch::Approx(0.5));
}

TEST_CASE("degenerate conventions") {
    BinaryMask zeros = filled(3, 3, 0), ones = filled(3, 3, 1);
    MetricReport both_empty = evaluate(zeros, zeros);
    CHECK(both_empty.dice == 1.0);
    CHECK(both_empty.jaccard == 1.0);
    CHECK(both_empty.precision == 1.0);
    CHECK(both_empty.recall == 1.0);
    CHECK_FALSE(both_empty.degenerate);

    MetricReport truth_empty = evaluate(ones, zeros);
    CHECK(truth_empty.degenerate);
    CHECK(truth_empty.recall == 1.0);
    CHECK(truth_empty.precision == 0.0);
    CHECK(truth_empty.dice == 0.0);
}

TEST_CASE("metrics equal brute-force set-form oracle on 1000 random pairs") {
    RngStream rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        double p = rng.uniform(0.05, 0.95);
        BinaryMask pred = random_mask(16, 16, rng, p);
        BinaryMask truth = random_mask(16, 16, rng, p);
        MetricReport r = evaluate(pred, truth);
        SetCounts s = set_counts(pred, truth);
        if (s.x + s.y == 0) {
            REQUIRE(r.dice == 1.0);
            continue;
        }
        double dice = 2.0 * s.inter / static_cast<double>(s.x + s.y);
        REQUIRE(r.dice == dice);
        if (s.uni > 0)
            REQUIRE(r.jaccard == static_cast<double>(s.inter) / s.uni);
        if (s.x > 0)
            REQUIRE(r.precision == static_cast<double>(s.inter) / s.x);
        if (s.y > 0) REQUIRE(r.recall == static_cast<double>(s.inter) / s.y);
        // Dice-Jaccard identity: D = 2J/(1+J).
        REQUIRE(r.dice ==
                Catch::Approx(2.0 * r.jaccard / (1.0 + r.jaccard))
                    .margin(1e-12));
        REQUIRE(r.dice >= 0.0);
        REQUIRE(r.dice <= 1.0);
        REQUIRE(r.jaccard <= 1.0);
    }
}

TEST_CASE("swapping pred and truth keeps dice/jaccard, swaps precision/recall") {
    RngStream rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask a = random_mask(12, 12, rng, 0.4);
        BinaryMask b = random_mask(12, 12, rng, 0.6);
        if (a.count_ones() == 0 || b.count_ones() == 0) continue;
        MetricReport r1 = evaluate(a, b);
        MetricReport r2 = evaluate(b, a);
        REQUIRE(r1.dice == r2.dice);
        REQUIRE(r1.jaccard == r2.jaccard);
        REQUIRE(r1.precision == r2.recall);
        REQUIRE(r1.recall == r2.precision);
    }
}
