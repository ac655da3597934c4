#include <catch_amalgamated.hpp>

#include "diffseg/refine.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/uncertainty.hpp"

using namespace diffseg;

namespace {

// Saturated diff maps whose unaries reproduce the mask (after the 1e-3
// clamp), so a w1=w2=0 CRF returns essentially the original mask.
DiffMap diffmap_of_mask(const BinaryMask& m) {
    DiffMap d;
    d.timestep = 1;
    d.values = Map2(m.height, m.width);
    for (size_t i = 0; i < m.data.size(); ++i)
        d.values.data[i] = static_cast<float>(m.data[i]);
    return d;
}

BinaryMask random_mask(int h, int w, RngStream& rng, double p = 0.5) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

MaskEnsemble make_ensemble(std::vector<BinaryMask> masks) {
    MaskEnsemble Y;
    Y.masks = std::move(masks);
    for (size_t i = 0; i < Y.masks.size(); ++i)
        Y.timesteps.push_back(static_cast<int>(i) + 1);
    return Y;
}

std::vector<DiffMap> diffmaps_of(const MaskEnsemble& Y) {
    std::vector<DiffMap> out;
    for (const auto& m : Y.masks) out.push_back(diffmap_of_mask(m));
    return out;
}

CrfParams degenerate_crf() {
    CrfParams p;
    p.w1 = 0.0;
    p.w2 = 0.0;
    p.iterations = 1;
    return p;
}

}  // namespace

TEST_CASE("majority_binarize boundary conventions") {
    Map2 half(2, 2);
    for (auto& v : half.data) v = 0.5f;
    CHECK(majority_binarize(half, 0.5).count_ones() == 4);  // >= rule
    CHECK(majority_binarize(half, 0.0).count_ones() == 4);  // threshold 0
    CHECK(majority_binarize(half, 0.6).count_ones() == 0);

    // Soft mean of 3 masks where 2 agree per pixel -> pixelwise majority.
    Map2 mean(1, 3);
    mean.data = {2.0f / 3.0f, 1.0f / 3.0f, 1.0f};
    BinaryMask m = majority_binarize(mean, 0.5);
    CHECK(m.data == std::vector<uint8_t>{1, 0, 1});
}

TEST_CASE("degenerate CRF with K=1, m=N reduces to majority vote") {
    RngStream rng(2);
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 5; ++i) masks.push_back(random_mask(8, 8, rng));
    MaskEnsemble Y = make_ensemble(masks);
    Image img(8, 8, 3);
    for (auto& v : img.data) v = 0.5f;

    RefineConfig cfg;
    cfg.iterations = 1;
    cfg.subset_size = 5;
    cfg.use_fast_crf = false;
    RefineResult r = refine_ensemble(Y, img, diffmaps_of(Y), degenerate_crf(),
                                     cfg);

    Map2 c = coherence(Y);
    BinaryMask vote = majority_binarize(c, 0.5);
    CHECK(r.final_mask.data == vote.data);
    REQUIRE(r.iteration_masks.size() == 1);
    REQUIRE(r.chosen_subsets.size() == 1);
    CHECK(r.chosen_subsets[0].size() == 5);
}

TEST_CASE("identical ensemble members refine to that member") {
    RngStream rng(3);
    BinaryMask m = random_mask(8, 8, rng, 0.4);
    MaskEnsemble Y = make_ensemble({m, m, m, m});
    Image img(8, 8, 3);
    RefineConfig cfg;
    cfg.iterations = 3;
    cfg.subset_size = 2;
    cfg.use_fast_crf = false;
    RefineResult r = refine_ensemble(Y, img, diffmaps_of(Y), degenerate_crf(),
                                     cfg);
    CHECK(r.final_mask.data == m.data);
    for (const auto& it : r.iteration_masks) REQUIRE(it.data == m.data);
}

TEST_CASE("refinement is deterministic per seed, binary, and subset-valid") {
    RngStream rng(4);
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 6; ++i) masks.push_back(random_mask(16, 16, rng, 0.3));
    MaskEnsemble Y = make_ensemble(masks);
    Image img(16, 16, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());

    CrfParams crf;
    crf.iterations = 2;
    RefineConfig cfg;
    cfg.iterations = 3;
    cfg.subset_size = 4;
    cfg.seed = 11;
    cfg.use_fast_crf = false;

    RefineResult a = refine_ensemble(Y, img, diffmaps_of(Y), crf, cfg);
    RefineResult b = refine_ensemble(Y, img, diffmaps_of(Y), crf, cfg);
    CHECK(a.final_mask.data == b.final_mask.data);
    CHECK(a.chosen_subsets == b.chosen_subsets);

    for (uint8_t v : a.final_mask.data) REQUIRE((v == 0 || v == 1));
    for (const auto& subset : a.chosen_subsets) {
        REQUIRE(subset.size() == 4);
        std::vector<size_t> s = subset;
        std::sort(s.begin(), s.end());
        REQUIRE(std::adjacent_find(s.begin(), s.end()) == s.end());
        for (size_t idx : s) REQUIRE(idx < 6);
    }
}

TEST_CASE("seed changes only move pixels inside the ambiguity region") {
    RngStream rng(5);
    std::vector<BinaryMask> masks;
    // Members agree outside a central patch; the patch itself is noisy.
    for (int i = 0; i < 6; ++i) {
        BinaryMask m(16, 16);
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) m.at(y, x) = 1;
        for (int y = 6; y < 10; ++y)
            for (int x = 6; x < 10; ++x)
                m.at(y, x) = rng.bernoulli(0.5) ? 1 : 0;
        masks.push_back(m);
    }
    MaskEnsemble Y = make_ensemble(masks);
    Map2 amb = ambiguity(Y);
    Image img(16, 16, 3);
    for (auto& v : img.data) v = 0.5f;

    RefineConfig cfg;
    cfg.iterations = 2;
    cfg.subset_size = 3;
    cfg.use_fast_crf = false;
    cfg.seed = 1;
    RefineResult a =
        refine_ensemble(Y, img, diffmaps_of(Y), degenerate_crf(), cfg);
    cfg.seed = 2;
    RefineResult b =
        refine_ensemble(Y, img, diffmaps_of(Y), degenerate_crf(), cfg);
    for (size_t i = 0; i < amb.data.size(); ++i)
        if (amb.data[i] == 0.0f)
            REQUIRE(a.final_mask.data[i] == b.final_mask.data[i]);
}

TEST_CASE("refine validates its configuration") {
    RngStream rng(6);
    BinaryMask m = random_mask(8, 8, rng);
    MaskEnsemble Y = make_ensemble({m, m});
    Image img(8, 8, 3);
    RefineConfig cfg;
    cfg.subset_size = 3;  // m > N
    CHECK_THROWS_AS(
        refine_ensemble(Y, img, diffmaps_of(Y), CrfParams{}, cfg),
        config_error);
    cfg.subset_size = 1;
    cfg.iterations = 0;
    CHECK_THROWS_AS(
        refine_ensemble(Y, img, diffmaps_of(Y), CrfParams{}, cfg),
        config_error);
    // diff map count mismatch
    RefineConfig ok;
    ok.subset_size = 2;
    std::vector<DiffMap> wrong = {diffmap_of_mask(m)};
    CHECK_THROWS_AS(refine_ensemble(Y, img, wrong, CrfParams{}, ok),
                    input_error);
}
