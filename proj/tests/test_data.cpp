#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "diffseg/data.hpp"

using namespace diffseg;

TEST_CASE("synthesis is deterministic per seed") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 123;
    auto a = synthesize(spec, 4);
    auto b = synthesize(spec, 4);
    REQUIRE(a.size() == 4);
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].image.data == b[i].image.data);
        REQUIRE(a[i].mask.data == b[i].mask.data);
        REQUIRE(a[i].label == b[i].label);
        REQUIRE(a[i].id == b[i].id);
    }
}

TEST_CASE("diseased samples have non-empty masks matching the label") {
    SyntheticSpec spec;
    spec.image_size = 48;
    spec.seed = 5;
    for (const auto& s : synthesize(spec, 8)) {
        REQUIRE(s.label == ClassLabel::c1_unhealthy);
        REQUIRE(s.mask.count_ones() > 0);
    }
}

TEST_CASE("lesion count range [0,0] produces only healthy samples") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.lesion_count_min = 0;
    spec.lesion_count_max = 0;
    spec.seed = 9;
    for (const auto& s : synthesize(spec, 5)) {
        REQUIRE(s.label == ClassLabel::c0_healthy);
        REQUIRE(s.mask.count_ones() == 0);
    }
}

TEST_CASE("spec validation rejects oversized lesions") {
    SyntheticSpec spec;
    spec.lesion_radius_max = 0.6;
    CHECK_THROWS_AS(synthesize(spec, 1), config_error);
    SyntheticSpec bad_rate;
    bad_rate.hair_rate = 1.5;
    CHECK_THROWS_AS(synthesize(bad_rate, 1), config_error);
}

TEST_CASE("circular lesion rasterizes to within 5% of pi r^2") {
    // Drive the shape model directly: equal axes, no boundary wobble.
    data_detail::LesionShape s;
    s.cx = 32.0;
    s.cy = 32.0;
    s.rx = s.ry = 12.0;
    s.angle = 0.7;
    s.wobble_amp = 0.0;
    for (int k = 0; k < 3; ++k) {
        s.wobble_freq[k] = 2;
        s.wobble_phase[k] = 0.0;
    }
    int area = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (s.contains(x, y)) ++area;
    double expect = 3.14159265358979323846 * 12.0 * 12.0;
    CHECK(std::abs(area - expect) / expect < 0.05);
}

TEST_CASE("healthy counterfactual contract") {
    SyntheticSpec spec;
    spec.image_size = 48;
    spec.hair_rate = 0.0;
    spec.bubble_rate = 0.0;
    spec.seed = 21;
    Sample s = synthesize(spec, 1)[0];
    REQUIRE(s.mask.count_ones() > 0);
    Sample healthy = healthy_counterfactual(s);
    CHECK(healthy.label == ClassLabel::c0_healthy);
    CHECK(healthy.mask.count_ones() == 0);

    // Mean color inside the former lesion ends within 10% of the
    // surrounding skin mean, channelwise.
    for (int c = 0; c < 3; ++c) {
        double inside = 0.0, outside = 0.0;
        int ni = 0, no = 0;
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                if (s.mask.at(y, x)) {
                    inside += healthy.image.at(y, x, c);
                    ++ni;
                } else {
                    outside += healthy.image.at(y, x, c);
                    ++no;
                }
            }
        inside /= ni;
        outside /= no;
        REQUIRE(std::abs(inside - outside) / outside < 0.10);
    }
}

TEST_CASE("counterfactual of a healthy sample is the identity") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.lesion_count_min = 0;
    spec.lesion_count_max = 0;
    spec.seed = 3;
    Sample s = synthesize(spec, 1)[0];
    Sample out = healthy_counterfactual(s);
    CHECK(out.image.data == s.image.data);
    CHECK(out.label == ClassLabel::c0_healthy);
}

TEST_CASE("counterfactual rejects a full-coverage mask") {
    Sample s;
    s.image = Image(8, 8, 3);
    s.mask = BinaryMask(8, 8);
    std::fill(s.mask.data.begin(), s.mask.data.end(), uint8_t(1));
    s.label = ClassLabel::c1_unhealthy;
    CHECK_THROWS_AS(healthy_counterfactual(s), data_error);
}

TEST_CASE("augment with zero probabilities is the identity") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 8;
    Sample s = synthesize(spec, 1)[0];
    AugmentConfig cfg;
    cfg.blur_prob = cfg.rotate_prob = cfg.sharpen_prob = 0.0;
    RngStream rng(1);
    Sample out = augment(s, rng, cfg);
    CHECK(out.image.data == s.image.data);
    CHECK(out.mask.data == s.mask.data);
}

TEST_CASE("forced 90-degree rotation preserves mask area and alignment") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 14;
    Sample s = synthesize(spec, 1)[0];
    AugmentConfig cfg;
    cfg.blur_prob = cfg.sharpen_prob = 0.0;
    cfg.rotate_prob = 1.0;
    RngStream rng(2);
    Sample out = augment(s, rng, cfg);
    CHECK(out.mask.count_ones() == s.mask.count_ones());
    // Mask still matches the dark-lesion region of the rotated image: pixels
    // under the mask are darker on average than pixels outside it.
    double in = 0.0, outv = 0.0;
    int ni = 0, no = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            double v = out.image.at(y, x, 0);
            if (out.mask.at(y, x)) {
                in += v;
                ++ni;
            } else {
                outv += v;
                ++no;
            }
        }
    REQUIRE(ni > 0);
    CHECK(in / ni < outv / no);
}

TEST_CASE("blur and sharpen never touch the mask") {
    SyntheticSpec spec;
    spec.image_size = 32;
    spec.seed = 15;
    Sample s = synthesize(spec, 1)[0];
    AugmentConfig cfg;
    cfg.rotate_prob = 0.0;
    cfg.blur_prob = 1.0;
    cfg.sharpen_prob = 1.0;
    RngStream rng(3);
    Sample out = augment(s, rng, cfg);
    CHECK(out.mask.data == s.mask.data);
    CHECK(out.image.data != s.image.data);
}

TEST_CASE("dataset save/load round-trip") {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "diffseg_data_test";
    fs::remove_all(root);
    SyntheticSpec spec;
    spec.image_size = 16;
    spec.seed = 30;
    auto samples = synthesize(spec, 3);
    save_dataset(root.string(), "train", samples);
    auto loaded = load_dataset(root.string(), "train");
    REQUIRE(loaded.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        REQUIRE(loaded[i].id == samples[i].id);
        REQUIRE(loaded[i].label == samples[i].label);
        REQUIRE(loaded[i].mask.data == samples[i].mask.data);
        // Images round-trip through 8-bit quantization.
        for (size_t j = 0; j < samples[i].image.data.size(); ++j)
            REQUIRE(std::abs(loaded[i].image.data[j] -
                             samples[i].image.data[j]) <= 0.5f / 255.0f + 1e-6f);
    }
    CHECK(load_dataset(root.string(), "val").empty());
    fs::remove_all(root);
}
