#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#define GOLDEN_SUM -0.229772538
#define GOLDEN_SAMPLES \
    {{0, 0, 7, 0.0213095136},     {1, 1, 5, 0.0450329557}, \
     {2, 2, 3, -0.0610930696},    {0, 3, 1, 6.34385942e-05}, \
     {1, 4, 0, 0.0138940997},     {2, 5, 2, -0.0393619463}, \
     {0, 6, 4, -0.00525908824},   {1, 7, 6, 0.0184088908}}

#include "diffseg/gradcheck.hpp"
#include "diffseg/nn.hpp"
#include "diffseg/rng.hpp"

using namespace diffseg;

namespace {

NetDescriptor small_desc() {
    NetDescriptor d;
    d.channels = {4, 8};
    d.emb_width = 16;
    return d;
}

void set_block(DenoiserNet<float>& net, const std::string& name,
               const std::vector<float>& values) {
    for (auto& b : net.blocks())
        if (b.name == name) {
            REQUIRE(b.value->size() == values.size());
            *b.value = values;
            return;
        }
    FAIL("no block named " + name);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor4<float> t(2, 3, 4, 5);
    CHECK(t.size() == 120);
    t.at(1, 2, 3, 4) = 7.0f;
    CHECK(t.data[119] == 7.0f);
    CHECK(t.all_finite());
    t.data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("zero net with output bias produces a constant map") {
    DenoiserNet<float> net(small_desc());  // all parameters zero
    set_block(net, "out.b", {0.25f, 0.25f, 0.25f});
    Tensor4<float> x(1, 3, 8, 8);
    RngStream rng(1);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    Tensor4<float> y = net.forward(x, {0.9}, {1}, false);
    REQUIRE(y.same_shape(x));
    for (float v : y.data) REQUIRE(v == 0.25f);
}

TEST_CASE("forward is deterministic: identical inputs, identical bits") {
    DenoiserNet<float> net(small_desc());
    net.init(42);
    Tensor4<float> x(2, 3, 8, 8);
    RngStream rng(2);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor4<float> a = net.forward(x, {0.9, 0.4}, {0, 1}, false);
    Tensor4<float> b = net.forward(x, {0.9, 0.4}, {0, 1}, false);
    CHECK(a.data == b.data);
}

TEST_CASE("parameter count is a pure function of the descriptor") {
    DenoiserNet<float> a(small_desc()), b(small_desc());
    CHECK(a.param_count() == b.param_count());
    NetDescriptor bigger = small_desc();
    bigger.channels = {8, 16};
    CHECK(DenoiserNet<float>(bigger).param_count() > a.param_count());
}

TEST_CASE("forward validates inputs") {
    DenoiserNet<float> net(small_desc());
    Tensor4<float> wrong_c(1, 2, 8, 8);
    CHECK_THROWS_AS(net.forward(wrong_c, {0.9}, {0}, false), input_error);
    Tensor4<float> odd(1, 3, 7, 8);
    CHECK_THROWS_AS(net.forward(odd, {0.9}, {0}, false), input_error);
    Tensor4<float> x(1, 3, 8, 8);
    CHECK_THROWS_AS(net.forward(x, {1.5}, {0}, false), input_error);
    x.data[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(net.forward(x, {0.9}, {0}, false), input_error);
}

TEST_CASE("fixed-seed 8x8 forward matches the frozen golden output") {
    // Golden values frozen from the first verified run of this architecture
    // (seed 2024, input seed 77); guards against silent numeric drift.
    NetDescriptor d;
    d.in_channels = 3;
    d.channels = {4, 8};
    d.emb_width = 16;
    DenoiserNet<float> net(d);
    net.init(2024);
    for (auto& b : net.blocks())
        if (b.name == "out.w") {
            RngStream wr(4);
            for (auto& v : *b.value)
                v = static_cast<float>(wr.uniform(-0.2, 0.2));
        }
    Tensor4<float> x(1, 3, 8, 8);
    RngStream rng(77);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor4<float> y = net.forward(x, {0.7}, {1}, false);
    REQUIRE(y.same_shape(x));

    double sum = 0.0;
    for (float v : y.data) sum += v;
    // GOLDEN_SUM / GOLDEN_SAMPLES are frozen reference values.
    CHECK(sum == Catch::Approx(GOLDEN_SUM).margin(2e-4));
    struct Probe { int c, yy, xx; double v; };
    const Probe probes[] = GOLDEN_SAMPLES;
    for (const auto& p : probes)
        REQUIRE(y.at(0, p.c, p.yy, p.xx) == Catch::Approx(p.v).margin(2e-6));
}

TEST_CASE("gradient check: every layer type under 1e-4") {
    NetDescriptor d;
    d.channels = {3, 6};
    d.emb_width = 8;
    DenoiserNet<double> net(d);
    net.init(1);
    GradCheckReport r = gradient_check(net, 20);
    REQUIRE(r.max_rel_error.count("conv") == 1);
    REQUIRE(r.max_rel_error.count("linear") == 1);
    REQUIRE(r.max_rel_error.count("embedding") == 1);
    for (const auto& [kind, err] : r.max_rel_error) {
        INFO(kind << " rel error " << err);
        REQUIRE(err < 1e-4);
    }
    CHECK_THROWS_AS(gradient_check(net, 0), input_error);
}

TEST_CASE("linear layer gradients are exact to 1e-7") {
    // A lone fully-connected layer with quadratic loss: analytic gradients
    // should match finite differences at near machine precision.
    nn::Linear<double> lin;
    lin.configure(5, 4);
    RngStream rng(3);
    for (auto& v : lin.w) v = rng.uniform(-1.0, 1.0);
    for (auto& v : lin.b) v = rng.uniform(-1.0, 1.0);
    std::vector<double> x(2 * 5);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> target(2 * 4);
    for (auto& v : target) v = rng.uniform(-1.0, 1.0);

    auto loss_of = [&]() {
        std::vector<double> y = lin.forward(x, 2, false);
        double l = 0.0;
        for (size_t i = 0; i < y.size(); ++i) {
            double r = y[i] - target[i];
            l += 0.5 * r * r;
        }
        return l;
    };
    std::vector<double> y = lin.forward(x, 2, true);
    std::vector<double> dy(y.size());
    for (size_t i = 0; i < y.size(); ++i) dy[i] = y[i] - target[i];
    lin.backward(dy);

    const double h = 1e-6;
    for (size_t j = 0; j < lin.w.size(); ++j) {
        double orig = lin.w[j];
        lin.w[j] = orig + h;
        double lp = loss_of();
        lin.w[j] = orig - h;
        double lm = loss_of();
        lin.w[j] = orig;
        double fd = (lp - lm) / (2.0 * h);
        double scale = std::max({std::abs(fd), std::abs(lin.gw[j]), 1.0});
        REQUIRE(std::abs(fd - lin.gw[j]) / scale < 1e-7);
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    DenoiserNet<float> net(small_desc());
    net.init(5);
    std::vector<float> before;
    for (auto& b : net.blocks())
        before.insert(before.end(), b.value->begin(), b.value->end());
    OptimizerState<float> opt;
    opt.attach(net);
    net.zero_grad();
    adam_step(net, opt);
    std::vector<float> after;
    for (auto& b : net.blocks())
        after.insert(after.end(), b.value->begin(), b.value->end());
    CHECK(before == after);
    CHECK(opt.step == 1);
}

TEST_CASE("adam first step with constant gradient is ~ -lr * sign(g)") {
    DenoiserNet<float> net(small_desc());
    OptimizerState<float> opt;
    opt.lr = 1e-3;
    opt.attach(net);
    net.zero_grad();
    // Put a constant gradient on the output bias only.
    for (auto& b : net.blocks())
        if (b.name == "out.b")
            std::fill(b.grad->begin(), b.grad->end(), 0.7f);
    adam_step(net, opt);
    for (auto& b : net.blocks()) {
        if (b.name == "out.b") {
            // m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps) ~ lr.
            for (float v : *b.value)
                REQUIRE(v == Catch::Approx(-1e-3).margin(1e-6));
        } else {
            for (float v : *b.value) REQUIRE(v == 0.0f);
        }
    }
}

TEST_CASE("adam rejects non-finite gradients") {
    DenoiserNet<float> net(small_desc());
    OptimizerState<float> opt;
    opt.attach(net);
    net.zero_grad();
    (*net.blocks()[0].grad)[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(net, opt), train_error);
}

TEST_CASE("adam is deterministic from identical states") {
    auto run = []() {
        DenoiserNet<float> net(small_desc());
        net.init(6);
        OptimizerState<float> opt;
        opt.attach(net);
        RngStream rng(9);
        for (int step = 0; step < 3; ++step) {
            net.zero_grad();
            for (auto& b : net.blocks())
                for (auto& g : *b.grad)
                    g = static_cast<float>(rng.uniform(-0.1, 0.1));
            adam_step(net, opt);
        }
        std::vector<float> out;
        for (auto& b : net.blocks())
            out.insert(out.end(), b.value->begin(), b.value->end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("pooling, upsampling, and concat shape/value contracts") {
    Tensor4<float> x(1, 2, 4, 4);
    x.fill(3.0f);
    Tensor4<float> p = nn::avgpool2_forward(x);
    CHECK(p.h == 2);
    for (float v : p.data) REQUIRE(v == 3.0f);  // average of a constant

    Tensor4<float> u = nn::upnearest2_forward(p);
    CHECK(u.h == 4);
    for (float v : u.data) REQUIRE(v == 3.0f);

    Tensor4<float> a(1, 2, 2, 2), b(1, 3, 2, 2);
    a.fill(1.0f);
    b.fill(2.0f);
    Tensor4<float> cat = nn::concat_channels(a, b);
    REQUIRE(cat.c == 5);
    CHECK(cat.at(0, 0, 0, 0) == 1.0f);
    CHECK(cat.at(0, 4, 1, 1) == 2.0f);
}

TEST_CASE("net stream serialization round-trips bit exactly") {
    DenoiserNet<float> net(small_desc());
    net.init(11);
    std::stringstream ss;
    net.save(ss);
    DenoiserNet<float> loaded = DenoiserNet<float>::load(ss);
    REQUIRE(loaded.descriptor() == net.descriptor());
    auto orig_blocks = net.blocks();
    auto new_blocks = loaded.blocks();
    REQUIRE(orig_blocks.size() == new_blocks.size());
    for (size_t i = 0; i < orig_blocks.size(); ++i)
        REQUIRE(*orig_blocks[i].value == *new_blocks[i].value);
}
