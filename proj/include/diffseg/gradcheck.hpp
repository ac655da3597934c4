#pragma once

#include <map>
#include <string>
#include <vector>

#include "diffseg/nn.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

struct GradCheckReport {
    // layer kind -> worst relative error over probed parameters
    std::map<std::string, double> max_rel_error;
    int probes = 0;
};

namespace detail {

template <typename Net>
double gradcheck_loss(Net& net, const Tensor4<double>& x,
                      const std::vector<double>& ab,
                      const std::vector<int>& cls,
                      const Tensor4<double>& target, bool cache) {
    Tensor4<double> y = net.forward(x, ab, cls, cache);
    double loss = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) {
        double r = y.data[i] - target.data[i];
        loss += 0.5 * r * r;
    }
    if (cache) {
        Tensor4<double> dy(y.n, y.c, y.h, y.w);
        for (size_t i = 0; i < y.data.size(); ++i)
            dy.data[i] = y.data[i] - target.data[i];
        net.backward(dy);
    }
    return loss;
}

}  // namespace detail

// Compares analytic gradients against central finite differences
// (h = 1e-5, 64-bit) on a random probe set per layer type. Report-only.
inline GradCheckReport gradient_check(DenoiserNet<double>& net,
                                      int probe_count, uint64_t seed = 7,
                                      double h = 1e-5) {
    require(probe_count >= 1, "gradient_check: probe_count must be >= 1");
    RngStream rng(seed);

    // The output conv is zero-initialized by default, which would zero all
    // upstream gradients; randomize every block so each layer carries signal.
    for (auto& b : net.blocks())
        for (auto& v : *b.value) v = rng.uniform(-0.3, 0.3);

    int div = 1 << (net.descriptor().levels() - 1);
    int hw = 2 * div;
    Tensor4<double> x(2, net.descriptor().in_channels, hw, hw);
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    Tensor4<double> target(x.n, net.descriptor().in_channels, hw, hw);
    for (auto& v : target.data) v = rng.uniform(-1.0, 1.0);
    std::vector<double> ab = {0.9, 0.4};
    std::vector<int> cls = {0, 1};

    net.zero_grad();
    detail::gradcheck_loss(net, x, ab, cls, target, /*cache=*/true);

    GradCheckReport report;
    report.probes = probe_count;
    auto blocks = net.blocks();
    // Group block indices by kind, then probe uniformly within each kind.
    std::map<std::string, std::vector<size_t>> by_kind;
    for (size_t i = 0; i < blocks.size(); ++i)
        by_kind[blocks[i].kind].push_back(i);

    for (auto& [kind, idxs] : by_kind) {
        double worst = 0.0;
        for (int p = 0; p < probe_count; ++p) {
            size_t bi = idxs[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(idxs.size()) - 1))];
            auto& vals = *blocks[bi].value;
            if (vals.empty()) continue;
            size_t j = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(vals.size()) - 1));
            double analytic = (*blocks[bi].grad)[j];
            double orig = vals[j];
            vals[j] = orig + h;
            double lp = detail::gradcheck_loss(net, x, ab, cls, target, false);
            vals[j] = orig - h;
            double lm = detail::gradcheck_loss(net, x, ab, cls, target, false);
            vals[j] = orig;
            double fd = (lp - lm) / (2.0 * h);
            double scale = std::max({std::abs(analytic), std::abs(fd), 1e-6});
            worst = std::max(worst, std::abs(analytic - fd) / scale);
        }
        report.max_rel_error[kind] = worst;
    }
    return report;
}

}  // namespace diffseg
