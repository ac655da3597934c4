#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/diffusion.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/schedule.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

inline void warn(const std::string& msg) {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

// Per-pixel channel-mean |eps_c0 - eps_c1| at one timestep.
struct DiffMap {
    Map2 values;  // >= 0, finite
    int timestep = 0;
};

struct MaskEnsemble {
    std::vector<BinaryMask> masks;  // same shape, strictly increasing timesteps
    std::vector<int> timesteps;
    std::string image_id;

    size_t size() const { return masks.size(); }
};

enum class ThresholdKind : int { fixed = 0, otsu = 1 };

struct ThresholdPolicy {
    ThresholdKind kind = ThresholdKind::fixed;
    double delta = 0.5;
    bool normalize = true;
};

// One noise draw, one x_t, both class conditions evaluated on that same x_t.
inline DiffMap noise_difference(ConditionalModel& model,
                                const Tensor4<float>& image, int t,
                                const NoiseSchedule& schedule, RngStream& rng) {
    require(image.n == 1, "noise_difference: expects a single image");
    require(t >= 1 && t <= schedule.T, "noise_difference: t out of range");
    if (model.nets.empty()) throw model_error("noise_difference: empty model");
    Tensor4<float> eps = sample_gaussian_like(image, rng);
    Tensor4<float> x_t = forward_noise(image, t, schedule, eps);
    Tensor4<float> e0 =
        predict_noise(model, x_t, ClassLabel::c0_healthy, t, schedule);
    Tensor4<float> e1 =
        predict_noise(model, x_t, ClassLabel::c1_unhealthy, t, schedule);
    DiffMap d;
    d.timestep = t;
    d.values = Map2(image.h, image.w);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            float acc = 0.0f;
            for (int c = 0; c < image.c; ++c)
                acc += std::abs(e0.at(0, c, y, x) - e1.at(0, c, y, x));
            d.values.at(y, x) = acc / static_cast<float>(image.c);
        }
    return d;
}

// Optional pre-binarization smoothing (off by default in the pipeline).
inline Map2 gaussian_smooth(const Map2& m, double sigma) {
    if (sigma <= 0.0) return m;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    float sum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] =
            static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;
    Map2 tmp(m.height, m.width), out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                int sx = std::clamp(x + i, 0, m.width - 1);
                acc += kernel[i + radius] * m.at(y, sx);
            }
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                int sy = std::clamp(y + i, 0, m.height - 1);
                acc += kernel[i + radius] * tmp.at(sy, x);
            }
            out.at(y, x) = acc;
        }
    return out;
}

inline Map2 minmax_normalize(const Map2& m, bool* constant = nullptr) {
    float lo = m.data.empty() ? 0.0f : m.data[0];
    float hi = lo;
    for (float v : m.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Map2 out(m.height, m.width);
    if (hi - lo <= 0.0f) {
        if (constant) *constant = true;
        return out;  // all zeros
    }
    if (constant) *constant = false;
    float inv = 1.0f / (hi - lo);
    for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = (m.data[i] - lo) * inv;
    return out;
}

// Otsu's threshold over 256 bins of a [0,1] map.
inline double otsu_threshold(const Map2& normalized) {
    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    for (float v : normalized.data) {
        int b = std::clamp(static_cast<int>(v * (kBins - 1) + 0.5f), 0,
                           kBins - 1);
        hist[b] += 1.0;
    }
    double total = static_cast<double>(normalized.data.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
    // The objective is flat across empty histogram gaps; take the plateau
    // midpoint so the threshold lands between clusters, not at a cluster edge.
    int best_lo = 0, best_hi = 0;
    for (int b = 0; b < kBins; ++b) {
        w0 += hist[b];
        if (w0 <= 0.0) continue;
        double w1 = total - w0;
        if (w1 <= 0.0) break;
        sum0 += b * hist[b];
        double m0 = sum0 / w0;
        double m1 = (sum_all - sum0) / w1;
        double var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best_lo = best_hi = b;
        } else if (var == best_var) {
            best_hi = b;
        }
    }
    return 0.5 * (best_lo + best_hi) / (kBins - 1);
}

// Pixel -> 1 iff value >= delta, optionally after min-max normalization.
inline BinaryMask binarize(const DiffMap& d, double delta,
                           bool normalize = true) {
    if (normalize)
        require(delta >= 0.0 && delta <= 1.0,
                "binarize: delta must be in [0,1] with normalization on");
    Map2 work = d.values;
    if (normalize) {
        bool constant = false;
        work = minmax_normalize(d.values, &constant);
        if (constant)
            warn("binarize: constant diff map, emitting all-zero mask");
    }
    BinaryMask m(work.height, work.width);
    m.threshold = static_cast<float>(delta);
    for (size_t i = 0; i < work.data.size(); ++i)
        m.data[i] = work.data[i] >= static_cast<float>(delta) ? 1 : 0;
    return m;
}

inline BinaryMask binarize(const DiffMap& d, const ThresholdPolicy& policy) {
    if (policy.kind == ThresholdKind::otsu) {
        bool constant = false;
        Map2 norm = minmax_normalize(d.values, &constant);
        if (constant) {
            warn("binarize: constant diff map, emitting all-zero mask");
            BinaryMask m(norm.height, norm.width);
            m.threshold = 1.0f;
            return m;
        }
        double t = otsu_threshold(norm);
        // strictly-above rule keeps the lower Otsu class at 0
        BinaryMask m(norm.height, norm.width);
        m.threshold = static_cast<float>(t);
        for (size_t i = 0; i < norm.data.size(); ++i)
            m.data[i] = norm.data[i] > static_cast<float>(t) ? 1 : 0;
        return m;
    }
    return binarize(d, policy.delta, policy.normalize);
}

struct EnsembleResult {
    MaskEnsemble ensemble;
    std::vector<DiffMap> diffmaps;
};

// One mask per timestep, each from an independent noise draw. Substreams are
// keyed by timestep so parallel and serial evaluation orders agree.
inline EnsembleResult generate_ensemble(ConditionalModel& model,
                                        const Tensor4<float>& image,
                                        const std::vector<int>& timesteps,
                                        const ThresholdPolicy& policy,
                                        const NoiseSchedule& schedule,
                                        const RngStream& rng,
                                        double smooth_sigma = 0.0) {
    require(!timesteps.empty(), "generate_ensemble: empty timestep list");
    for (size_t i = 1; i < timesteps.size(); ++i) {
        require(timesteps[i] != timesteps[i - 1],
                "generate_ensemble: duplicate timestep");
        require(timesteps[i] > timesteps[i - 1],
                "generate_ensemble: timesteps must be strictly increasing");
    }
    for (int t : timesteps)
        require(t >= 1 && t <= schedule.T,
                "generate_ensemble: timestep outside schedule range");

    EnsembleResult out;
    out.ensemble.timesteps = timesteps;
    for (int t : timesteps) {
        RngStream sub = rng.substream(static_cast<uint64_t>(t));
        DiffMap d = noise_difference(model, image, t, schedule, sub);
        if (smooth_sigma > 0.0) d.values = gaussian_smooth(d.values, smooth_sigma);
        out.ensemble.masks.push_back(binarize(d, policy));
        out.diffmaps.push_back(std::move(d));
    }
    return out;
}

inline std::vector<int> default_timesteps() {
    std::vector<int> ts;
    for (int t = 60; t <= 150; t += 10) ts.push_back(t);
    return ts;
}

}  // namespace diffseg
