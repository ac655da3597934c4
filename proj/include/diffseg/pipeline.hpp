#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include "diffseg/config.hpp"
#include "diffseg/data.hpp"
#include "diffseg/diffusion.hpp"
#include "diffseg/metrics.hpp"
#include "diffseg/refine.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/uncertainty.hpp"

namespace diffseg {

// Worker cap from the environment; the current pipeline is single-threaded,
// so this only clamps what callers may spawn.
inline int max_threads() {
    if (const char* env = std::getenv("DIFFSEG_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

// Training set per the conditional protocol: diseased samples keep label c1;
// every diseased sample also contributes its healthy counterfactual as c0.
inline std::vector<LabeledImage> build_training_set(
    const std::vector<Sample>& samples) {
    std::vector<LabeledImage> out;
    for (const auto& s : samples) {
        LabeledImage li;
        li.image = image_to_tensor(s.image);
        li.label = s.label;
        out.push_back(std::move(li));
        if (s.label == ClassLabel::c1_unhealthy) {
            Sample healthy = healthy_counterfactual(s);
            LabeledImage hc;
            hc.image = image_to_tensor(healthy.image);
            hc.label = ClassLabel::c0_healthy;
            out.push_back(std::move(hc));
        }
    }
    return out;
}

// Augmentation adapter for the trainer: tensors in, tensors out, mask
// discarded (the trainer never sees ground truth).
inline auto make_augment_fn(const AugmentConfig& cfg) {
    return [cfg](const Tensor4<float>& x, RngStream& rng) {
        Sample s;
        s.image = tensor_to_image(x);
        s.mask = BinaryMask(x.h, x.w);
        Sample a = augment(s, rng, cfg);
        return image_to_tensor(a.image);
    };
}

struct ImageInference {
    EnsembleResult ensemble;
    UncertaintyReport uncertainty;
    RefineResult refined;
};

// Full per-image inference chain: ensemble -> uncertainty -> CRF refinement.
// RNG derives from (seed, image_index) so corpus evaluation order is free.
inline ImageInference infer_image(ConditionalModel& model,
                                  const NoiseSchedule& schedule,
                                  const Image& image,
                                  const PipelineConfig& cfg,
                                  uint64_t image_index) {
    RngStream rng = RngStream(cfg.seed).substream(image_index);
    Tensor4<float> x = image_to_tensor(image);
    ImageInference out;
    out.ensemble = generate_ensemble(model, x, cfg.timesteps, cfg.threshold,
                                     schedule, rng, cfg.diff_smooth_sigma);
    out.uncertainty = report(out.ensemble.ensemble);
    RefineConfig rc = cfg.refine;
    rc.seed = RngStream(cfg.seed).substream(image_index).next_u64() ^
              0x5bf0f3c3ULL;
    out.refined = refine_ensemble(out.ensemble.ensemble, image,
                                  out.ensemble.diffmaps, cfg.crf, rc);
    return out;
}

}  // namespace diffseg
