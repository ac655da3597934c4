#pragma once

#include <numeric>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/densecrf.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

struct RefineConfig {
    int iterations = 3;      // K
    int subset_size = 4;     // m, sampled uniformly without replacement
    double binarize_threshold = 0.5;
    double unary_clamp = 1e-3;
    uint64_t seed = 0;
    bool use_fast_crf = true;

    void validate(size_t ensemble_size) const {
        require_config(iterations >= 1, "refine: K must be >= 1");
        require_config(subset_size >= 1 &&
                           static_cast<size_t>(subset_size) <= ensemble_size,
                       "refine: subset size m must satisfy 1 <= m <= N");
    }
};

struct RefineResult {
    BinaryMask final_mask;
    std::vector<BinaryMask> iteration_masks;          // binarized y_bar_k
    std::vector<std::vector<size_t>> chosen_subsets;  // member indices per k
};

// Pixel -> 1 iff soft >= threshold.
inline BinaryMask majority_binarize(const Map2& soft, double threshold) {
    BinaryMask m(soft.height, soft.width);
    m.threshold = static_cast<float>(threshold);
    for (size_t i = 0; i < soft.data.size(); ++i)
        m.data[i] = soft.data[i] >= static_cast<float>(threshold) ? 1 : 0;
    return m;
}

// K rounds of: sample m ensemble members without replacement, refine each
// member's unary with the CRF, average the refined lesion marginals, and
// binarize. The K per-iteration masks are averaged and binarized again at 0.5
// for the final output.
inline RefineResult refine_ensemble(const MaskEnsemble& Y, const Image& image,
                                    const std::vector<DiffMap>& diffmaps,
                                    const CrfParams& crf,
                                    const RefineConfig& cfg) {
    require(Y.masks.size() == diffmaps.size(),
            "refine: ensemble and diff map counts differ");
    require(!Y.masks.empty(), "refine: empty ensemble");
    cfg.validate(Y.masks.size());

    size_t n = Y.masks.size();
    int h = Y.masks.front().height, w = Y.masks.front().width;
    RngStream root(cfg.seed);
    RefineResult result;
    Map2 sum_k(h, w);

    for (int k = 0; k < cfg.iterations; ++k) {
        RngStream rng = root.substream(static_cast<uint64_t>(k));
        // partial Fisher-Yates draw of m indices without replacement
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t(0));
        std::vector<size_t> subset;
        for (int pick = 0; pick < cfg.subset_size; ++pick) {
            size_t j = static_cast<size_t>(
                rng.uniform_int(pick, static_cast<int64_t>(n) - 1));
            std::swap(idx[pick], idx[j]);
            subset.push_back(idx[pick]);
        }
        Map2 avg(h, w);
        for (size_t member : subset) {
            UnaryField u = unary_from_diffmap(diffmaps[member], cfg.unary_clamp);
            MarginalField q = cfg.use_fast_crf ? mean_field_fast(u, image, crf)
                                               : mean_field_naive(u, image, crf);
            Map2 soft = lesion_marginal(q);
            for (size_t i = 0; i < avg.data.size(); ++i)
                avg.data[i] += soft.data[i];
        }
        for (auto& v : avg.data) v /= static_cast<float>(cfg.subset_size);
        BinaryMask yk = majority_binarize(avg, cfg.binarize_threshold);
        for (size_t i = 0; i < sum_k.data.size(); ++i)
            sum_k.data[i] += static_cast<float>(yk.data[i]);
        result.iteration_masks.push_back(std::move(yk));
        result.chosen_subsets.push_back(std::move(subset));
    }
    for (auto& v : sum_k.data) v /= static_cast<float>(cfg.iterations);
    result.final_mask = majority_binarize(sum_k, 0.5);
    return result;
}

}  // namespace diffseg
