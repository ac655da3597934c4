#pragma once

#include <cmath>
#include <optional>

#include "diffseg/common.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Pixelwise mean over the ensemble.
inline Map2 coherence(const MaskEnsemble& Y) {
    require(!Y.masks.empty(), "coherence: empty ensemble");
    const BinaryMask& first = Y.masks.front();
    Map2 out(first.height, first.width);
    for (const auto& m : Y.masks) {
        require(m.same_shape(first), "coherence: mask shapes differ");
        for (size_t i = 0; i < m.data.size(); ++i)
            out.data[i] += static_cast<float>(m.data[i]);
    }
    float inv = 1.0f / static_cast<float>(Y.masks.size());
    for (auto& v : out.data) v *= inv;
    return out;
}

// Pixelwise population variance (divisor N).
inline Map2 ambiguity(const MaskEnsemble& Y) {
    require(!Y.masks.empty(), "ambiguity: empty ensemble");
    Map2 mean = coherence(Y);
    Map2 out(mean.height, mean.width);
    for (const auto& m : Y.masks)
        for (size_t i = 0; i < m.data.size(); ++i) {
            float d = static_cast<float>(m.data[i]) - mean.data[i];
            out.data[i] += d * d;
        }
    float inv = 1.0f / static_cast<float>(Y.masks.size());
    for (auto& v : out.data) v *= inv;
    return out;
}

// Size-normalized Euclidean distance: sqrt(sum (p-q)^2 / (w*h)), in [0,1]
// for binary masks.
inline double normalized_distance(const BinaryMask& p, const BinaryMask& q) {
    require(p.same_shape(q), "normalized_distance: shapes differ");
    uint64_t differing = 0;
    for (size_t i = 0; i < p.data.size(); ++i)
        if (p.data[i] != q.data[i]) ++differing;
    return std::sqrt(static_cast<double>(differing) /
                     static_cast<double>(p.data.size()));
}

// Within-ensemble generalized energy distance:
// (2/N^2) sum_{i<j} d(y_i,y_j) - (1/N^2) sum_i d(y_i,y_i)
//                              - (1/N^2) sum_j d(y_j,y_j).
// The self-distance terms are identically zero under the normalized
// Euclidean distance, so the computation reduces to the ordered-pair mean.
inline double ged(const MaskEnsemble& Y) {
    size_t n = Y.masks.size();
    require(n >= 2, "ged: need at least two masks");
    double cross = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            cross += normalized_distance(Y.masks[i], Y.masks[j]);
    double n2 = static_cast<double>(n) * static_cast<double>(n);
    double self = 0.0;  // d(y,y) == 0 by construction; kept for the record
    return 2.0 / n2 * cross - 2.0 * self / n2;
}

struct UncertaintyReport {
    Map2 coherence;
    Map2 ambiguity;
    std::optional<double> ged;  // unset when N < 2
    int n = 0;
};

inline UncertaintyReport report(const MaskEnsemble& Y) {
    UncertaintyReport r;
    r.n = static_cast<int>(Y.masks.size());
    r.coherence = coherence(Y);
    r.ambiguity = ambiguity(Y);
    if (r.n >= 2) r.ged = ged(Y);
    return r;
}

}  // namespace diffseg
