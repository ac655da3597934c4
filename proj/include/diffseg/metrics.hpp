#pragma once

#include <cstdint>

#include "diffseg/common.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Pixel counts over one prediction/truth pair; lesion is the positive class.
struct Confusion {
    uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    uint64_t total() const { return tp + fp + tn + fn; }
};

struct MetricReport {
    double dice = 0.0;
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    // Set when a degenerate denominator forced a convention (see
    // metric_report): empty truth with non-empty prediction.
    bool degenerate = false;
};

inline Confusion confusion(const BinaryMask& pred, const BinaryMask& truth) {
    require(pred.same_shape(truth), "confusion: mask shapes differ");
    Confusion c;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0;
        bool t = truth.data[i] != 0;
        if (p && t)
            ++c.tp;
        else if (p && !t)
            ++c.fp;
        else if (!p && t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

// Dice, Jaccard, Precision, Recall from counts.
//
// Degenerate denominators: both masks empty -> every metric is 1 (perfect
// agreement). Truth empty but prediction non-empty -> recall reported as 1
// (no positives to miss), precision 0, and the report is flagged.
inline MetricReport metric_report(const Confusion& c) {
    MetricReport r;
    uint64_t pred_pos = c.tp + c.fp;
    uint64_t truth_pos = c.tp + c.fn;
    if (pred_pos == 0 && truth_pos == 0) {
        r.dice = r.jaccard = r.precision = r.recall = 1.0;
        return r;
    }
    if (truth_pos == 0) {
        r.degenerate = true;
        r.recall = 1.0;
    } else {
        r.recall = static_cast<double>(c.tp) / static_cast<double>(truth_pos);
    }
    r.precision = pred_pos == 0
                      ? 0.0
                      : static_cast<double>(c.tp) / static_cast<double>(pred_pos);
    uint64_t uni = c.tp + c.fp + c.fn;
    r.jaccard = static_cast<double>(c.tp) / static_cast<double>(uni);
    r.dice = 2.0 * static_cast<double>(c.tp) /
             static_cast<double>(pred_pos + truth_pos);
    return r;
}

inline MetricReport evaluate(const BinaryMask& pred, const BinaryMask& truth) {
    return metric_report(confusion(pred, truth));
}

}  // namespace diffseg
