#pragma once

#include "changen/scene/masks.hpp"

namespace changen::eval {

struct BinaryChangeMetrics {
    double f1 = 0.0, precision = 0.0, recall = 0.0, iou = 0.0;
    long tp = 0, fp = 0, fn = 0;
};

// Micro-averaging: pixel counts pool across samples before any ratio is
// taken, so sample order cannot matter.
class MetricAccumulator {
public:
    void add(const scene::ChangeMask& pred, const scene::ChangeMask& truth);
    void add_counts(long tp, long fp, long fn);
    BinaryChangeMetrics finalize() const;

private:
    long tp_ = 0, fp_ = 0, fn_ = 0;
};

BinaryChangeMetrics compute_metrics(const scene::ChangeMask& pred,
                                    const scene::ChangeMask& truth);

// Analytic baselines from foreground prevalence p = positives / total.
double all_ones_f1(double prevalence);
double prevalence_matched_f1(double prevalence);

}  // namespace changen::eval
