#include "changen/eval/metrics.hpp"

namespace changen::eval {

void MetricAccumulator::add(const scene::ChangeMask& pred, const scene::ChangeMask& truth) {
    if (!pred.data.same_shape(truth.data))
        throw DimensionError("metrics: prediction and truth shapes differ");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0, t = truth.data[i] != 0;
        if (p && t) ++tp;
        else if (p) ++fp;
        else if (t) ++fn;
    }
    add_counts(tp, fp, fn);
}

void MetricAccumulator::add_counts(long tp, long fp, long fn) {
    tp_ += tp;
    fp_ += fp;
    fn_ += fn;
}

BinaryChangeMetrics MetricAccumulator::finalize() const {
    BinaryChangeMetrics m;
    m.tp = tp_;
    m.fp = fp_;
    m.fn = fn_;
    m.precision = tp_ + fp_ > 0 ? static_cast<double>(tp_) / (tp_ + fp_) : 0.0;
    m.recall = tp_ + fn_ > 0 ? static_cast<double>(tp_) / (tp_ + fn_) : 0.0;
    m.f1 = m.precision + m.recall > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    m.iou = tp_ + fp_ + fn_ > 0 ? static_cast<double>(tp_) / (tp_ + fp_ + fn_) : 0.0;
    return m;
}

BinaryChangeMetrics compute_metrics(const scene::ChangeMask& pred,
                                    const scene::ChangeMask& truth) {
    MetricAccumulator acc;
    acc.add(pred, truth);
    return acc.finalize();
}

double all_ones_f1(double prevalence) {
    // precision = p, recall = 1
    return prevalence > 0.0 ? 2.0 * prevalence / (1.0 + prevalence) : 0.0;
}

double prevalence_matched_f1(double prevalence) {
    // Bernoulli(q = p) predictor: expected precision = recall = p.
    return prevalence;
}

}  // namespace changen::eval
