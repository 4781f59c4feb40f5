#include "framecast/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "framecast/error.hpp"

namespace framecast {

double psnr(const Tensor& observed, const Tensor& predicted) {
    if (observed.shape() != predicted.shape())
        throw UsageError("psnr: shape mismatch " + shape_str(observed.shape()) + " vs " +
                         shape_str(predicted.shape()));
    if (observed.numel() == 0) throw UsageError("psnr: empty input");
    double acc = 0.0;
    for (int64_t i = 0; i < observed.numel(); ++i) {
        double d = observed.at(i) - predicted.at(i);
        acc += d * d;
    }
    double mse = acc / static_cast<double>(observed.numel());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> regular_score(const std::vector<double>& psnr_series) {
    if (psnr_series.empty()) throw UsageError("regular_score: empty series");
    double lo = *std::min_element(psnr_series.begin(), psnr_series.end());
    double hi = *std::max_element(psnr_series.begin(), psnr_series.end());
    std::vector<double> out(psnr_series.size());
    if (hi == lo) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < psnr_series.size(); ++i) out[i] = (psnr_series[i] - lo) * inv;
    return out;
}

std::vector<int> classify(const std::vector<double>& scores, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw UsageError("classify: threshold must be in [0,1]");
    std::vector<int> out(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] < threshold ? 1 : 0;
    return out;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw UsageError("roc_auc: scores/labels length mismatch");
    int64_t pos = 0, neg = 0;  // pos = anomalous
    for (int l : labels) {
        if (l != 0 && l != 1) throw UsageError("roc_auc: labels must be 0 or 1");
        (l == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0)
        throw EvalError("roc_auc: need both classes, got " + std::to_string(pos) + " anomalous and " +
                        std::to_string(neg) + " normal frames");

    // Sort entries by score; sweep thresholds upward through each unique
    // value, counting how many of each class fall strictly below.
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

    RocCurve roc;
    int64_t tp = 0, fp = 0;
    int64_t area2 = 0;  // twice the area, in integer count units
    int64_t prev_tp = 0, prev_fp = 0;
    size_t i = 0;
    auto emit = [&](double threshold) {
        area2 += (fp - prev_fp) * (tp + prev_tp);
        roc.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(neg),
                              static_cast<double>(tp) / static_cast<double>(pos)});
        prev_tp = tp;
        prev_fp = fp;
    };
    while (i < order.size()) {
        double s = scores[order[i]];
        emit(s);  // counts strictly below s
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] == 1 ? tp : fp) += 1;
            ++i;
        }
    }
    emit(std::numeric_limits<double>::infinity());
    roc.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

void write_score_csv(const std::string& path, const ScoreSeries& s) {
    size_t n = s.frame_indices.size();
    if (s.psnr_db.size() != n || s.regular.size() != n || s.labels.size() != n ||
        s.predicted.size() != n)
        throw UsageError("write_score_csv: column lengths disagree for " + s.video_id);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "frame_index,psnr_db,regular_score,label,predicted_label\n";
    char row[160];
    for (size_t i = 0; i < n; ++i) {
        std::snprintf(row, sizeof(row), "%d,%.6f,%.6f,%d,%d\n", s.frame_indices[i], s.psnr_db[i],
                      s.regular[i], s.labels[i], s.predicted[i]);
        out << row;
    }
}

void write_roc_csv(const std::string& path, const RocCurve& roc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "threshold,fpr,tpr\n";
    char row[160];
    for (const RocPoint& p : roc.points) {
        if (std::isinf(p.threshold))
            std::snprintf(row, sizeof(row), "inf,%.6f,%.6f\n", p.fpr, p.tpr);
        else
            std::snprintf(row, sizeof(row), "%.9g,%.6f,%.6f\n", p.threshold, p.fpr, p.tpr);
        out << row;
    }
    std::snprintf(row, sizeof(row), "AUC,%.12f\n", roc.auc);
    out << row;
}

}  // namespace framecast
