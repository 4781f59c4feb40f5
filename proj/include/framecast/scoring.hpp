#pragma once

#include <string>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

// Peak signal-to-noise ratio in dB for images with pixels in [0,1] (peak 1).
// Capped at 100 dB; identical images return exactly 100.
double psnr(const Tensor& observed, const Tensor& predicted);

// Per-video min-max normalization of a PSNR series to [0,1]. A constant
// series maps to 0.5 everywhere (single-element series included).
std::vector<double> regular_score(const std::vector<double>& psnr_series);

// Low regular score flags an anomaly: anomalous (1) iff score < threshold.
std::vector<int> classify(const std::vector<double>& scores, double threshold);

struct RocPoint {
    double threshold;  // predict anomalous iff score < threshold
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // endpoints (0,0) and (1,1) included
    double auc = 0.0;
};

// Threshold sweep over the unique score values (plus +inf) with trapezoidal
// area. Tied scores land on a shared sweep point, which makes the area equal
// the Mann-Whitney statistic P(normal outscores anomalous) + 0.5 P(tie).
// Labels: 1 = anomalous, 0 = normal; both classes must be present.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Scores of one video's generated frames (conditioning-only frames carry no
// prediction and are excluded).
struct ScoreSeries {
    std::string video_id;
    std::vector<int> frame_indices;
    std::vector<double> psnr_db;
    std::vector<double> regular;
    std::vector<int> labels;
    std::vector<int> predicted;
};

void write_score_csv(const std::string& path, const ScoreSeries& s);
void write_roc_csv(const std::string& path, const RocCurve& roc);

}  // namespace framecast
