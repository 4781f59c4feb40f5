#pragma once

#include <string>
#include <vector>

#include "framecast/data.hpp"
#include "framecast/denoiser.hpp"
#include "framecast/predictor.hpp"
#include "framecast/schedule.hpp"
#include "framecast/scoring.hpp"

namespace framecast {

struct EvalConfig {
    int past_frames = 2;
    int pred_frames = 5;
    int future_frames = 0;
    double threshold = 0.5;
    uint64_t seed = 0;
    int workers = 1;  // per-video parallelism; output is identical for any count
    bool autoregressive = false;
    bool oracle = false;  // score the reconstruction oracle instead of a model
};

struct EvalResult {
    std::vector<ScoreSeries> series;  // one per clip, in clip order
    RocCurve roc;                     // pooled over every scored frame
    double mean_normal_video_score = 0.0;     // mean over normal clips of their mean regular score
    double mean_anomalous_video_score = 0.0;  // same over clips containing anomalous frames
    int n_normal_videos = 0;
    int n_anomalous_videos = 0;
};

// Predicts every clip (seeded per clip, so clip order and worker count do not
// change results), scores generated frames against observations, and pools a
// ROC over all frames. model may be null only in oracle mode.
EvalResult evaluate(const std::vector<VideoClip>& clips, const DiffusionSchedule& sched,
                    const DenoiserModel* model, const EvalConfig& cfg);

// Writes scores_<clip>.csv per clip, roc.csv, and summary.txt (AUC= line
// first) into out_dir. Returns the summary line.
std::string write_eval_outputs(const std::string& out_dir, const EvalResult& result);

}  // namespace framecast
