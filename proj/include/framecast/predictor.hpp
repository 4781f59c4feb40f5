#pragma once

#include <functional>
#include <vector>

#include "framecast/data.hpp"
#include "framecast/denoiser.hpp"
#include "framecast/schedule.hpp"

namespace framecast {

// One generation window: the conditioning frame indices (past frames first,
// then future frames when f > 0, matching the channel concatenation order the
// denoiser was trained with) and the frames the window produces.
struct PredictionWindow {
    std::vector<int> cond_indices;
    std::vector<int> predict_indices;
};

// Tiles a clip of F frames with prediction windows: each window is
// conditioned on the p frames before it (plus, when f > 0, the f frames after
// it) and predicts up to k frames; windows advance by their own length. The
// first p frames are never predicted, and with f > 0 neither are the last f.
// The final window may be partial. Throws UsageError when F admits no window.
std::vector<PredictionWindow> plan_windows(int F, int p, int k, int f);

struct PredictedClip {
    Tensor frames;                    // [F, C, H, W], conditioning frames copied from the source
    std::vector<uint8_t> generated;   // 1 where the frame was produced by the sampler
};

struct PredictOptions {
    int past_frames = 2;
    int pred_frames = 5;
    int future_frames = 0;
    uint64_t seed = 0;
    // Condition on previously generated frames instead of observed ones where
    // a window's conditioning indices were themselves predicted.
    bool autoregressive = false;
};

// Built per window: receives the window plan and the ground-truth frames for
// its predicted indices ([1, k*C, H, W], partial windows padded by repeating
// the last real frame). Model-backed factories ignore the ground truth; the
// reconstruction oracle closes over it.
using WindowDenoiserFactory =
    std::function<DenoiseFn(const PredictionWindow& window, const Tensor& true_target)>;

DenoiseFn make_model_denoiser(const DenoiserModel& model);

// Denoiser with oracle knowledge of the clean signal: returns the exact
// residual noise (x_t - sqrt(alpha_bar_t) * x0) / sqrt(1 - alpha_bar_t), so
// the reverse process reconstructs x0 up to floating-point error.
DenoiseFn make_oracle_denoiser(const DiffusionSchedule& sched, const Tensor& x0_true);

PredictedClip predict_clip(const VideoClip& clip, const DiffusionSchedule& sched,
                           const WindowDenoiserFactory& factory, const PredictOptions& opt);

// Convenience wrapper around a trained model.
PredictedClip predict_clip(const VideoClip& clip, const DiffusionSchedule& sched,
                           const DenoiserModel& model, const PredictOptions& opt);

}  // namespace framecast
