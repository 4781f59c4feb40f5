#pragma once

#include <functional>
#include <string>
#include <vector>

#include "framecast/data.hpp"
#include "framecast/denoiser.hpp"
#include "framecast/optim.hpp"
#include "framecast/rng.hpp"
#include "framecast/schedule.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double lr = 2e-4;
    int past_frames = 2;    // conditioning frames before the predicted block
    int pred_frames = 5;    // frames predicted per window
    int future_frames = 0;  // optional conditioning frames after the block
    double p_drop = 0.0;    // probability of replacing a sample's condition with the learned null
    double brightness_jitter = 0.0;  // half-range of a per-window shift added to cond and target
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.075;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // epochs between checkpoint writes; 0 = final only
    double ema_decay = 0.0;    // 0 disables the EMA shadow copy
    DType dtype = DType::f32;
    UNetConfig unet;  // frame_channels / k / p / f are filled in from the data and fields above
};

struct TrainWindow {
    Tensor cond;    // [1, (p+f)*C, H, W]
    Tensor target;  // [1, k*C, H, W]
    int start = 0;  // index of the first conditioning frame
};

// Draws a random window position and splits the clip into conditioning frames
// (past, then future when f > 0) and the block to predict.
TrainWindow sample_training_window(const VideoClip& clip, int p, int k, int f, Rng& rng);

// One optimisation step on a batch: sample a timestep and noise, corrupt the
// target, run the denoiser, regress the predicted noise, and apply Adam.
// Returns the batch loss.
double train_step(DenoiserModel& model, const DiffusionSchedule& sched, AdamState& adam,
                  const Tensor& cond_batch, const Tensor& target_batch, double p_drop, Rng& rng);

struct TrainResult {
    int steps = 0;
    int epochs_completed = 0;
    double final_loss = 0.0;
    std::string checkpoint_path;
    std::string train_csv_path;
};

using TrainProgressFn = std::function<void(int epoch, int step, double loss)>;

// Trains a denoiser on the normal clips of `clips` (anomalous clips are
// skipped) and writes checkpoint.fckp plus an append-only train.csv under
// out_dir. When resume_from is nonempty, model/optimiser state is restored
// from that checkpoint and training continues from its recorded epoch.
TrainResult train(const std::vector<VideoClip>& clips, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_from = "",
                  const TrainProgressFn& progress = nullptr);

}  // namespace framecast
