#pragma once

#include <string>
#include <vector>

#include "framecast/denoiser.hpp"
#include "framecast/optim.hpp"
#include "framecast/schedule.hpp"

namespace framecast {

// Versioned binary checkpoint: magic + JSON header (model/schedule config,
// step counters) followed by named tensor records (name, dtype, shape, raw
// little-endian data). Loading reconstructs the model from the header and
// validates that every expected parameter is present with the exact shape.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    UNetConfig unet;
    DType dtype = DType::f32;
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.075;
    int64_t global_step = 0;
    int64_t epoch = 0;
    bool has_adam = false;
    bool has_ema = false;
    double ema_decay = 0.0;
};

void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const DiffusionSchedule& sched, int64_t global_step, int64_t epoch,
                     const AdamState* adam = nullptr, const std::vector<Tensor>* ema = nullptr,
                     double ema_decay = 0.0);

struct LoadedCheckpoint {
    Checkpoint meta;
    DenoiserModel model;
    DiffusionSchedule schedule;
    AdamState adam;              // valid iff meta.has_adam
    std::vector<Tensor> ema;     // non-empty iff meta.has_ema

    LoadedCheckpoint(Checkpoint m, DenoiserModel mod, DiffusionSchedule s)
        : meta(std::move(m)), model(std::move(mod)), schedule(std::move(s)) {}
};

// use_ema swaps the EMA weights into the model parameters (for evaluation).
LoadedCheckpoint load_checkpoint(const std::string& path, bool use_ema = false);

}  // namespace framecast
