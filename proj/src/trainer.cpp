#include "framecast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "framecast/checkpoint.hpp"
#include "framecast/ops.hpp"

namespace framecast {

namespace {

// Copies frames [from, from+count) of a clip into dst starting at channel
// offset dst_ch (frames become channels).
void copy_frames(const VideoClip& clip, int from, int count, Tensor& dst, int64_t dst_ch) {
    int64_t plane = static_cast<int64_t>(clip.H()) * clip.W();
    int64_t per_frame = clip.C() * plane;
    const float* src = clip.frames.ptr<float>();
    float* out = dst.ptr<float>();
    std::copy(src + from * per_frame, src + (from + count) * per_frame,
              out + dst_ch * plane);
}

}  // namespace

TrainWindow sample_training_window(const VideoClip& clip, int p, int k, int f, Rng& rng) {
    if (p < 1 || k < 1 || f < 0) throw ConfigError("window: need p >= 1, k >= 1, f >= 0");
    int span = p + k + f;
    if (clip.F() < span)
        throw DataError("clip " + clip.id + " has " + std::to_string(clip.F()) +
                        " frames, a training window needs " + std::to_string(span));
    int s = static_cast<int>(rng.uniform_int(0, clip.F() - span));
    int C = clip.C(), H = clip.H(), W = clip.W();

    TrainWindow w;
    w.start = s;
    w.cond = Tensor::zeros({1, static_cast<int64_t>(p + f) * C, H, W}, clip.frames.dtype());
    w.target = Tensor::zeros({1, static_cast<int64_t>(k) * C, H, W}, clip.frames.dtype());
    copy_frames(clip, s, p, w.cond, 0);
    if (f > 0) copy_frames(clip, s + p + k, f, w.cond, static_cast<int64_t>(p) * C);
    copy_frames(clip, s + p, k, w.target, 0);
    return w;
}

double train_step(DenoiserModel& model, const DiffusionSchedule& sched, AdamState& adam,
                  const Tensor& cond_batch, const Tensor& target_batch, double p_drop, Rng& rng) {
    int t = static_cast<int>(rng.uniform_int(1, sched.T));
    Tensor eps = Tensor::randn(target_batch.shape(), rng, target_batch.dtype());
    Tensor x_t = forward_sample(sched, target_batch, t, eps);
    Tensor cond = model.drop_condition(cond_batch, p_drop, rng);
    Tensor pred = model.forward(x_t, cond, t);
    Tensor loss = mse(pred, eps);
    double loss_val = loss.item();
    if (!std::isfinite(loss_val))
        throw EvalError("training loss is not finite at t=" + std::to_string(t) +
                        " (loss=" + std::to_string(loss_val) + ")");
    backward(loss);
    adam_step(model.parameters(), adam);
    model.zero_grads();
    return loss_val;
}

TrainResult train(const std::vector<VideoClip>& clips, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_from,
                  const TrainProgressFn& progress) {
    if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg.dtype != DType::f32)
        throw ConfigError("train: only f32 training is supported (clips are loaded as f32)");
    if (cfg.ema_decay < 0.0 || cfg.ema_decay >= 1.0)
        throw ConfigError("train: ema_decay must be in [0, 1)");
    if (cfg.brightness_jitter < 0.0 || cfg.brightness_jitter > 0.5)
        throw ConfigError("train: brightness_jitter must be in [0, 0.5]");

    std::vector<const VideoClip*> normal;
    int skipped = 0;
    for (const VideoClip& c : clips) {
        if (c.has_anomaly())
            ++skipped;
        else
            normal.push_back(&c);
    }
    if (normal.empty()) throw DataError("train: no normal clips in the training set");

    int C = normal[0]->C(), H = normal[0]->H(), W = normal[0]->W();
    int span = cfg.past_frames + cfg.pred_frames + cfg.future_frames;
    for (const VideoClip* c : normal) {
        if (c->C() != C || c->H() != H || c->W() != W)
            throw DataError("train: clip " + c->id + " has a different frame size");
        if (c->F() < span)
            throw DataError("train: clip " + c->id + " is shorter than one window (" +
                            std::to_string(span) + " frames)");
    }

    UNetConfig unet = cfg.unet;
    unet.frame_channels = C;
    unet.k = cfg.pred_frames;
    unet.p = cfg.past_frames;
    unet.f = cfg.future_frames;
    unet.validate();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("train: cannot create " + out_dir + ": " + ec.message());
    std::string ckpt_path = (std::filesystem::path(out_dir) / "checkpoint.fckp").string();
    std::string csv_path = (std::filesystem::path(out_dir) / "train.csv").string();

    DiffusionSchedule sched = make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    DenoiserModel model(unet, cfg.dtype, Rng::mix(cfg.seed, 0x11));
    AdamState adam;
    adam.lr = cfg.lr;
    std::vector<Tensor> ema;
    int64_t global_step = 0;
    int start_epoch = 1;

    if (!resume_from.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(resume_from);
        if (loaded.meta.unet != unet)
            throw ConfigError("train: resume checkpoint was trained with a different model config");
        if (!loaded.meta.has_adam)
            throw DataError("train: resume checkpoint has no optimizer state");
        model = std::move(loaded.model);
        adam = std::move(loaded.adam);
        ema = std::move(loaded.ema);
        global_step = loaded.meta.global_step;
        start_epoch = static_cast<int>(loaded.meta.epoch) + 1;
        if (start_epoch > cfg.epochs && cfg.epochs > 0)
            throw ConfigError("train: checkpoint already covers " +
                              std::to_string(loaded.meta.epoch) + " epochs");
    }
    if (cfg.ema_decay > 0.0 && ema.empty()) {
        for (const Tensor& p : model.parameters()) ema.push_back(p.clone());
    }

    std::ofstream csv(csv_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("train: cannot write " + csv_path);
    if (resume_from.empty()) csv << "step,epoch,loss,seconds\n";

    auto wall_start = std::chrono::steady_clock::now();
    double last_loss = 0.0;
    std::vector<size_t> order(normal.size());

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        // Per-epoch derived streams keep resumed runs draw-for-draw identical
        // to uninterrupted ones.
        Rng shuffle_rng(Rng::mix(cfg.seed, 0x1000 + static_cast<uint64_t>(epoch)));
        Rng window_rng = shuffle_rng.fork(1);
        Rng step_rng = shuffle_rng.fork(2);

        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(
                                        0, static_cast<int64_t>(i) - 1))]);

        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
            size_t n = std::min(static_cast<size_t>(cfg.batch_size), order.size() - pos);
            Tensor cond = Tensor::zeros(
                {static_cast<int64_t>(n), static_cast<int64_t>(cfg.past_frames + cfg.future_frames) * C,
                 H, W},
                cfg.dtype);
            Tensor target = Tensor::zeros(
                {static_cast<int64_t>(n), static_cast<int64_t>(cfg.pred_frames) * C, H, W}, cfg.dtype);
            int64_t cond_sz = cond.numel() / static_cast<int64_t>(n);
            int64_t tgt_sz = target.numel() / static_cast<int64_t>(n);
            for (size_t b = 0; b < n; ++b) {
                TrainWindow w = sample_training_window(*normal[order[pos + b]], cfg.past_frames,
                                                       cfg.pred_frames, cfg.future_frames, window_rng);
                std::copy(w.cond.ptr<float>(), w.cond.ptr<float>() + cond_sz,
                          cond.ptr<float>() + static_cast<int64_t>(b) * cond_sz);
                std::copy(w.target.ptr<float>(), w.target.ptr<float>() + tgt_sz,
                          target.ptr<float>() + static_cast<int64_t>(b) * tgt_sz);
                if (cfg.brightness_jitter > 0.0) {
                    // Shift the whole window so the global level cannot be learned
                    // as a dataset prior and must be read from the conditioning.
                    float d = static_cast<float>(
                        window_rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter));
                    float* cp = cond.ptr<float>() + static_cast<int64_t>(b) * cond_sz;
                    for (int64_t q = 0; q < cond_sz; ++q) cp[q] += d;
                    float* tp = target.ptr<float>() + static_cast<int64_t>(b) * tgt_sz;
                    for (int64_t q = 0; q < tgt_sz; ++q) tp[q] += d;
                }
            }

            try {
                last_loss = train_step(model, sched, adam, cond, target, cfg.p_drop, step_rng);
            } catch (const EvalError& e) {
                throw EvalError(std::string(e.what()) + " [epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(global_step + 1) + ", batch of " +
                                std::to_string(n) + "]");
            }
            ++global_step;

            if (!ema.empty()) {
                const std::vector<Tensor>& params = model.parameters();
                for (size_t j = 0; j < params.size(); ++j) {
                    float* e = ema[j].ptr<float>();
                    const float* pw = params[j].ptr<float>();
                    for (int64_t q = 0; q < ema[j].numel(); ++q)
                        e[q] = static_cast<float>(cfg.ema_decay * e[q] +
                                                  (1.0 - cfg.ema_decay) * pw[q]);
                }
            }

            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                        wall_start)
                              .count();
            char row[128];
            std::snprintf(row, sizeof(row), "%lld,%d,%.6f,%.3f\n",
                          static_cast<long long>(global_step), epoch, last_loss, secs);
            csv << row;
            if (progress) progress(epoch, static_cast<int>(global_step), last_loss);
        }
        csv.flush();

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs)
            save_checkpoint(ckpt_path, model, sched, global_step, epoch, &adam,
                            ema.empty() ? nullptr : &ema, cfg.ema_decay);
    }

    int final_epoch = std::max(cfg.epochs, start_epoch - 1);
    save_checkpoint(ckpt_path, model, sched, global_step, final_epoch, &adam,
                    ema.empty() ? nullptr : &ema, cfg.ema_decay);

    TrainResult res;
    res.steps = static_cast<int>(global_step);
    res.epochs_completed = final_epoch;
    res.final_loss = last_loss;
    res.checkpoint_path = ckpt_path;
    res.train_csv_path = csv_path;
    return res;
}

}  // namespace framecast
