#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "framecast/checkpoint.hpp"
#include "framecast/config.hpp"
#include "framecast/data.hpp"
#include "framecast/error.hpp"
#include "framecast/eval.hpp"
#include "framecast/image_io.hpp"
#include "framecast/predictor.hpp"
#include "framecast/trainer.hpp"

namespace fs = std::filesystem;
using namespace framecast;

namespace {

// Flag captures, applied on top of the config file: mid-priority presets
// (--desk) first, then explicit flags.
struct SubArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> mid;
    std::vector<std::pair<std::string, std::string>> high;

    RunConfig merge() const {
        RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
        for (const auto& [k, v] : mid) cfg.set(k, v);
        for (const auto& [k, v] : high) cfg.set(k, v);
        return cfg;
    }
};

void opt(CLI::App* cmd, SubArgs& a, const std::string& flag, const std::string& key,
         const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&a, key](const std::string& v) { a.high.emplace_back(key, v); }, desc);
}

void flag(CLI::App* cmd, SubArgs& a, const std::string& name, const std::string& key,
          const std::string& desc) {
    cmd->add_flag_callback(
        name, [&a, key]() { a.high.emplace_back(key, "true"); }, desc);
}

void add_common(CLI::App* cmd, SubArgs& a) {
    cmd->add_option("--config", a.config_path, "key=value configuration file");
    opt(cmd, a, "--seed", "seed", "base RNG seed");
    opt(cmd, a, "--out", "out", "output/run directory");
    cmd->add_flag_callback(
        "--desk", [&a]() {
            a.mid.emplace_back("height", "16");
            a.mid.emplace_back("width", "16");
        },
        "16x16 desk-scale preset (default is 128x128)");
}

std::string run_dir(RunConfig& cfg) {
    std::string out = cfg.get_str("out", "");
    if (!out.empty()) return out;
    const char* env = std::getenv("FRAMECAST_RUN_DIR");
    if (env != nullptr && env[0] != '\0') {
        cfg.set("out", env);
        return env;
    }
    throw UsageError("no run directory: pass --out or set FRAMECAST_RUN_DIR");
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected comma-separated integers, got '" +
                              s + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

void echo_config(RunConfig& cfg, const std::string& command, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory " + dir + ": " + ec.message());
    cfg.set("command", command);
    cfg.echo((fs::path(dir) / "resolved.cfg").string());
}

// Resolves the conditioning mode into (pred_frames, future_frames) defaults:
// "past" predicts 5 frames from 2 past ones; "past+future" is the 2+3+2
// ablation layout.
void resolve_cond_mode(RunConfig& cfg, int& k_def, int& f_def) {
    std::string mode = cfg.get_str("cond", "past");
    if (mode == "past") {
        k_def = 5;
        f_def = 0;
    } else if (mode == "past+future") {
        k_def = 3;
        f_def = 2;
    } else {
        throw ConfigError("cond must be 'past' or 'past+future', got '" + mode + "'");
    }
}

UNetConfig read_unet_config(RunConfig& cfg) {
    UNetConfig u;
    u.base_width = static_cast<int>(cfg.get_int("base_width", 32));
    u.channel_multipliers = parse_int_list(cfg.get_str("channel_multipliers", "1,2"),
                                           "channel_multipliers");
    u.attention_levels = parse_int_list(cfg.get_str("attention_levels", "1"), "attention_levels");
    u.groups = static_cast<int>(cfg.get_int("groups", 8));
    u.heads = static_cast<int>(cfg.get_int("heads", 4));
    u.time_embed_dim = static_cast<int>(cfg.get_int("time_embed_dim", 128));
    u.spade_hidden = static_cast<int>(cfg.get_int("spade_hidden", 32));
    return u;
}

int cmd_synth(RunConfig cfg) {
    std::string out = cfg.get_str("out", "");
    if (out.empty()) throw UsageError("synth: --out is required");
    DatasetSpec spec;
    spec.n_normal = static_cast<int>(cfg.get_int("normal", 500));
    spec.n_hotspot = static_cast<int>(cfg.get_int("hotspot", 10));
    spec.n_plume = static_cast<int>(cfg.get_int("plume", 10));
    spec.seed = cfg.get_u64("seed", 0);
    spec.base.H = static_cast<int>(cfg.get_int("height", 128));
    spec.base.W = static_cast<int>(cfg.get_int("width", 128));
    spec.base.F = static_cast<int>(cfg.get_int("frames", 14));
    spec.base.n_blobs = static_cast<int>(cfg.get_int("blobs", 4));
    spec.base.v_min = cfg.get_real("drift_min", 0.3);
    spec.base.v_max = cfg.get_real("drift_max", 1.2);
    echo_config(cfg, "synth", out);
    std::vector<VideoClip> clips = synth_dataset(out, spec);
    std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
    return 0;
}

int cmd_train(RunConfig cfg) {
    std::string out = run_dir(cfg);
    std::string data = cfg.get_str("data", "");
    if (data.empty()) throw UsageError("train: --data is required");
    std::string resume = cfg.get_str("resume", "");

    int k_def = 5, f_def = 0;
    resolve_cond_mode(cfg, k_def, f_def);

    TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("epochs", 30));
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 8));
    tc.lr = cfg.get_real("lr", 2e-4);
    tc.past_frames = static_cast<int>(cfg.get_int("past_frames", 2));
    tc.pred_frames = static_cast<int>(cfg.get_int("pred_frames", k_def));
    tc.future_frames = static_cast<int>(cfg.get_int("future_frames", f_def));
    tc.p_drop = cfg.get_real("p_drop", 0.1);
    tc.brightness_jitter = cfg.get_real("brightness_jitter", 0.0);
    tc.T = static_cast<int>(cfg.get_int("timesteps", 100));
    tc.beta_start = cfg.get_real("beta_start", 1e-4);
    tc.beta_end = cfg.get_real("beta_end", 0.075);
    tc.seed = cfg.get_u64("seed", 0);
    tc.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every", 0));
    tc.ema_decay = cfg.get_real("ema_decay", 0.0);
    tc.unet = read_unet_config(cfg);

    std::string mode = cfg.get_str("cond", "past");
    if (mode == "past" && tc.future_frames > 0)
        throw ConfigError("cond=past but future_frames > 0");
    if (mode == "past+future" && tc.future_frames == 0)
        throw ConfigError("cond=past+future needs future_frames > 0");

    int th = static_cast<int>(cfg.get_int("height", 0));
    int tw = static_cast<int>(cfg.get_int("width", 0));
    int log_every = static_cast<int>(cfg.get_int("log_every", 25));
    echo_config(cfg, "train", out);

    std::vector<VideoClip> clips = load_dataset(data, th, tw);
    TrainProgressFn progress;
    if (log_every > 0) {
        progress = [log_every](int epoch, int step, double loss) {
            if (step % log_every == 0)
                std::printf("epoch %d step %d loss %.5f\n", epoch, step, loss);
        };
    }
    TrainResult r = train(clips, tc, out, resume, progress);
    std::cout << "trained " << r.steps << " steps, final loss " << r.final_loss << "\n";
    std::cout << "checkpoint: " << r.checkpoint_path << "\n";
    return 0;
}

// One side-by-side image per frame: observed left, generated right, separated
// by a one-pixel white column.
void write_side_by_side(const std::string& dir, const VideoClip& clip, const PredictedClip& pred) {
    if (clip.C() != 1) throw UsageError("predict: only single-channel clips can be rendered");
    int F = clip.F(), H = clip.H(), W = clip.W();
    const float* real = clip.frames.ptr<float>();
    const float* gen = pred.frames.ptr<float>();
    GrayImage img;
    img.height = H;
    img.width = 2 * W + 1;
    img.pixels.assign(static_cast<size_t>(H) * (2 * W + 1), 1.0f);
    for (int i = 0; i < F; ++i) {
        const float* r = real + static_cast<int64_t>(i) * H * W;
        const float* g = gen + static_cast<int64_t>(i) * H * W;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                img.pixels[static_cast<size_t>(y) * (2 * W + 1) + x] = (r[y * W + x] + 1.0f) * 0.5f;
                img.pixels[static_cast<size_t>(y) * (2 * W + 1) + W + 1 + x] =
                    (g[y * W + x] + 1.0f) * 0.5f;
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", i);
        write_gray_png((fs::path(dir) / name).string(), img);
    }
}

int cmd_predict(RunConfig cfg) {
    std::string out = run_dir(cfg);
    std::string ckpt = cfg.get_str("checkpoint", "");
    std::string clip_dir = cfg.get_str("clip", "");
    if (ckpt.empty()) throw UsageError("predict: --checkpoint is required");
    if (clip_dir.empty()) throw UsageError("predict: --clip is required");
    bool use_ema = cfg.get_bool("use_ema", false);
    int th = static_cast<int>(cfg.get_int("height", 0));
    int tw = static_cast<int>(cfg.get_int("width", 0));

    LoadedCheckpoint lc = load_checkpoint(ckpt, use_ema);
    PredictOptions po;
    po.past_frames = lc.meta.unet.p;
    po.pred_frames = lc.meta.unet.k;
    po.future_frames = lc.meta.unet.f;
    po.seed = cfg.get_u64("seed", 0);
    po.autoregressive = cfg.get_bool("autoregressive", false);
    cfg.set("past_frames", std::to_string(po.past_frames));
    cfg.set("pred_frames", std::to_string(po.pred_frames));
    cfg.set("future_frames", std::to_string(po.future_frames));
    echo_config(cfg, "predict", out);

    VideoClip clip = load_clip_dir(clip_dir, th, tw);
    PredictedClip pred = predict_clip(clip, lc.schedule, lc.model, po);
    write_side_by_side(out, clip, pred);

    std::vector<PredictionWindow> plan =
        plan_windows(clip.F(), po.past_frames, po.pred_frames, po.future_frames);
    std::ofstream prov(fs::path(out) / "provenance.csv", std::ios::trunc);
    if (!prov) throw IoError("predict: cannot write provenance.csv");
    prov << "window,cond_indices,predict_indices\n";
    auto join = [](const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(v[i]);
        }
        return s;
    };
    for (size_t w = 0; w < plan.size(); ++w)
        prov << w << "," << join(plan[w].cond_indices) << "," << join(plan[w].predict_indices)
             << "\n";
    std::cout << "wrote " << clip.F() << " frames to " << out << "\n";
    return 0;
}

int cmd_eval(RunConfig cfg) {
    std::string out = run_dir(cfg);
    std::string data = cfg.get_str("data", "");
    if (data.empty()) throw UsageError("eval: --data is required");
    bool oracle = cfg.get_bool("oracle", false);
    std::string ckpt = cfg.get_str("checkpoint", "");
    if (!oracle && ckpt.empty()) throw UsageError("eval: --checkpoint is required (or use --oracle)");
    bool use_ema = cfg.get_bool("use_ema", false);

    int k_def = 5, f_def = 0;
    resolve_cond_mode(cfg, k_def, f_def);
    std::string mode = cfg.get_str("cond", "past");

    EvalConfig ec;
    ec.threshold = cfg.get_real("threshold", 0.5);
    ec.seed = cfg.get_u64("seed", 0);
    ec.workers = static_cast<int>(cfg.get_int("workers", 1));
    ec.autoregressive = cfg.get_bool("autoregressive", false);
    ec.oracle = oracle;

    std::optional<LoadedCheckpoint> lc;
    DiffusionSchedule sched;
    if (oracle) {
        ec.past_frames = static_cast<int>(cfg.get_int("past_frames", 2));
        ec.pred_frames = static_cast<int>(cfg.get_int("pred_frames", k_def));
        ec.future_frames = static_cast<int>(cfg.get_int("future_frames", f_def));
        sched = make_linear_schedule(static_cast<int>(cfg.get_int("timesteps", 100)),
                                     cfg.get_real("beta_start", 1e-4), cfg.get_real("beta_end", 0.075));
    } else {
        lc.emplace(load_checkpoint(ckpt, use_ema));
        ec.past_frames = lc->meta.unet.p;
        ec.pred_frames = lc->meta.unet.k;
        ec.future_frames = lc->meta.unet.f;
        sched = lc->schedule;
        cfg.set("past_frames", std::to_string(ec.past_frames));
        cfg.set("pred_frames", std::to_string(ec.pred_frames));
        cfg.set("future_frames", std::to_string(ec.future_frames));
        cfg.set("timesteps", std::to_string(sched.T));
    }
    if (mode == "past" && ec.future_frames > 0)
        throw ConfigError("cond=past but the checkpoint was trained with future conditioning (f=" +
                          std::to_string(ec.future_frames) + ")");
    if (mode == "past+future" && ec.future_frames == 0)
        throw ConfigError("cond=past+future but the checkpoint was trained past-only (f=0)");

    int th = static_cast<int>(cfg.get_int("height", 0));
    int tw = static_cast<int>(cfg.get_int("width", 0));
    echo_config(cfg, "eval", out);

    std::vector<VideoClip> clips = load_dataset(data, th, tw);
    EvalResult res = evaluate(clips, sched, lc ? &lc->model : nullptr, ec);
    std::string summary = write_eval_outputs(out, res);
    std::cout << summary << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"framecast: conditional-diffusion video prediction and anomaly scoring"};
    app.require_subcommand(1);

    SubArgs synth_args, train_args, predict_args, eval_args;

    CLI::App* synth = app.add_subcommand("synth", "generate a labeled synthetic clip dataset");
    add_common(synth, synth_args);
    opt(synth, synth_args, "--normal", "normal", "number of normal clips (default 500)");
    opt(synth, synth_args, "--hotspot", "hotspot", "number of hotspot clips (default 10)");
    opt(synth, synth_args, "--plume", "plume", "number of plume clips (default 10)");
    opt(synth, synth_args, "--frames", "frames", "frames per clip (default 14)");
    opt(synth, synth_args, "--height", "height", "frame height (default 128)");
    opt(synth, synth_args, "--width", "width", "frame width (default 128)");
    opt(synth, synth_args, "--blobs", "blobs", "drifting cloud blobs per clip (default 4)");
    opt(synth, synth_args, "--drift-min", "drift_min", "min drift speed (default 0.3)");
    opt(synth, synth_args, "--drift-max", "drift_max", "max drift speed (default 1.2)");

    CLI::App* train = app.add_subcommand("train", "train the denoiser on normal clips");
    add_common(train, train_args);
    opt(train, train_args, "--data", "data", "dataset directory (from synth or ingested)");
    opt(train, train_args, "--epochs", "epochs", "training epochs (default 30)");
    opt(train, train_args, "--batch", "batch_size", "batch size (default 8)");
    opt(train, train_args, "--lr", "lr", "Adam learning rate (default 2e-4)");
    opt(train, train_args, "--past-frames", "past_frames", "conditioning past frames (default 2)");
    opt(train, train_args, "--pred-frames", "pred_frames", "predicted frames per window (default 5)");
    opt(train, train_args, "--future-frames", "future_frames", "future conditioning frames (default 0)");
    opt(train, train_args, "--cond", "cond", "conditioning mode: past (2+5) or past+future (2+3+2)");
    opt(train, train_args, "--p-drop", "p_drop", "condition dropout probability (default 0.1)");
    opt(train, train_args, "--brightness-jitter", "brightness_jitter",
        "half-range of a per-window brightness shift augmentation (default 0)");
    opt(train, train_args, "--timesteps", "timesteps", "diffusion steps T (default 100)");
    opt(train, train_args, "--beta-start", "beta_start", "first beta (default 1e-4)");
    opt(train, train_args, "--beta-end", "beta_end", "last beta (default 0.075)");
    opt(train, train_args, "--checkpoint-every", "checkpoint_every", "epochs between checkpoints");
    opt(train, train_args, "--ema-decay", "ema_decay", "EMA decay, 0 disables (default 0)");
    opt(train, train_args, "--base-width", "base_width", "U-Net base channel width (default 32)");
    opt(train, train_args, "--height", "height", "resize clips to this height (default: native)");
    opt(train, train_args, "--width", "width", "resize clips to this width (default: native)");
    opt(train, train_args, "--resume", "resume", "checkpoint to resume from");
    opt(train, train_args, "--log-every", "log_every", "progress print interval in steps");

    CLI::App* predict = app.add_subcommand("predict", "predict one clip and write side-by-side frames");
    add_common(predict, predict_args);
    opt(predict, predict_args, "--checkpoint", "checkpoint", "trained checkpoint path");
    opt(predict, predict_args, "--clip", "clip", "clip directory to predict");
    opt(predict, predict_args, "--height", "height", "resize clip to this height (default: native)");
    opt(predict, predict_args, "--width", "width", "resize clip to this width (default: native)");
    flag(predict, predict_args, "--use-ema", "use_ema", "use EMA weights");
    flag(predict, predict_args, "--autoregressive", "autoregressive",
         "condition on generated frames instead of observed ones");

    CLI::App* evalc = app.add_subcommand("eval", "score a labeled test set and compute ROC/AUC");
    add_common(evalc, eval_args);
    opt(evalc, eval_args, "--checkpoint", "checkpoint", "trained checkpoint path");
    opt(evalc, eval_args, "--data", "data", "labeled test dataset directory");
    opt(evalc, eval_args, "--threshold", "threshold", "regular-score decision threshold (default 0.5)");
    opt(evalc, eval_args, "--workers", "workers", "parallel per-video workers (default 1)");
    opt(evalc, eval_args, "--cond", "cond", "conditioning mode: past or past+future");
    opt(evalc, eval_args, "--height", "height", "resize clips to this height (default: native)");
    opt(evalc, eval_args, "--width", "width", "resize clips to this width (default: native)");
    flag(evalc, eval_args, "--oracle", "oracle", "score the reconstruction oracle instead of a model");
    flag(evalc, eval_args, "--use-ema", "use_ema", "use EMA weights");
    flag(evalc, eval_args, "--autoregressive", "autoregressive",
         "condition on generated frames instead of observed ones");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args.merge());
        if (train->parsed()) return cmd_train(train_args.merge());
        if (predict->parsed()) return cmd_predict(predict_args.merge());
        if (evalc->parsed()) return cmd_eval(eval_args.merge());
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const EvalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
