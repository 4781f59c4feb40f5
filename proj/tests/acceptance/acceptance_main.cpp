// Release acceptance suite. Each criterion prints one [PASS]/[FAIL] line and
// the binary exits with the number of failures. Criterion 9 shells out to the
// CLI binary given as argv[1]; optional further arguments select a subset of
// criteria by number. Artifacts land under ./acceptance_artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "framecast/checkpoint.hpp"
#include "framecast/data.hpp"
#include "framecast/denoiser.hpp"
#include "framecast/error.hpp"
#include "framecast/eval.hpp"
#include "framecast/ops.hpp"
#include "framecast/predictor.hpp"
#include "framecast/rng.hpp"
#include "framecast/schedule.hpp"
#include "framecast/scoring.hpp"
#include "framecast/tensor.hpp"
#include "framecast/trainer.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace framecast;
using framecast::testing::gradcheck;
using framecast::testing::GradcheckOptions;

namespace {

std::string g_cli;
fs::path g_artifacts = "acceptance_artifacts";

// Desk-scale benchmark recipe shared by criteria 6-8. The drift range keeps
// five-frame extrapolation of the cloud layer within reach of the small model,
// and anomalies that keep growing and moving across the clip stay unpredictable
// from the conditioning frames alone. Evaluation uses the EMA weights.
constexpr double kBenchDriftMin = 0.02;
constexpr double kBenchDriftMax = 0.2;
constexpr int kBenchEpochs = 80;
constexpr int kBenchBatch = 4;
constexpr int kBenchWidth = 16;
constexpr double kBenchEmaDecay = 0.999;
constexpr int kBenchSeeds = 3;

struct BenchRun {
    double auc = 0.0;
    double mean_normal = 0.0;
    double mean_anomalous = 0.0;
    fs::path eval_dir;
};

struct BenchState {
    std::vector<BenchRun> past;         // 2 past -> 5 predicted
    std::vector<BenchRun> past_future;  // 2 past + 2 future -> 3 predicted
};
BenchState g_bench;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor grad_leaf(Shape shape, Rng& rng) {
    Tensor t = Tensor::randn(std::move(shape), rng, DType::f64);
    t.set_requires_grad(true);
    return t;
}

// mse against a fixed random target gives every output element a distinct
// upstream gradient.
Tensor loss_against(const Tensor& out, Rng& rng) {
    Rng local = rng.fork(999);
    Tensor target = Tensor::randn(out.shape(), local, DType::f64);
    return mse(out, target);
}

UNetConfig tiny_unet() {
    UNetConfig cfg;
    cfg.frame_channels = 1;
    cfg.k = 2;
    cfg.p = 1;
    cfg.f = 0;
    cfg.base_width = 4;
    cfg.channel_multipliers = {1, 2};
    cfg.attention_levels = {1};
    cfg.groups = 2;
    cfg.heads = 2;
    cfg.time_embed_dim = 8;
    cfg.spade_hidden = 4;
    return cfg;
}

// A smooth in-range [1,1,16,16] f64 image from the scene generator.
Tensor smooth_image(uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    VideoClip clip = synth_clip(cfg);
    Tensor x0 = Tensor::zeros({1, 1, 16, 16}, DType::f64);
    for (int64_t i = 0; i < x0.numel(); ++i) x0.set(i, clip.frames.at(i));
    return x0;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient checks: every differentiable op, then the full
//    small-denoiser composite. f64, h = 1e-6, relative tolerance 1e-4.

bool criterion_gradchecks(std::string& detail) {
    const GradcheckOptions opt;  // h = 1e-6, rtol = 1e-4
    double worst = 0.0;
    std::string fail;

    auto check = [&](const char* op, uint64_t seed, const std::function<Tensor()>& f,
                     const std::vector<Tensor>& leaves, const GradcheckOptions& o) {
        if (!fail.empty()) return;
        auto res = gradcheck(f, leaves, o);
        worst = std::max(worst, res.max_rel_err);
        if (!res.ok) fail = std::string(op) + " seed " + std::to_string(seed) + ": " + res.detail;
    };

    const int op_seeds = 25;
    for (uint64_t seed = 0; seed < op_seeds && fail.empty(); ++seed) {
        Rng rng(seed);
        {
            Tensor a = grad_leaf({2, 3}, rng), b = grad_leaf({2, 3}, rng);
            check("add/sub/mul", seed, [&] { return loss_against(mul(add(a, b), sub(a, b)), rng); },
                  {a, b}, opt);
        }
        {
            Tensor x = grad_leaf({5}, rng);
            check("scale/add_scalar/silu", seed,
                  [&] { return loss_against(add_scalar(scale(silu(x), 1.7), -0.3), rng); }, {x}, opt);
        }
        {
            Tensor a = grad_leaf({3, 4}, rng), b = grad_leaf({4, 2}, rng), bias = grad_leaf({2}, rng);
            check("matmul/add_row_bias", seed,
                  [&] { return loss_against(add_row_bias(matmul(a, b), bias), rng); }, {a, b, bias},
                  opt);
        }
        {
            Tensor x = grad_leaf({2, 3, 2, 2}, rng), cb = grad_leaf({3}, rng);
            check("add_channel_bias", seed, [&] { return loss_against(add_channel_bias(x, cb), rng); },
                  {x, cb}, opt);
        }
        {
            Tensor x = grad_leaf({1, 2, 5, 5}, rng), w = grad_leaf({3, 2, 3, 3}, rng);
            check("conv2d s1p1", seed, [&] { return loss_against(conv2d(x, w, 1, 1), rng); }, {x, w},
                  opt);
            Tensor x2 = grad_leaf({1, 2, 6, 6}, rng), w2 = grad_leaf({2, 2, 2, 2}, rng);
            check("conv2d s2p0", seed, [&] { return loss_against(conv2d(x2, w2, 2, 0), rng); },
                  {x2, w2}, opt);
        }
        {
            Tensor x = grad_leaf({2, 4, 3, 3}, rng), g = grad_leaf({4}, rng), b = grad_leaf({4}, rng);
            check("group_norm", seed, [&] { return loss_against(group_norm(x, 2, g, b), rng); },
                  {x, g, b}, opt);
        }
        {
            Tensor a = grad_leaf({3, 3}, rng), b = grad_leaf({3, 3}, rng);
            check("mse", seed, [&] { return mse(a, b); }, {a, b}, opt);
            Tensor x = grad_leaf({2, 2}, rng);
            check("sum_all", seed, [&] { return sum_all(silu(x)); }, {x}, opt);
        }
        {
            Tensor q = grad_leaf({1, 4, 2, 2}, rng), k = grad_leaf({1, 4, 2, 2}, rng),
                   v = grad_leaf({1, 4, 2, 2}, rng);
            check("attention_core", seed, [&] { return loss_against(attention_core(q, k, v, 2), rng); },
                  {q, k, v}, opt);
        }
        {
            Tensor x = grad_leaf({1, 4, 2, 2}, rng);
            Tensor wq = grad_leaf({4, 4, 1, 1}, rng), wk = grad_leaf({4, 4, 1, 1}, rng);
            Tensor wv = grad_leaf({4, 4, 1, 1}, rng), wo = grad_leaf({4, 4, 1, 1}, rng);
            check("self_attention", seed,
                  [&] { return loss_against(self_attention(x, 2, wq, wk, wv, wo), rng); },
                  {x, wq, wk, wv, wo}, opt);
        }
        {
            Tensor x = grad_leaf({1, 2, 2, 2}, rng);
            check("upsample_nearest2x", seed, [&] { return loss_against(upsample_nearest2x(x), rng); },
                  {x}, opt);
            Tensor y = grad_leaf({1, 2, 4, 4}, rng);
            check("avg_pool2x", seed, [&] { return loss_against(avg_pool2x(y), rng); }, {y}, opt);
        }
        {
            Tensor a = grad_leaf({1, 2, 2, 2}, rng), b = grad_leaf({1, 2, 2, 2}, rng);
            check("concat/slice_channels", seed,
                  [&] { return loss_against(slice_channels(concat_channels(a, b), 1, 3), rng); },
                  {a, b}, opt);
            Tensor x = grad_leaf({2, 3}, rng);
            check("reshape", seed, [&] { return loss_against(reshape(x, {6}), rng); }, {x}, opt);
        }
    }
    if (!fail.empty()) {
        detail = fail;
        return false;
    }

    const int net_seeds = 20;
    for (uint64_t seed = 0; seed < net_seeds && fail.empty(); ++seed) {
        DenoiserModel model(tiny_unet(), DType::f64, seed);
        // Zero-initialized heads gate several paths; nudge every parameter so
        // each branch carries signal through the check.
        Rng jitter(seed + 100);
        for (Tensor& p : model.parameters())
            for (int64_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 0.05 * jitter.normal());

        Rng rng(seed + 200);
        Tensor noisy = Tensor::randn({1, 2, 4, 4}, rng, DType::f64);
        Tensor cond = Tensor::randn({1, 1, 4, 4}, rng, DType::f64);
        Tensor target = Tensor::randn({1, 2, 4, 4}, rng, DType::f64);
        int t = static_cast<int>(rng.uniform_int(1, 100));

        GradcheckOptions net_opt;
        net_opt.max_coords = 2;
        net_opt.sample_seed = seed;
        auto res = gradcheck([&] { return mse(model.forward(noisy, cond, t), target); },
                             model.parameters(), net_opt);
        worst = std::max(worst, res.max_rel_err);
        if (!res.ok) fail = "denoiser composite seed " + std::to_string(seed) + ": " + res.detail;
    }
    if (!fail.empty()) {
        detail = fail;
        return false;
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d op seeds + %d composite seeds, max rel err %.2e", op_seeds,
                  net_seeds, worst);
    detail = buf;
    return true;
}

// ---------------------------------------------------------------------------
// 2. Forward-corruption statistics at t = T: per-pixel sample mean within 3
//    standard errors of sqrt(alpha_bar_T) x0, pooled variance within 5% of
//    (1 - alpha_bar_T). Fixed draw seed, 10k samples.

bool criterion_forward_stats(std::string& detail) {
    DiffusionSchedule s = make_linear_schedule(100);
    Tensor x0 = smooth_image(42);
    const int64_t pixels = x0.numel();
    const int draws = 10000;
    const double ab = s.alpha_bar(100);
    const double want_var = 1.0 - ab;

    std::vector<double> sum(static_cast<size_t>(pixels), 0.0);
    std::vector<double> sumsq(static_cast<size_t>(pixels), 0.0);
    Rng rng(2026);
    for (int n = 0; n < draws; ++n) {
        Tensor eps = Tensor::randn(x0.shape(), rng, DType::f64);
        Tensor xt = forward_sample(s, x0, 100, eps);
        for (int64_t i = 0; i < pixels; ++i) {
            double v = xt.at(i);
            sum[static_cast<size_t>(i)] += v;
            sumsq[static_cast<size_t>(i)] += v * v;
        }
    }

    const double se = std::sqrt(want_var / draws);
    double worst_mean_sigma = 0.0;
    double var_pool = 0.0;
    for (int64_t i = 0; i < pixels; ++i) {
        double mean = sum[static_cast<size_t>(i)] / draws;
        double want_mean = std::sqrt(ab) * x0.at(i);
        worst_mean_sigma = std::max(worst_mean_sigma, std::fabs(mean - want_mean) / se);
        var_pool += sumsq[static_cast<size_t>(i)] / draws - mean * mean;
    }
    var_pool /= static_cast<double>(pixels);
    const double var_rel = std::fabs(var_pool - want_var) / want_var;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "worst pixel mean %.2f SE (limit 3), variance off by %.2f%% (limit 5%%)",
                  worst_mean_sigma, 100.0 * var_rel);
    detail = buf;
    return worst_mean_sigma < 3.0 && var_rel < 0.05;
}

// ---------------------------------------------------------------------------
// 3. Reconstruction oracle: feeding the exact residual noise into the full
//    reverse chain reproduces a smooth 16x16 image to L-inf 1e-3 in f64.

bool criterion_reconstruction_oracle(std::string& detail) {
    DiffusionSchedule s = make_linear_schedule(100);
    Tensor x0 = smooth_image(7);
    DenoiseFn oracle = make_oracle_denoiser(s, x0);
    Rng rng(11);
    Tensor xhat = sample(s, oracle, Tensor::zeros(x0.shape(), DType::f64), x0.shape(), rng);

    double linf = 0.0;
    for (int64_t i = 0; i < x0.numel(); ++i) linf = std::max(linf, std::fabs(xhat.at(i) - x0.at(i)));

    char buf[96];
    std::snprintf(buf, sizeof(buf), "L-inf %.3e (limit 1e-3)", linf);
    detail = buf;
    return linf <= 1e-3;
}

// ---------------------------------------------------------------------------
// 4. Trapezoidal ROC AUC equals the O(n^2) pairwise statistic to 1e-12 on 100
//    random instances, n up to 1000, alternating continuous and tied scores.

bool criterion_auc_oracle(std::string& detail) {
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        Rng rng(static_cast<uint64_t>(inst) * 7919 + 1);
        int n = static_cast<int>(rng.uniform_int(10, 1000));
        bool ties = inst % 2 == 0;
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double u = rng.uniform();
            scores[static_cast<size_t>(i)] = ties ? std::floor(u * 12.0) / 12.0 : u;
            labels[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, 1));
        }
        labels[0] = 0;
        labels[1] = 1;

        double wins = 0.0, tied = 0.0;
        int64_t n0 = 0, n1 = 0;
        for (int i = 0; i < n; ++i) {
            if (labels[static_cast<size_t>(i)] != 0) continue;
            ++n0;
            for (int j = 0; j < n; ++j) {
                if (labels[static_cast<size_t>(j)] != 1) continue;
                if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(j)]) wins += 1.0;
                else if (scores[static_cast<size_t>(i)] == scores[static_cast<size_t>(j)]) tied += 1.0;
            }
        }
        n1 = n - n0;
        double pairwise = (wins + 0.5 * tied) / (static_cast<double>(n0) * static_cast<double>(n1));
        double auc = roc_auc(scores, labels).auc;
        worst = std::max(worst, std::fabs(auc - pairwise));
        if (std::fabs(auc - pairwise) > 1e-12) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "instance %d (n=%d%s): trapezoid %.15f vs pairwise %.15f",
                          inst, n, ties ? ", ties" : "", auc, pairwise);
            detail = buf;
            return false;
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "100 instances, max |trapezoid - pairwise| %.2e (limit 1e-12)", worst);
    detail = buf;
    return true;
}

// ---------------------------------------------------------------------------
// 5. Window plans: disjoint and exhaustive coverage for every valid
//    (F <= 50, p <= 5, k <= 8, f in {0,2}), plus the exact 14-frame default plan.

bool criterion_window_coverage(std::string& detail) {
    int checked = 0;
    for (int f : {0, 2}) {
        for (int p = 0; p <= 5; ++p) {
            for (int k = 1; k <= 8; ++k) {
                for (int F = 1; F <= 50; ++F) {
                    std::vector<PredictionWindow> plan;
                    try {
                        plan = plan_windows(F, p, k, f);
                    } catch (const UsageError&) {
                        continue;  // F admits no window for this layout
                    }
                    ++checked;
                    std::vector<int> seen;
                    for (const PredictionWindow& w : plan) {
                        if (w.predict_indices.empty() ||
                            static_cast<int>(w.predict_indices.size()) > k) {
                            detail = "window with bad size";
                            return false;
                        }
                        if (static_cast<int>(w.cond_indices.size()) != p + f) {
                            detail = "conditioning index count != p + f";
                            return false;
                        }
                        int first = w.predict_indices.front();
                        for (size_t i = 0; i < w.predict_indices.size(); ++i) {
                            if (w.predict_indices[i] != first + static_cast<int>(i)) {
                                detail = "predicted block not contiguous";
                                return false;
                            }
                        }
                        for (int i = 0; i < p; ++i) {
                            if (w.cond_indices[static_cast<size_t>(i)] != first - p + i) {
                                detail = "past conditioning does not precede the block";
                                return false;
                            }
                        }
                        int last = w.predict_indices.back();
                        for (int i = 0; i < f; ++i) {
                            if (w.cond_indices[static_cast<size_t>(p + i)] != last + 1 + i) {
                                detail = "future conditioning does not follow the block";
                                return false;
                            }
                        }
                        for (int idx : w.predict_indices) seen.push_back(idx);
                    }
                    std::vector<int> want;
                    for (int i = p; i < F - f; ++i) want.push_back(i);
                    if (seen != want) {
                        char buf[128];
                        std::snprintf(buf, sizeof(buf),
                                      "coverage mismatch at F=%d p=%d k=%d f=%d", F, p, k, f);
                        detail = buf;
                        return false;
                    }
                }
            }
        }
    }

    std::vector<PredictionWindow> plan = plan_windows(14, 2, 5, 0);
    std::vector<PredictionWindow> want = {{{0, 1}, {2, 3, 4, 5, 6}},
                                          {{5, 6}, {7, 8, 9, 10, 11}},
                                          {{10, 11}, {12, 13}}};
    bool exact = plan.size() == want.size();
    for (size_t i = 0; exact && i < want.size(); ++i)
        exact = plan[i].cond_indices == want[i].cond_indices &&
                plan[i].predict_indices == want[i].predict_indices;
    if (!exact) {
        detail = "F=14 p=2 k=5 plan differs from the enumerated reference";
        return false;
    }

    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d valid layouts covered, 14-frame reference plan exact", checked);
    detail = buf;
    return true;
}

// ---------------------------------------------------------------------------
// Shared benchmark pipeline for criteria 6-8: synthesize, train, evaluate.

BenchRun run_benchmark(int seed, bool past_future) {
    DatasetSpec train_spec;
    train_spec.n_normal = 200;
    train_spec.base.H = 16;
    train_spec.base.W = 16;
    train_spec.base.F = 14;
    train_spec.base.v_min = kBenchDriftMin;
    train_spec.base.v_max = kBenchDriftMax;
    train_spec.seed = Rng::mix(100, static_cast<uint64_t>(seed));

    DatasetSpec test_spec = train_spec;
    test_spec.n_normal = 20;
    test_spec.n_hotspot = 10;
    test_spec.n_plume = 10;
    test_spec.seed = Rng::mix(900, static_cast<uint64_t>(seed));

    std::vector<VideoClip> train_clips = synth_clips(train_spec);
    std::vector<VideoClip> test_clips = synth_clips(test_spec);

    TrainConfig tc;
    tc.epochs = kBenchEpochs;
    tc.batch_size = kBenchBatch;
    tc.past_frames = 2;
    tc.pred_frames = past_future ? 3 : 5;
    tc.future_frames = past_future ? 2 : 0;
    tc.p_drop = 0.0;
    tc.ema_decay = kBenchEmaDecay;
    tc.seed = static_cast<uint64_t>(seed);
    tc.unet.base_width = kBenchWidth;

    std::string tag = std::string(past_future ? "past_future" : "past_only") + "_seed" +
                      std::to_string(seed);
    fs::path run_dir = g_artifacts / ("bench_" + tag);
    TrainResult tr = train(train_clips, tc, run_dir.string());

    LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path, true);
    EvalConfig ec;
    ec.past_frames = tc.past_frames;
    ec.pred_frames = tc.pred_frames;
    ec.future_frames = tc.future_frames;
    ec.seed = Rng::mix(777, static_cast<uint64_t>(seed));
    ec.workers = 2;
    EvalResult res = evaluate(test_clips, ckpt.schedule, &ckpt.model, ec);

    BenchRun out;
    out.auc = res.roc.auc;
    out.mean_normal = res.mean_normal_video_score;
    out.mean_anomalous = res.mean_anomalous_video_score;
    out.eval_dir = g_artifacts / ("eval_" + tag);
    write_eval_outputs(out.eval_dir.string(), res);
    std::printf("    %s: final loss %.4f, auc %.4f\n", tag.c_str(), tr.final_loss, out.auc);
    std::fflush(stdout);
    return out;
}

// 6. Desk-scale benchmark: 200 normal training clips, 20 normal + 20 anomalous
//    test clips, frame-level AUC >= 0.85 for each of 3 seeds.

bool criterion_benchmark_auc(std::string& detail) {
    g_bench.past.clear();
    for (int seed = 1; seed <= kBenchSeeds; ++seed)
        g_bench.past.push_back(run_benchmark(seed, false));

    std::ostringstream os;
    os.precision(4);
    os << std::fixed << "auc";
    bool ok = true;
    for (const BenchRun& r : g_bench.past) {
        os << " " << r.auc;
        ok = ok && r.auc >= 0.85;
    }
    os << (ok ? " (all >= 0.85)" : " (threshold 0.85)");
    detail = os.str();
    return ok;
}

// 7. Conditioning ablation: past-only (2 past -> 5) beats or matches
//    past+future (2 past + 2 future -> 3) in at least 2 of 3 seeds.

bool criterion_conditioning_ablation(std::string& detail) {
    g_bench.past_future.clear();
    for (int seed = 1; seed <= kBenchSeeds; ++seed)
        g_bench.past_future.push_back(run_benchmark(seed, true));

    int wins = 0;
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    for (int i = 0; i < kBenchSeeds; ++i) {
        double a = g_bench.past[static_cast<size_t>(i)].auc;
        double b = g_bench.past_future[static_cast<size_t>(i)].auc;
        if (a >= b) ++wins;
        os << (i ? ", " : "") << "seed " << (i + 1) << ": " << a << " vs " << b;
    }
    os << " -> past-only wins " << wins << "/3 (need 2)";
    detail = os.str();
    return wins >= 2;
}

// 8. Score separation: mean regular score of normal test videos exceeds the
//    anomalous mean for every trained model, and per-video score CSVs exist
//    for at least one normal and one anomalous clip.

bool criterion_score_separation(std::string& detail) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    bool ok = true;
    for (int i = 0; i < kBenchSeeds; ++i) {
        const BenchRun& r = g_bench.past[static_cast<size_t>(i)];
        os << (i ? ", " : "") << "seed " << (i + 1) << ": " << r.mean_normal << " vs "
           << r.mean_anomalous;
        ok = ok && r.mean_normal > r.mean_anomalous;
    }
    const fs::path dir = g_bench.past.front().eval_dir;
    bool have_normal = fs::exists(dir / "scores_normal_0000.csv");
    bool have_anomalous = fs::exists(dir / "scores_hotspot_0000.csv");
    if (!have_normal || !have_anomalous) {
        os << " (score CSVs missing under " << dir.string() << ")";
        ok = false;
    }
    detail = os.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 9. CLI determinism: synth / train --epochs 1 / eval twice with fixed seeds
//    in single-thread mode produce byte-identical CSVs. train.csv is compared
//    with its wall-clock seconds column stripped.

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string drop_last_field(const std::string& csv) {
    std::ostringstream os;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        size_t pos = line.rfind(',');
        os << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
    }
    return os.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    int rc = std::system(cmd.c_str());
    return rc;
}

bool criterion_cli_determinism(std::string& detail) {
    fs::path root = g_artifacts / "determinism";
    fs::remove_all(root);

    for (const char* runs : {"run1", "run2"}) {
        fs::path r = root / runs;
        fs::create_directories(r);
        std::string data = (r / "data").string();
        std::string train_dir = (r / "train").string();
        std::string eval_dir = (r / "eval").string();
        struct Step {
            const char* name;
            std::string args;
        } steps[] = {
            {"synth", "synth --out " + data + " --desk --normal 3 --hotspot 1 --plume 1 --seed 7"},
            {"train", "train --out " + train_dir + " --desk --data " + data +
                          " --epochs 1 --batch 2 --base-width 8 --seed 3"},
            {"eval", "eval --checkpoint " + train_dir + "/checkpoint.fckp --data " + data +
                         " --out " + eval_dir + " --seed 5 --workers 1"},
        };
        for (const Step& s : steps) {
            int rc = run_cli(s.args, r / (std::string(s.name) + ".log"));
            if (rc != 0) {
                detail = std::string(runs) + " " + s.name + " exited with " + std::to_string(rc);
                return false;
            }
        }
    }

    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(root / "run1")) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.size() > 4 && name.compare(name.size() - 4, 4, ".csv") == 0)
            rel.push_back(fs::relative(e.path(), root / "run1"));
        if (name == "summary.txt") rel.push_back(fs::relative(e.path(), root / "run1"));
    }
    std::sort(rel.begin(), rel.end());
    if (rel.empty()) {
        detail = "no CSV outputs found";
        return false;
    }

    int compared = 0;
    for (const fs::path& p : rel) {
        fs::path a = root / "run1" / p, b = root / "run2" / p;
        if (!fs::exists(b)) {
            detail = p.string() + " missing from the second run";
            return false;
        }
        std::string ca = read_file(a), cb = read_file(b);
        if (p.filename() == "train.csv") {
            ca = drop_last_field(ca);
            cb = drop_last_field(cb);
        }
        if (ca != cb) {
            detail = p.string() + " differs between runs";
            return false;
        }
        ++compared;
    }
    detail = std::to_string(compared) +
             " files byte-identical (train.csv modulo the wall-clock column)";
    return true;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 = no per-criterion budget
    bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "gradient-checks", 120.0, criterion_gradchecks},
    {2, "forward-noise-statistics", 60.0, criterion_forward_stats},
    {3, "reconstruction-oracle", 60.0, criterion_reconstruction_oracle},
    {4, "auc-pairwise-oracle", 60.0, criterion_auc_oracle},
    {5, "window-coverage", 10.0, criterion_window_coverage},
    {6, "desk-benchmark-auc", 3600.0, criterion_benchmark_auc},
    {7, "conditioning-ablation", 0.0, criterion_conditioning_ablation},
    {8, "score-separation", 0.0, criterion_score_separation},
    {9, "cli-determinism", 0.0, criterion_cli_determinism},
};

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <cli-binary> [criterion numbers...]\n", argv[0]);
        return 64;
    }
    g_cli = argv[1];

    std::set<int> selected;
    for (int i = 2; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (!selected.empty() && (selected.count(7) || selected.count(8)))
        selected.insert(6);  // criteria 7 and 8 reuse the models trained for 6

    fs::remove_all(g_artifacts);
    fs::create_directories(g_artifacts);

    int failures = 0;
    for (const Criterion& c : kCriteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        std::string detail;
        bool ok = false;
        auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double dt = seconds_since(t0);
        if (ok && c.budget_s > 0.0 && dt > c.budget_s) {
            ok = false;
            detail += " [over time budget]";
        }
        if (c.budget_s > 0.0)
            std::printf("[%s] %d %s: %s (%.1fs, limit %.0fs)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                        detail.c_str(), dt, c.budget_s);
        else
            std::printf("[%s] %d %s: %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                        detail.c_str(), dt);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    std::printf("%d criteria failed\n", failures);
    return failures;
}
