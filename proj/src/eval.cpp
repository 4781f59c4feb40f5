#include "framecast/eval.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace framecast {

namespace {

// Maps one frame of a [F,C,H,W] clip tensor from [-1,1] to a [0,1] image.
Tensor frame01(const Tensor& frames, int index) {
    int64_t C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
    int64_t per_frame = C * H * W;
    Tensor out = Tensor::zeros({C, H, W}, DType::f32);
    const float* src = frames.ptr<float>() + index * per_frame;
    float* dst = out.ptr<float>();
    for (int64_t i = 0; i < per_frame; ++i) dst[i] = (src[i] + 1.0f) * 0.5f;
    return out;
}

ScoreSeries score_one_clip(const VideoClip& clip, const DiffusionSchedule& sched,
                           const DenoiserModel* model, const EvalConfig& cfg, uint64_t clip_seed) {
    PredictOptions opt;
    opt.past_frames = cfg.past_frames;
    opt.pred_frames = cfg.pred_frames;
    opt.future_frames = cfg.future_frames;
    opt.seed = clip_seed;
    opt.autoregressive = cfg.autoregressive;

    PredictedClip pred;
    if (cfg.oracle) {
        pred = predict_clip(
            clip, sched,
            [&sched](const PredictionWindow&, const Tensor& true_target) {
                return make_oracle_denoiser(sched, true_target);
            },
            opt);
    } else {
        pred = predict_clip(clip, sched, *model, opt);
    }

    ScoreSeries s;
    s.video_id = clip.id;
    for (int i = 0; i < clip.F(); ++i) {
        if (!pred.generated[static_cast<size_t>(i)]) continue;
        s.frame_indices.push_back(i);
        s.psnr_db.push_back(psnr(frame01(clip.frames, i), frame01(pred.frames, i)));
        s.labels.push_back(clip.labels[static_cast<size_t>(i)]);
    }
    s.regular = regular_score(s.psnr_db);
    s.predicted = classify(s.regular, cfg.threshold);
    return s;
}

// Seeds follow the clip's identity, not its position, so reordering or
// partitioning the dataset never changes a clip's prediction stream.
uint64_t clip_stream(uint64_t seed, const VideoClip& clip) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : clip.id) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return Rng::mix(seed, h);
}

}  // namespace

EvalResult evaluate(const std::vector<VideoClip>& clips, const DiffusionSchedule& sched,
                    const DenoiserModel* model, const EvalConfig& cfg) {
    if (clips.empty()) throw DataError("evaluate: no clips");
    if (!cfg.oracle && model == nullptr) throw UsageError("evaluate: model required unless oracle mode");
    if (cfg.workers < 1) throw ConfigError("evaluate: workers must be >= 1");
    if (cfg.threshold < 0.0 || cfg.threshold > 1.0)
        throw ConfigError("evaluate: threshold must be in [0,1]");

    EvalResult res;
    res.series.resize(clips.size());

    int workers = std::min<int>(cfg.workers, static_cast<int>(clips.size()));
    if (workers == 1) {
        for (size_t i = 0; i < clips.size(); ++i)
            res.series[i] = score_one_clip(clips[i], sched, model, cfg,
                                           clip_stream(cfg.seed, clips[i]));
    } else {
        std::atomic<size_t> next{0};
        std::mutex err_mu;
        std::exception_ptr first_error;
        auto worker = [&]() {
            NoGradGuard guard;  // per-thread tape suspension
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= clips.size()) return;
                try {
                    res.series[i] = score_one_clip(clips[i], sched, model, cfg,
                                                   clip_stream(cfg.seed, clips[i]));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::vector<double> all_scores;
    std::vector<int> all_labels;
    double normal_acc = 0.0, anom_acc = 0.0;
    for (size_t i = 0; i < clips.size(); ++i) {
        const ScoreSeries& s = res.series[i];
        all_scores.insert(all_scores.end(), s.regular.begin(), s.regular.end());
        all_labels.insert(all_labels.end(), s.labels.begin(), s.labels.end());
        double mean = 0.0;
        for (double v : s.regular) mean += v;
        mean /= static_cast<double>(s.regular.size());
        if (clips[i].has_anomaly()) {
            anom_acc += mean;
            ++res.n_anomalous_videos;
        } else {
            normal_acc += mean;
            ++res.n_normal_videos;
        }
    }
    if (res.n_normal_videos > 0) res.mean_normal_video_score = normal_acc / res.n_normal_videos;
    if (res.n_anomalous_videos > 0)
        res.mean_anomalous_video_score = anom_acc / res.n_anomalous_videos;

    res.roc = roc_auc(all_scores, all_labels);
    return res;
}

std::string write_eval_outputs(const std::string& out_dir, const EvalResult& result) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("write_eval_outputs: cannot create " + out_dir + ": " + ec.message());
    for (const ScoreSeries& s : result.series)
        write_score_csv((std::filesystem::path(out_dir) / ("scores_" + s.video_id + ".csv")).string(),
                        s);
    write_roc_csv((std::filesystem::path(out_dir) / "roc.csv").string(), result.roc);

    char line[256];
    std::snprintf(line, sizeof(line), "AUC=%.6f", result.roc.auc);
    std::string summary_line(line);

    std::ofstream summary(std::filesystem::path(out_dir) / "summary.txt", std::ios::trunc);
    if (!summary) throw IoError("write_eval_outputs: cannot write summary.txt");
    summary << summary_line << "\n";
    std::snprintf(line, sizeof(line), "mean_regular_score_normal=%.6f\n",
                  result.mean_normal_video_score);
    summary << line;
    std::snprintf(line, sizeof(line), "mean_regular_score_anomalous=%.6f\n",
                  result.mean_anomalous_video_score);
    summary << line;
    std::snprintf(line, sizeof(line), "videos=%zu normal=%d anomalous=%d\n", result.series.size(),
                  result.n_normal_videos, result.n_anomalous_videos);
    summary << line;
    return summary_line;
}

}  // namespace framecast
