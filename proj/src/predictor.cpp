#include "framecast/predictor.hpp"

#include <algorithm>
#include <cmath>

namespace framecast {

std::vector<PredictionWindow> plan_windows(int F, int p, int k, int f) {
    if (p < 1 || k < 1 || f < 0) throw UsageError("plan_windows: need p >= 1, k >= 1, f >= 0");
    if (F < p + 1 + f)
        throw UsageError("plan_windows: " + std::to_string(F) + " frames cannot fit p=" +
                         std::to_string(p) + " conditioning frames plus a predicted frame" +
                         (f > 0 ? " plus f=" + std::to_string(f) + " future frames" : ""));
    std::vector<PredictionWindow> plan;
    int limit = F - f;
    int pos = p;
    while (pos < limit) {
        int kk = std::min(k, limit - pos);
        PredictionWindow w;
        for (int i = pos - p; i < pos; ++i) w.cond_indices.push_back(i);
        for (int i = 0; i < f; ++i) w.cond_indices.push_back(pos + kk + i);
        for (int i = pos; i < pos + kk; ++i) w.predict_indices.push_back(i);
        plan.push_back(std::move(w));
        pos += kk;
    }
    return plan;
}

DenoiseFn make_model_denoiser(const DenoiserModel& model) {
    return [&model](const Tensor& xt, const Tensor& cond, int t) {
        return model.forward(xt, cond, t);
    };
}

DenoiseFn make_oracle_denoiser(const DiffusionSchedule& sched, const Tensor& x0_true) {
    Tensor x0 = x0_true.clone();
    return [sched, x0](const Tensor& xt, const Tensor& /*cond*/, int t) {
        sched.check_t(t, "oracle denoiser");
        if (xt.shape() != x0.shape())
            throw DimensionError("oracle denoiser: x_t shape " + shape_str(xt.shape()) +
                                 " does not match the clean signal " + shape_str(x0.shape()));
        double ab = sched.alpha_bar(t);
        double sq_ab = std::sqrt(ab);
        double inv = 1.0 / std::sqrt(1.0 - ab);
        Tensor out = Tensor::zeros(xt.shape(), xt.dtype());
        for (int64_t i = 0; i < out.numel(); ++i) out.set(i, (xt.at(i) - sq_ab * x0.at(i)) * inv);
        return out;
    };
}

namespace {

// Gathers whole frames (as channel blocks) into a [1, n*C, H, W] tensor.
Tensor gather_frames(const Tensor& frames, const std::vector<int>& indices) {
    int64_t C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
    int64_t per_frame = C * H * W;
    Tensor out = Tensor::zeros({1, static_cast<int64_t>(indices.size()) * C, H, W}, frames.dtype());
    for (size_t j = 0; j < indices.size(); ++j)
        for (int64_t e = 0; e < per_frame; ++e)
            out.set(static_cast<int64_t>(j) * per_frame + e, frames.at(indices[j] * per_frame + e));
    return out;
}

}  // namespace

PredictedClip predict_clip(const VideoClip& clip, const DiffusionSchedule& sched,
                           const WindowDenoiserFactory& factory, const PredictOptions& opt) {
    int F = clip.F();
    int64_t C = clip.C(), H = clip.H(), W = clip.W();
    std::vector<PredictionWindow> plan =
        plan_windows(F, opt.past_frames, opt.pred_frames, opt.future_frames);

    PredictedClip out;
    out.frames = clip.frames.clone();
    out.generated.assign(static_cast<size_t>(F), 0);
    int64_t per_frame = C * H * W;

    for (size_t widx = 0; widx < plan.size(); ++widx) {
        const PredictionWindow& w = plan[widx];
        Tensor cond = gather_frames(opt.autoregressive ? out.frames : clip.frames, w.cond_indices);

        // Ground truth for the window, padded to the full k frames the
        // denoiser always emits.
        std::vector<int> padded = w.predict_indices;
        while (static_cast<int>(padded.size()) < opt.pred_frames) padded.push_back(padded.back());
        Tensor true_target = gather_frames(clip.frames, padded);

        DenoiseFn denoise = factory(w, true_target);
        Rng rng(Rng::mix(opt.seed, static_cast<uint64_t>(widx)));
        Tensor sampled = sample(sched, denoise, cond,
                                {1, static_cast<int64_t>(opt.pred_frames) * C, H, W}, rng);

        for (size_t j = 0; j < w.predict_indices.size(); ++j) {
            int fi = w.predict_indices[j];
            for (int64_t e = 0; e < per_frame; ++e)
                out.frames.set(fi * per_frame + e,
                               sampled.at(static_cast<int64_t>(j) * per_frame + e));
            out.generated[static_cast<size_t>(fi)] = 1;
        }
    }
    return out;
}

PredictedClip predict_clip(const VideoClip& clip, const DiffusionSchedule& sched,
                           const DenoiserModel& model, const PredictOptions& opt) {
    const UNetConfig& mc = model.config();
    if (mc.p != opt.past_frames || mc.k != opt.pred_frames || mc.f != opt.future_frames)
        throw ConfigError("predict_clip: window layout (p=" + std::to_string(opt.past_frames) +
                          ", k=" + std::to_string(opt.pred_frames) + ", f=" +
                          std::to_string(opt.future_frames) + ") does not match the model (p=" +
                          std::to_string(mc.p) + ", k=" + std::to_string(mc.k) + ", f=" +
                          std::to_string(mc.f) + ")");
    DenoiseFn dn = make_model_denoiser(model);
    return predict_clip(
        clip, sched, [&dn](const PredictionWindow&, const Tensor&) { return dn; }, opt);
}

}  // namespace framecast
