#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "framecast/predictor.hpp"

using namespace framecast;

namespace {

VideoClip make_clip(uint64_t seed, AnomalyKind kind = AnomalyKind::none) {
    SynthConfig cfg;
    cfg.seed = seed;
    if (kind != AnomalyKind::none) {
        cfg.anomaly = kind;
        cfg.onset = 6;
    }
    return synth_clip(cfg);
}

}  // namespace

TEST_CASE("window plan for the default layout") {
    // F=14, p=2, k=5: three windows, the last one partial.
    std::vector<PredictionWindow> plan = plan_windows(14, 2, 5, 0);
    REQUIRE(plan.size() == 3);
    CHECK(plan[0].cond_indices == std::vector<int>{0, 1});
    CHECK(plan[0].predict_indices == std::vector<int>{2, 3, 4, 5, 6});
    CHECK(plan[1].cond_indices == std::vector<int>{5, 6});
    CHECK(plan[1].predict_indices == std::vector<int>{7, 8, 9, 10, 11});
    CHECK(plan[2].cond_indices == std::vector<int>{10, 11});
    CHECK(plan[2].predict_indices == std::vector<int>{12, 13});
}

TEST_CASE("window plan with future conditioning") {
    // F=14, p=2, k=3, f=2: cond = 2 past + 2 future around each 3-frame gap.
    std::vector<PredictionWindow> plan = plan_windows(14, 2, 3, 2);
    REQUIRE(plan.size() >= 2);
    CHECK(plan[0].cond_indices == std::vector<int>{0, 1, 5, 6});
    CHECK(plan[0].predict_indices == std::vector<int>{2, 3, 4});
    CHECK(plan[1].cond_indices == std::vector<int>{3, 4, 8, 9});
    CHECK(plan[1].predict_indices == std::vector<int>{5, 6, 7});
    // The trailing window shrinks so its future frames stay observable.
    const PredictionWindow& last = plan.back();
    for (int idx : last.cond_indices) CHECK(idx < 14);
    CHECK(last.predict_indices.back() < 12);
}

TEST_CASE("single exact window") {
    std::vector<PredictionWindow> plan = plan_windows(7, 2, 5, 0);
    REQUIRE(plan.size() == 1);
    CHECK(plan[0].cond_indices == std::vector<int>{0, 1});
    CHECK(plan[0].predict_indices == std::vector<int>{2, 3, 4, 5, 6});
}

TEST_CASE("window plans cover exactly the predictable frames") {
    for (int f : {0, 2}) {
        for (int p = 1; p <= 5; ++p) {
            for (int k = 1; k <= 8; ++k) {
                for (int F = p + 1 + f; F <= 50; ++F) {
                    std::vector<PredictionWindow> plan = plan_windows(F, p, k, f);
                    std::set<int> predicted;
                    for (const PredictionWindow& w : plan) {
                        REQUIRE(static_cast<int>(w.cond_indices.size()) == p + f);
                        REQUIRE_FALSE(w.predict_indices.empty());
                        REQUIRE(static_cast<int>(w.predict_indices.size()) <= k);
                        for (int idx : w.cond_indices) {
                            REQUIRE(idx >= 0);
                            REQUIRE(idx < F);
                        }
                        for (size_t i = 0; i < w.predict_indices.size(); ++i) {
                            int idx = w.predict_indices[i];
                            REQUIRE(idx >= p);
                            REQUIRE(idx < F - f);
                            // Disjoint across windows.
                            REQUIRE(predicted.insert(idx).second);
                            if (i > 0) REQUIRE(idx == w.predict_indices[i - 1] + 1);
                        }
                        // Past conditioning frames immediately precede the gap.
                        for (int i = 0; i < p; ++i)
                            REQUIRE(w.cond_indices[static_cast<size_t>(i)] ==
                                    w.predict_indices.front() - p + i);
                        // Future conditioning frames immediately follow it.
                        for (int i = 0; i < f; ++i)
                            REQUIRE(w.cond_indices[static_cast<size_t>(p + i)] ==
                                    w.predict_indices.back() + 1 + i);
                    }
                    // Exhaustive: every frame in [p, F-f) is predicted once.
                    REQUIRE(static_cast<int>(predicted.size()) == F - p - f);
                }
            }
        }
    }
    CHECK_THROWS_AS(plan_windows(2, 2, 5, 0), UsageError);
    CHECK_THROWS_AS(plan_windows(4, 2, 3, 2), UsageError);
    CHECK_THROWS_AS(plan_windows(14, 0, 5, 0), UsageError);
    CHECK_THROWS_AS(plan_windows(14, 2, 0, 0), UsageError);
}

TEST_CASE("oracle reconstruction through the full pipeline") {
    VideoClip clip = make_clip(404, AnomalyKind::hotspot);
    Tensor f64_frames = clip.frames.to(DType::f64);
    VideoClip clip64 = clip;
    clip64.frames = f64_frames;

    DiffusionSchedule sched = make_linear_schedule(100);
    PredictOptions opt;
    opt.seed = 5;
    WindowDenoiserFactory oracle_factory = [&sched](const PredictionWindow&,
                                                    const Tensor& true_target) {
        return make_oracle_denoiser(sched, true_target);
    };
    PredictedClip out = predict_clip(clip64, sched, oracle_factory, opt);

    CHECK(out.frames.shape() == clip64.frames.shape());
    REQUIRE(out.generated.size() == static_cast<size_t>(clip.F()));
    CHECK(out.generated[0] == 0);
    CHECK(out.generated[1] == 0);
    for (int fi = 2; fi < clip.F(); ++fi) CHECK(out.generated[static_cast<size_t>(fi)] == 1);

    int64_t per_frame = clip64.frames.numel() / clip.F();
    double linf = 0.0;
    for (int64_t i = 0; i < clip64.frames.numel(); ++i) {
        double d = std::fabs(out.frames.at(i) - clip64.frames.at(i));
        if (i < 2 * per_frame)
            CHECK(d == 0.0);  // conditioning frames are copied, not generated
        else
            linf = std::max(linf, d);
    }
    CHECK(linf <= 1e-2);
}

TEST_CASE("prediction is reproducible for a fixed seed") {
    VideoClip clip = make_clip(17);
    DiffusionSchedule sched = make_linear_schedule(20);
    UNetConfig ucfg;
    ucfg.base_width = 8;
    ucfg.groups = 4;
    ucfg.heads = 2;
    ucfg.time_embed_dim = 16;
    ucfg.spade_hidden = 8;
    DenoiserModel model(ucfg, DType::f32, 3);

    PredictOptions opt;
    opt.seed = 9;
    PredictedClip a = predict_clip(clip, sched, model, opt);
    PredictedClip b = predict_clip(clip, sched, model, opt);
    for (int64_t i = 0; i < a.frames.numel(); ++i) CHECK(a.frames.at(i) == b.frames.at(i));

    opt.seed = 10;
    PredictedClip c = predict_clip(clip, sched, model, opt);
    double diff = 0;
    for (int64_t i = 0; i < a.frames.numel(); ++i)
        diff = std::max(diff, std::fabs(a.frames.at(i) - c.frames.at(i)));
    CHECK(diff > 1e-4);
}

TEST_CASE("model and options must agree on the conditioning layout") {
    VideoClip clip = make_clip(17);
    DiffusionSchedule sched = make_linear_schedule(10);
    UNetConfig ucfg;
    ucfg.base_width = 8;
    ucfg.groups = 4;
    ucfg.heads = 2;
    ucfg.time_embed_dim = 16;
    ucfg.spade_hidden = 8;
    ucfg.p = 2;
    ucfg.k = 5;
    ucfg.f = 0;
    DenoiserModel model(ucfg, DType::f32, 3);

    PredictOptions opt;
    opt.pred_frames = 3;
    opt.future_frames = 2;
    CHECK_THROWS_AS(predict_clip(clip, sched, model, opt), ConfigError);
}

TEST_CASE("information flows only through the conditioning frames") {
    // With an oracle denoiser the output tracks the target frames; scrambling
    // frame labels must not change anything the predictor produces.
    VideoClip clip = make_clip(88, AnomalyKind::plume);
    clip.frames = clip.frames.to(DType::f64);
    DiffusionSchedule sched = make_linear_schedule(50);
    PredictOptions opt;
    opt.seed = 21;
    WindowDenoiserFactory factory = [&sched](const PredictionWindow&, const Tensor& target) {
        return make_oracle_denoiser(sched, target);
    };
    PredictedClip before = predict_clip(clip, sched, factory, opt);

    VideoClip permuted = clip;
    std::reverse(permuted.labels.begin(), permuted.labels.end());
    PredictedClip after = predict_clip(permuted, sched, factory, opt);
    for (int64_t i = 0; i < before.frames.numel(); ++i)
        CHECK(before.frames.at(i) == after.frames.at(i));
}
