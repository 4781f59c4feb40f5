#include <cmath>
#include <set>
#include <thread>

#include "doctest.h"
#include "framecast/denoiser.hpp"
#include "framecast/ops.hpp"
#include "gradcheck.hpp"

using namespace framecast;

namespace {

UNetConfig tiny_config() {
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

}  // namespace

TEST_CASE("time embedding values") {
    Tensor e0 = time_embedding_raw(0, 8, DType::f64);
    CHECK(e0.shape() == Shape{1, 8});
    for (int i = 0; i < 8; i += 2) {
        CHECK(e0.at(i) == 1.0);
        CHECK(e0.at(i + 1) == 0.0);
    }

    Tensor e5 = time_embedding_raw(5, 8, DType::f64);
    double f1 = std::pow(10000.0, -2.0 / 8.0);
    double f4 = std::pow(10000.0, -8.0 / 8.0);
    CHECK(e5.at(0) == doctest::Approx(std::cos(5.0 * f1)).epsilon(1e-14));
    CHECK(e5.at(1) == doctest::Approx(std::sin(5.0 * f1)).epsilon(1e-14));
    CHECK(e5.at(6) == doctest::Approx(std::cos(5.0 * f4)).epsilon(1e-14));
    CHECK(e5.at(7) == doctest::Approx(std::sin(5.0 * f4)).epsilon(1e-14));

    CHECK_THROWS_AS(time_embedding_raw(1, 7, DType::f64), ConfigError);
    CHECK_THROWS_AS(time_embedding_raw(1, 0, DType::f64), ConfigError);
}

TEST_CASE("time embeddings distinguish every step") {
    std::vector<Tensor> embs;
    for (int t = 1; t <= 100; ++t) embs.push_back(time_embedding_raw(t, 16, DType::f64));
    for (size_t a = 0; a < embs.size(); ++a) {
        for (size_t b = a + 1; b < embs.size(); ++b) {
            double linf = 0.0;
            for (int64_t i = 0; i < 16; ++i)
                linf = std::max(linf, std::fabs(embs[a].at(i) - embs[b].at(i)));
            CHECK(linf > 1e-6);
        }
    }
}

TEST_CASE("spade with zero modulation heads is plain group norm") {
    Rng rng(31);
    Tensor x = Tensor::randn({2, 4, 5, 5}, rng, DType::f64);
    Tensor cond = Tensor::randn({2, 3, 5, 5}, rng, DType::f64);
    SpadeParams sp;
    sp.shared_w = Tensor::randn({4, 3, 3, 3}, rng, DType::f64);
    sp.shared_b = Tensor::zeros({4}, DType::f64);
    sp.gamma_w = Tensor::zeros({4, 4, 3, 3}, DType::f64);
    sp.gamma_b = Tensor::zeros({4}, DType::f64);
    sp.beta_w = Tensor::zeros({4, 4, 3, 3}, DType::f64);
    sp.beta_b = Tensor::zeros({4}, DType::f64);

    Tensor got = spade_norm(x, cond, sp, 2);
    Tensor ones = Tensor::full({4}, 1.0, DType::f64);
    Tensor zeros = Tensor::zeros({4}, DType::f64);
    Tensor want = group_norm(x, 2, ones, zeros, 1e-5);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got.at(i) == want.at(i));

    // Constant bias heads act as an affine on the normalized features.
    for (int64_t c = 0; c < 4; ++c) {
        sp.gamma_b.set(c, 0.5);
        sp.beta_b.set(c, -0.25);
    }
    Tensor shifted = spade_norm(x, cond, sp, 2);
    for (int64_t i = 0; i < shifted.numel(); ++i)
        CHECK(shifted.at(i) == doctest::Approx(want.at(i) * 1.5 - 0.25).epsilon(1e-12));

    Tensor bad_cond = Tensor::randn({2, 3, 4, 4}, rng, DType::f64);
    CHECK_THROWS_AS(spade_norm(x, bad_cond, sp, 2), DimensionError);
}

TEST_CASE("model predicts exactly zero noise at initialization") {
    DenoiserModel model(tiny_config(), DType::f64, 5);
    Rng rng(9);
    Tensor noisy = Tensor::randn({2, 2, 4, 4}, rng, DType::f64);
    Tensor cond = Tensor::randn({2, 1, 4, 4}, rng, DType::f64);
    NoGradGuard ng;
    Tensor out = model.forward(noisy, cond, 3);
    CHECK(out.shape() == noisy.shape());
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);

    // Against standard-normal targets the initial loss is the mean of eps^2.
    Tensor eps = Tensor::randn({8, 2, 8, 8}, rng, DType::f64);
    Tensor zero_pred = Tensor::zeros(eps.shape(), DType::f64);
    double loss = mse(zero_pred, eps).at(0);
    CHECK(loss > 0.85);
    CHECK(loss < 1.15);
}

TEST_CASE("forward validates shapes") {
    DenoiserModel model(tiny_config(), DType::f64, 5);
    NoGradGuard ng;
    Rng rng(9);
    Tensor noisy = Tensor::randn({1, 2, 4, 4}, rng, DType::f64);
    Tensor cond = Tensor::randn({1, 1, 4, 4}, rng, DType::f64);
    CHECK_THROWS_AS(model.forward(Tensor::randn({1, 3, 4, 4}, rng, DType::f64), cond, 1),
                    DimensionError);
    CHECK_THROWS_AS(model.forward(noisy, Tensor::randn({1, 2, 4, 4}, rng, DType::f64), 1),
                    DimensionError);
    CHECK_THROWS_AS(
        model.forward(Tensor::randn({1, 2, 5, 5}, rng, DType::f64),
                      Tensor::randn({1, 1, 5, 5}, rng, DType::f64), 1),
        DimensionError);
}

TEST_CASE("config validation") {
    UNetConfig cfg = tiny_config();
    cfg.groups = 3;  // does not divide width 4
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.channel_multipliers = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.attention_levels = {5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("parameter registry") {
    DenoiserModel small(tiny_config(), DType::f32, 1);
    UNetConfig wider = tiny_config();
    wider.base_width = 8;
    DenoiserModel big(wider, DType::f32, 1);
    CHECK(big.parameter_count() > small.parameter_count());
    CHECK(small.parameter_count() > 0);

    std::set<std::string> names(small.parameter_names().begin(), small.parameter_names().end());
    CHECK(names.size() == small.parameter_names().size());
    CHECK(small.parameters().size() == small.parameter_names().size());

    Tensor stem = small.parameter("stem.w");
    CHECK(stem.shape() == Shape{4, 3, 3, 3});  // base_width x (k+p) x 3 x 3
    Tensor null_cond = small.parameter("null_cond");
    CHECK(null_cond.shape() == Shape{1});
    CHECK_THROWS_AS(small.parameter("no.such.tensor"), UsageError);
}

TEST_CASE("conditioning dropout") {
    UNetConfig cfg = tiny_config();
    DenoiserModel model(cfg, DType::f64, 5);

    Rng fill(2);
    Tensor cond = Tensor::rand_uniform({4, 1, 3, 3}, 0.5, 1.5, fill, DType::f64);

    SUBCASE("p_drop zero is a no-op and consumes no randomness") {
        Rng a(77), b(77);
        Tensor out = model.drop_condition(cond, 0.0, a);
        CHECK(out.impl_ptr() == cond.impl_ptr());
        CHECK(a.uniform() == b.uniform());
    }

    SUBCASE("p_drop one replaces every sample with the null embedding") {
        Tensor null_cond = model.parameter("null_cond");
        null_cond.set(0, -3.5);
        Rng a(77);
        Tensor out = model.drop_condition(cond, 1.0, a);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == -3.5);
        for (int64_t i = 0; i < cond.numel(); ++i) CHECK(cond.at(i) > 0.0);
    }

    SUBCASE("drop rate matches p_drop") {
        Rng a(123);
        Tensor wide = Tensor::full({2000, 1, 1, 1}, 1.0, DType::f64);
        Tensor out = model.drop_condition(wide, 0.3, a);
        int dropped = 0;
        for (int64_t n = 0; n < 2000; ++n)
            if (out.at(n) != 1.0) ++dropped;
        double frac = dropped / 2000.0;
        double se = std::sqrt(0.3 * 0.7 / 2000.0);
        CHECK(std::fabs(frac - 0.3) < 4.0 * se);
    }

    SUBCASE("invalid arguments") {
        Rng a(1);
        CHECK_THROWS_AS(model.drop_condition(cond, -0.1, a), ConfigError);
        CHECK_THROWS_AS(model.drop_condition(cond, 1.5, a), ConfigError);
        Tensor bad = Tensor::zeros({4, 2, 3, 3}, DType::f64);
        CHECK_THROWS_AS(model.drop_condition(bad, 0.5, a), DimensionError);
    }
}

TEST_CASE("full model finite-difference gradient check") {
    for (uint64_t seed : {11u, 12u}) {
        DenoiserModel model(tiny_config(), DType::f64, seed);
        // Zero-initialized heads gate several paths; nudge every parameter so
        // each branch carries signal through the check.
        Rng jitter(seed + 100);
        for (Tensor& p : model.parameters())
            for (int64_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 0.05 * jitter.normal());

        Rng rng(seed + 200);
        Tensor noisy = Tensor::randn({2, 2, 4, 4}, rng, DType::f64);
        Tensor cond = Tensor::randn({2, 1, 4, 4}, rng, DType::f64);
        Tensor target = Tensor::randn({2, 2, 4, 4}, rng, DType::f64);

        testing::GradcheckOptions opt;
        opt.max_coords = 2;
        opt.sample_seed = seed;
        auto res = testing::gradcheck(
            [&]() { return mse(model.forward(noisy, cond, 3), target); }, model.parameters(), opt);
        INFO(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("forward is reusable across threads") {
    DenoiserModel model(tiny_config(), DType::f64, 5);
    Rng jitter(7);
    for (Tensor& p : model.parameters())
        for (int64_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 0.05 * jitter.normal());

    Rng rng(8);
    Tensor noisy = Tensor::randn({1, 2, 4, 4}, rng, DType::f64);
    Tensor cond = Tensor::randn({1, 1, 4, 4}, rng, DType::f64);
    Tensor serial;
    {
        NoGradGuard ng;
        serial = model.forward(noisy, cond, 2);
    }

    std::vector<Tensor> results(4);
    std::vector<std::thread> pool;
    for (int i = 0; i < 4; ++i) {
        pool.emplace_back([&, i]() {
            NoGradGuard ng;
            results[static_cast<size_t>(i)] = model.forward(noisy, cond, 2);
        });
    }
    for (auto& th : pool) th.join();
    for (const Tensor& r : results)
        for (int64_t i = 0; i < r.numel(); ++i) CHECK(r.at(i) == serial.at(i));
}
