#include <cmath>

#include "doctest.h"
#include "framecast/schedule.hpp"

using namespace framecast;

TEST_CASE("linear schedule frozen values") {
    DiffusionSchedule s = make_linear_schedule(2, 0.1, 0.2);
    CHECK(s.beta(1) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(s.beta(2) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-14));
    // beta_tilde_2 = (1 - ab_1)/(1 - ab_2) * beta_2 = 0.1/0.28 * 0.2
    CHECK(s.posterior_beta(1) == 0.0);
    CHECK(s.posterior_beta(2) == doctest::Approx(0.1 / 0.28 * 0.2).epsilon(1e-14));
}

TEST_CASE("default schedule endpoints and monotonicity") {
    DiffusionSchedule s = make_linear_schedule(100);
    CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-14));
    CHECK(s.beta(100) == doctest::Approx(0.075).epsilon(1e-14));
    double mid = 1e-4 + (0.075 - 1e-4) * 49.0 / 99.0;
    CHECK(s.beta(50) == doctest::Approx(mid).epsilon(1e-12));
    // The default terminal marginal is close to a standard Gaussian, so the
    // ancestral chain can start from pure noise.
    CHECK(s.alpha_bar(100) < 0.025);
    for (int t = 1; t <= 100; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) > 0.0);
        if (t > 1) CHECK(s.posterior_beta(t) < s.beta(t));
    }
    CHECK_THROWS_AS(make_linear_schedule(0), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.5), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), ConfigError);
}

TEST_CASE("single-step schedule") {
    DiffusionSchedule s = make_linear_schedule(1, 0.05, 0.9);
    CHECK(s.T == 1);
    CHECK(s.beta(1) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(s.posterior_beta(1) == 0.0);
}

TEST_CASE("forward_sample hand value and inversion") {
    DiffusionSchedule s = make_linear_schedule(2, 0.1, 0.2);
    Tensor x0 = Tensor::from_data({1}, {1.0}, DType::f64);
    Tensor eps = Tensor::from_data({1}, {0.5}, DType::f64);
    Tensor xt = forward_sample(s, x0, 2, eps);
    CHECK(xt.at(0) == doctest::Approx(std::sqrt(0.72) * 1.0 + std::sqrt(0.28) * 0.5).epsilon(1e-14));

    Rng rng(1);
    Tensor x0r = Tensor::randn({2, 3}, rng, DType::f64);
    Tensor epsr = Tensor::randn({2, 3}, rng, DType::f64);
    for (int t = 1; t <= 2; ++t) {
        Tensor corrupted = forward_sample(s, x0r, t, epsr);
        Tensor rec = estimate_x0(s, corrupted, epsr, t);
        for (int64_t i = 0; i < rec.numel(); ++i)
            CHECK(rec.at(i) == doctest::Approx(x0r.at(i)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(forward_sample(s, x0r, 0, epsr), UsageError);
    CHECK_THROWS_AS(forward_sample(s, x0r, 3, epsr), UsageError);
    CHECK_THROWS_AS(forward_sample(s, x0r, 1, Tensor::zeros({9}, DType::f64)), DimensionError);
}

TEST_CASE("posterior matches hand formula and t=1 branch") {
    DiffusionSchedule s = make_linear_schedule(2, 0.1, 0.2);
    Tensor x0 = Tensor::from_data({2}, {0.3, -0.4}, DType::f64);
    Tensor xt = Tensor::from_data({2}, {0.9, 0.1}, DType::f64);

    auto [mu2, var2] = posterior_params(s, xt, x0, 2);
    double ab1 = 0.9, ab2 = 0.72, b2 = 0.2, a2 = 0.8;
    double c0 = std::sqrt(ab1) * b2 / (1.0 - ab2);
    double ct = std::sqrt(a2) * (1.0 - ab1) / (1.0 - ab2);
    CHECK(mu2.at(0) == doctest::Approx(c0 * 0.3 + ct * 0.9).epsilon(1e-13));
    CHECK(mu2.at(1) == doctest::Approx(c0 * -0.4 + ct * 0.1).epsilon(1e-13));
    CHECK(var2 == doctest::Approx((1.0 - ab1) / (1.0 - ab2) * b2).epsilon(1e-13));

    auto [mu1, var1] = posterior_params(s, xt, x0, 1);
    CHECK(var1 == 0.0);
    CHECK(mu1.at(0) == 0.3);
    CHECK(mu1.at(1) == -0.4);
}

TEST_CASE("ddpm_step semantics") {
    DiffusionSchedule s = make_linear_schedule(2, 0.1, 0.2);
    Tensor xt = Tensor::from_data({1}, {0.6}, DType::f64);
    Tensor eps_hat = Tensor::from_data({1}, {0.2}, DType::f64);
    Tensor z = Tensor::from_data({1}, {-0.7}, DType::f64);

    // Hand-roll: x0 = (xt - sqrt(1-ab2) eps)/sqrt(ab2), clamp, posterior mean, + sqrt(btilde) z.
    double x0 = (0.6 - std::sqrt(0.28) * 0.2) / std::sqrt(0.72);
    double c0 = std::sqrt(0.9) * 0.2 / 0.28;
    double ct = std::sqrt(0.8) * (1.0 - 0.9) / 0.28;
    double want = c0 * x0 + ct * 0.6 + std::sqrt(0.1 / 0.28 * 0.2) * -0.7;
    Tensor out = ddpm_step(s, xt, eps_hat, 2, z);
    CHECK(out.at(0) == doctest::Approx(want).epsilon(1e-13));

    // Noise must be zero at t=1; the step returns the clamped x0 estimate.
    Tensor zero = Tensor::zeros({1}, DType::f64);
    Tensor out1 = ddpm_step(s, xt, eps_hat, 1, zero);
    double x0_t1 = (0.6 - std::sqrt(1.0 - 0.9) * 0.2) / std::sqrt(0.9);
    CHECK(out1.at(0) == doctest::Approx(x0_t1).epsilon(1e-13));
    CHECK_THROWS_AS(ddpm_step(s, xt, eps_hat, 1, z), UsageError);

    // The x0 estimate is clamped into [-1,1] before the posterior.
    Tensor big_eps = Tensor::from_data({1}, {-5.0}, DType::f64);
    Tensor out_clamped = ddpm_step(s, xt, big_eps, 2, zero);
    double mu_clamped = c0 * 1.0 + ct * 0.6;  // x0 estimate > 1 -> clamped to 1
    CHECK(out_clamped.at(0) == doctest::Approx(mu_clamped).epsilon(1e-13));
}

TEST_CASE("sample with residual-noise oracle reconstructs x0") {
    DiffusionSchedule s = make_linear_schedule(100);
    Rng init(7);
    Tensor x0 = Tensor::rand_uniform({1, 2, 3, 3}, -0.9, 0.9, init, DType::f64);
    DenoiseFn oracle = [&s, &x0](const Tensor& xt, const Tensor&, int t) {
        double ab = s.alpha_bar(t);
        Tensor eps = Tensor::zeros(xt.shape(), xt.dtype());
        for (int64_t i = 0; i < xt.numel(); ++i)
            eps.set(i, (xt.at(i) - std::sqrt(ab) * x0.at(i)) / std::sqrt(1.0 - ab));
        return eps;
    };
    Rng rng(3);
    Tensor cond = Tensor::zeros({1, 1, 3, 3}, DType::f64);
    Tensor out = sample(s, oracle, cond, {1, 2, 3, 3}, rng);
    double linf = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i)
        linf = std::max(linf, std::fabs(out.at(i) - x0.at(i)));
    CHECK(linf <= 1e-6);

    // Same seed, same chain.
    Rng rng2(3);
    Tensor out2 = sample(s, oracle, cond, {1, 2, 3, 3}, rng2);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == out2.at(i));

    // A denoiser returning the wrong shape is rejected.
    DenoiseFn bad = [](const Tensor& xt, const Tensor&, int) {
        return Tensor::zeros({1, 1, 1, 1}, xt.dtype());
    };
    Rng rng3(4);
    CHECK_THROWS_AS(sample(s, bad, cond, {1, 2, 3, 3}, rng3), DimensionError);
}
