#include "framecast/schedule.hpp"

#include <cmath>

#include "framecast/ops.hpp"

namespace framecast {

void DiffusionSchedule::check_t(int t, const char* op) const {
    if (t < 1 || t > T)
        throw UsageError(std::string(op) + ": t=" + std::to_string(t) + " outside 1.." +
                         std::to_string(T));
}

DiffusionSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_start < 1.0) || !(beta_end > 0.0 && beta_end < 1.0))
        throw ConfigError("schedule: betas must lie in (0,1), got start=" + std::to_string(beta_start) +
                          " end=" + std::to_string(beta_end));
    DiffusionSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    s.posterior_betas.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double b = (T == 1) ? beta_start
                            : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                               static_cast<double>(T - 1);
        s.betas[static_cast<size_t>(i)] = b;
        s.alphas[static_cast<size_t>(i)] = 1.0 - b;
        double prev_bar = prod;
        prod *= 1.0 - b;
        s.alpha_bars[static_cast<size_t>(i)] = prod;
        // beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t; zero at t=1.
        s.posterior_betas[static_cast<size_t>(i)] = (i == 0) ? 0.0 : (1.0 - prev_bar) / (1.0 - prod) * b;
    }
    return s;
}

namespace {

// out = ca * a + cb * b, elementwise, computed in double.
Tensor axpby(const Tensor& a, double ca, const Tensor& b, double cb) {
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    int64_t n = a.numel();
    if (a.dtype() == DType::f32) {
        const float* pa = a.ptr<float>();
        const float* pb = b.ptr<float>();
        float* po = out.ptr<float>();
        for (int64_t i = 0; i < n; ++i)
            po[i] = static_cast<float>(ca * static_cast<double>(pa[i]) +
                                       cb * static_cast<double>(pb[i]));
    } else {
        const double* pa = a.ptr<double>();
        const double* pb = b.ptr<double>();
        double* po = out.ptr<double>();
        for (int64_t i = 0; i < n; ++i) po[i] = ca * pa[i] + cb * pb[i];
    }
    return out;
}

void require_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw DimensionError(std::string(op) + ": dtype mismatch");
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace

Tensor forward_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& eps) {
    s.check_t(t, "forward_sample");
    require_pair(x0, eps, "forward_sample");
    double ab = s.alpha_bar(t);
    return axpby(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

Tensor estimate_x0(const DiffusionSchedule& s, const Tensor& xt, const Tensor& eps_hat, int t) {
    s.check_t(t, "estimate_x0");
    require_pair(xt, eps_hat, "estimate_x0");
    double ab = s.alpha_bar(t);
    double inv = 1.0 / std::sqrt(ab);
    return axpby(xt, inv, eps_hat, -std::sqrt(1.0 - ab) * inv);
}

std::pair<Tensor, double> posterior_params(const DiffusionSchedule& s, const Tensor& xt,
                                           const Tensor& x0, int t) {
    s.check_t(t, "posterior_params");
    require_pair(xt, x0, "posterior_params");
    if (t == 1) return {x0.clone(), 0.0};
    double ab_t = s.alpha_bar(t);
    double ab_prev = s.alpha_bar(t - 1);
    double beta_t = s.beta(t);
    double coef_x0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    double coef_xt = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
    return {axpby(x0, coef_x0, xt, coef_xt), s.posterior_beta(t)};
}

Tensor ddpm_step(const DiffusionSchedule& s, const Tensor& xt, const Tensor& eps_hat, int t,
                 const Tensor& noise) {
    s.check_t(t, "ddpm_step");
    require_pair(xt, noise, "ddpm_step");
    Tensor x0_hat = clamp(estimate_x0(s, xt, eps_hat, t), -1.0, 1.0);
    if (t == 1) {
        int64_t n = noise.numel();
        for (int64_t i = 0; i < n; ++i)
            if (noise.at(i) != 0.0)
                throw UsageError("ddpm_step: t=1 is deterministic, noise must be zero");
        return x0_hat;
    }
    auto [mean, var] = posterior_params(s, xt, x0_hat, t);
    return axpby(mean, 1.0, noise, std::sqrt(var));
}

Tensor sample(const DiffusionSchedule& s, const DenoiseFn& denoise, const Tensor& cond,
              const Shape& out_shape, Rng& rng) {
    NoGradGuard no_grad;
    Tensor xt = Tensor::randn(out_shape, rng, cond.defined() ? cond.dtype() : DType::f32);
    Tensor zero_noise = Tensor::zeros(out_shape, xt.dtype());
    for (int t = s.T; t >= 1; --t) {
        Tensor eps_hat = denoise(xt, cond, t);
        if (eps_hat.shape() != xt.shape())
            throw DimensionError("sample: denoiser returned shape " + shape_str(eps_hat.shape()) +
                                 ", expected " + shape_str(xt.shape()));
        Tensor noise = (t > 1) ? Tensor::randn(out_shape, rng, xt.dtype()) : zero_noise;
        xt = ddpm_step(s, xt, eps_hat, t, noise);
    }
    if (!all_finite(xt)) throw EvalError("sample: non-finite values in generated frames");
    return xt;
}

}  // namespace framecast
