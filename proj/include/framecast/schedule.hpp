#pragma once

#include <functional>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

// Linear-beta diffusion schedule. Coefficients are stored in double and all
// scalar schedule math happens in double regardless of the tensor dtype.
// Step indices t are 1-based (t in 1..T); alpha_bar(0) is defined as 1.
struct DiffusionSchedule {
    int T = 0;
    double beta_start = 1e-4;
    double beta_end = 0.075;
    std::vector<double> betas;            // betas[t-1]
    std::vector<double> alphas;           // 1 - beta
    std::vector<double> alpha_bars;       // running product of alphas
    std::vector<double> posterior_betas;  // beta_tilde, zero at t=1

    double beta(int t) const { return betas.at(static_cast<size_t>(t - 1)); }
    double alpha(int t) const { return alphas.at(static_cast<size_t>(t - 1)); }
    double alpha_bar(int t) const {
        return t == 0 ? 1.0 : alpha_bars.at(static_cast<size_t>(t - 1));
    }
    double posterior_beta(int t) const { return posterior_betas.at(static_cast<size_t>(t - 1)); }

    void check_t(int t, const char* op) const;
};

DiffusionSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.075);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
// Schedule ops never record onto the tape: the loss differentiates the
// denoiser's prediction, not the corruption of its inputs.
Tensor forward_sample(const DiffusionSchedule& s, const Tensor& x0, int t, const Tensor& eps);

// x0_hat = (x_t - sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t).
Tensor estimate_x0(const DiffusionSchedule& s, const Tensor& xt, const Tensor& eps_hat, int t);

// Posterior q(x_{t-1} | x_t, x0): returns the mean and the variance
// beta_tilde_t. t = 1 yields (x0, 0) exactly.
std::pair<Tensor, double> posterior_params(const DiffusionSchedule& s, const Tensor& xt,
                                           const Tensor& x0, int t);

// One ancestral step: clamps the x0 estimate to [-1,1], forms the posterior
// mean, adds sqrt(beta_tilde) * noise. At t = 1 the step is deterministic and
// nonzero noise is a usage error.
Tensor ddpm_step(const DiffusionSchedule& s, const Tensor& xt, const Tensor& eps_hat, int t,
                 const Tensor& noise);

// Denoiser callback: predicts eps from (x_t, conditioning, t).
using DenoiseFn = std::function<Tensor(const Tensor& xt, const Tensor& cond, int t)>;

// Full ancestral chain from x_T ~ N(0, I) down to the final clamped estimate.
// All randomness comes from `rng`, so a seed fixes the output bitwise.
Tensor sample(const DiffusionSchedule& s, const DenoiseFn& denoise, const Tensor& cond,
              const Shape& out_shape, Rng& rng);

}  // namespace framecast
