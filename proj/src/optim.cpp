#include "framecast/optim.hpp"

#include <cmath>

namespace framecast {

void AdamState::init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.push_back(Tensor::zeros(p.shape(), p.dtype()));
        v.push_back(Tensor::zeros(p.shape(), p.dtype()));
    }
    step_count = 0;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size())
        throw UsageError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size())
        throw UsageError("adam_step: state initialized for a different parameter list");
    state.step_count += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        if (!g.defined()) throw UsageError("adam_step: missing gradient for parameter " + std::to_string(i));
        if (g.shape() != p.shape() || g.dtype() != p.dtype())
            throw DimensionError("adam_step: gradient shape/dtype mismatch for parameter " +
                                 std::to_string(i));
        Tensor& mi = state.m[i];
        Tensor& vi = state.v[i];
        int64_t n = p.numel();
        if (p.dtype() == DType::f32) {
            float* pp = p.ptr<float>();
            const float* pg = g.ptr<float>();
            float* pm = mi.ptr<float>();
            float* pv = vi.ptr<float>();
            float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
            float lr = static_cast<float>(state.lr), eps = static_cast<float>(state.eps);
            float c1 = static_cast<float>(1.0 / bc1), c2 = static_cast<float>(1.0 / bc2);
            for (int64_t j = 0; j < n; ++j) {
                pm[j] = b1 * pm[j] + (1.0f - b1) * pg[j];
                pv[j] = b2 * pv[j] + (1.0f - b2) * pg[j] * pg[j];
                float mhat = pm[j] * c1;
                float vhat = pv[j] * c2;
                pp[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        } else {
            double* pp = p.ptr<double>();
            const double* pg = g.ptr<double>();
            double* pm = mi.ptr<double>();
            double* pv = vi.ptr<double>();
            for (int64_t j = 0; j < n; ++j) {
                pm[j] = state.beta1 * pm[j] + (1.0 - state.beta1) * pg[j];
                pv[j] = state.beta2 * pv[j] + (1.0 - state.beta2) * pg[j] * pg[j];
                double mhat = pm[j] / bc1;
                double vhat = pv[j] / bc2;
                pp[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
            }
        }
    }
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
    // A parameter the step's graph never touched (e.g. the null condition on a
    // batch with no dropout) has a zero gradient by definition.
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    bool any = false;
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].has_grad()) {
            grads.push_back(params[i].grad());
            any = true;
        } else {
            grads.push_back(Tensor::zeros(params[i].shape(), params[i].dtype()));
        }
    }
    if (!any) throw UsageError("adam_step: no parameter has a gradient (was backward() run?)");
    adam_step(params, grads, state);
}

}  // namespace framecast
