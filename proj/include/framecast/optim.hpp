#pragma once

#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

// Adam with bias correction. State tensors are ordered parallel to the
// parameter list handed to init(); that order also names them in checkpoints.
struct AdamState {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    void init(const std::vector<Tensor>& params);
    bool initialized() const { return !m.empty(); }
};

// One update: increments step_count, applies bias-corrected moments in place.
// Every parameter must have a correspondingly shaped gradient.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

// Convenience: pulls each parameter's accumulated .grad(); missing grad is a
// usage error.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace framecast
