#pragma once

#include <optional>
#include <string>
#include <vector>

#include "framecast/ops.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

// U-Net scale and conditioning layout. The input stem sees the k noisy target
// frames channel-concatenated with the p past (+ f future) conditioning
// frames; every residual block is additionally modulated by the conditioning
// through SPADE.
struct UNetConfig {
    int frame_channels = 1;
    int k = 5;  // frames predicted per window
    int p = 2;  // past conditioning frames
    int f = 0;  // future conditioning frames (ablation mode)
    int base_width = 32;
    std::vector<int> channel_multipliers = {1, 2};
    std::vector<int> attention_levels = {1};
    int groups = 8;
    int heads = 4;
    int time_embed_dim = 128;
    int spade_hidden = 32;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int noisy_channels() const { return k * frame_channels; }
    int cond_channels() const { return (p + f) * frame_channels; }
    int width_at(int level) const { return base_width * channel_multipliers[static_cast<size_t>(level)]; }
    bool has_attention(int level) const;

    void validate() const;  // throws ConfigError
    bool operator==(const UNetConfig&) const = default;
};

// Interleaved [cos, sin] pairs: entry pair d (1-based, d = 1..dim/2) uses
// frequency c^(-2d/dim) with c = 10000. Returns shape [1, dim].
Tensor time_embedding_raw(int t, int dim, DType dt);

struct SpadeParams {
    Tensor shared_w, shared_b;  // cond -> hidden, 3x3
    Tensor gamma_w, gamma_b;    // hidden -> C, 3x3, zero-init
    Tensor beta_w, beta_b;      // hidden -> C, 3x3, zero-init
};

// Spatially adaptive normalization: group-normalizes x without affine, then
// applies per-pixel (1 + gamma(cond)) scale and beta(cond) shift predicted
// from the conditioning map. With zero modulation heads this is exactly plain
// group norm.
Tensor spade_norm(const Tensor& x, const Tensor& cond_map, const SpadeParams& sp, int groups,
                  double eps = 1e-5);

struct ResBlockParams {
    int cin = 0, cout = 0;
    Tensor gn1_g, gn1_b;
    Tensor conv1_w, conv1_b;
    Tensor temb_w, temb_b;  // time embedding -> per-channel shift
    SpadeParams spade;
    Tensor conv2_w, conv2_b;  // zero-init: block is identity (projected) at init
    Tensor shortcut_w, shortcut_b;  // 1x1, present iff cin != cout
};

struct AttnParams {
    Tensor wq, wk, wv, wo;  // wo zero-init so the block starts as identity
};

class DenoiserModel {
public:
    DenoiserModel(UNetConfig cfg, DType dt, uint64_t init_seed);

    // noisy: [N, k*C, H, W], cond: [N, (p+f)*C, H, W] -> predicted noise,
    // same shape as noisy. H and W must be divisible by 2^(levels-1).
    // Thread-safe for concurrent readers (parameters are only read).
    Tensor forward(const Tensor& noisy, const Tensor& cond, int t) const;

    // Per-sample classifier-free conditioning dropout: each sample's cond map
    // is replaced by the learned null embedding with probability p_drop.
    // p_drop = 0 returns cond untouched and consumes no randomness.
    Tensor drop_condition(const Tensor& cond, double p_drop, Rng& rng) const;

    const UNetConfig& config() const { return cfg_; }
    DType dtype() const { return dtype_; }

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    const std::vector<std::string>& parameter_names() const { return names_; }
    Tensor parameter(const std::string& name) const;  // throws if unknown
    int64_t parameter_count() const;                  // total scalar count
    void zero_grads();

private:
    Tensor register_param(const std::string& name, Tensor t);
    Tensor make_conv_weight(const std::string& name, int64_t cout, int64_t cin, int64_t kh, int64_t kw,
                            Rng& rng, bool zero_init = false);
    Tensor make_dense_weight(const std::string& name, int64_t in, int64_t out, Rng& rng);
    Tensor make_zeros(const std::string& name, Shape shape);
    Tensor make_ones(const std::string& name, Shape shape);
    ResBlockParams make_resblock(const std::string& prefix, int cin, int cout, Rng& rng);
    AttnParams make_attention(const std::string& prefix, int c, Rng& rng);

    Tensor run_resblock(const ResBlockParams& rb, const Tensor& x, const Tensor& temb,
                        const Tensor& cond_map) const;

    UNetConfig cfg_;
    DType dtype_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;

    Tensor stem_w_, stem_b_;
    Tensor time_fc1_w_, time_fc1_b_, time_fc2_w_, time_fc2_b_;
    std::vector<ResBlockParams> enc_;
    std::vector<std::optional<AttnParams>> enc_attn_;
    std::vector<Tensor> down_w_, down_b_;
    ResBlockParams mid_;
    std::vector<ResBlockParams> dec_;
    std::vector<std::optional<AttnParams>> dec_attn_;
    std::vector<Tensor> up_w_, up_b_;
    Tensor head_gn_g_, head_gn_b_, head_w_, head_b_;
    Tensor null_cond_;  // [cond_channels], learned
};

}  // namespace framecast
