#include "framecast/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace framecast {

bool UNetConfig::has_attention(int level) const {
    return std::find(attention_levels.begin(), attention_levels.end(), level) !=
           attention_levels.end();
}

void UNetConfig::validate() const {
    if (frame_channels < 1) throw ConfigError("unet: frame_channels must be >= 1");
    if (k < 1) throw ConfigError("unet: k must be >= 1");
    if (p < 1) throw ConfigError("unet: p must be >= 1");
    if (f < 0) throw ConfigError("unet: f must be >= 0");
    if (base_width < 1) throw ConfigError("unet: base_width must be >= 1");
    if (channel_multipliers.empty()) throw ConfigError("unet: channel_multipliers must be non-empty");
    for (int m : channel_multipliers)
        if (m < 1) throw ConfigError("unet: channel multipliers must be >= 1");
    if (groups < 1) throw ConfigError("unet: groups must be >= 1");
    if (heads < 1) throw ConfigError("unet: heads must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("unet: time_embed_dim must be an even number >= 2");
    if (spade_hidden < 1) throw ConfigError("unet: spade_hidden must be >= 1");
    for (int a : attention_levels)
        if (a < 0 || a >= levels())
            throw ConfigError("unet: attention level " + std::to_string(a) + " outside 0.." +
                              std::to_string(levels() - 1));
    for (int i = 0; i < levels(); ++i) {
        int w = width_at(i);
        if (w % groups != 0)
            throw ConfigError("unet: width " + std::to_string(w) + " at level " + std::to_string(i) +
                              " not divisible by groups=" + std::to_string(groups));
        if (has_attention(i) && w % heads != 0)
            throw ConfigError("unet: width " + std::to_string(w) + " at attention level " +
                              std::to_string(i) + " not divisible by heads=" + std::to_string(heads));
    }
}

Tensor time_embedding_raw(int t, int dim, DType dt) {
    if (dim < 2 || dim % 2 != 0)
        throw ConfigError("time_embedding_raw: dim must be an even number >= 2");
    Tensor out = Tensor::zeros({1, dim}, dt);
    const double c = 10000.0;
    int half = dim / 2;
    for (int d = 1; d <= half; ++d) {
        double freq = std::pow(c, -2.0 * static_cast<double>(d) / static_cast<double>(dim));
        double angle = static_cast<double>(t) * freq;
        out.set(2 * (d - 1), std::cos(angle));
        out.set(2 * (d - 1) + 1, std::sin(angle));
    }
    return out;
}

Tensor spade_norm(const Tensor& x, const Tensor& cond_map, const SpadeParams& sp, int groups,
                  double eps) {
    if (x.dim(2) != cond_map.dim(2) || x.dim(3) != cond_map.dim(3))
        throw DimensionError("spade_norm: cond map " + shape_str(cond_map.shape()) +
                             " does not match features " + shape_str(x.shape()));
    int64_t C = x.dim(1);
    Tensor ones = Tensor::full({C}, 1.0, x.dtype());
    Tensor zeros = Tensor::zeros({C}, x.dtype());
    Tensor normed = group_norm(x, groups, ones, zeros, eps);
    Tensor a = silu(add_channel_bias(conv2d(cond_map, sp.shared_w, 1, 1), sp.shared_b));
    Tensor gamma = add_channel_bias(conv2d(a, sp.gamma_w, 1, 1), sp.gamma_b);
    Tensor beta = add_channel_bias(conv2d(a, sp.beta_w, 1, 1), sp.beta_b);
    return add(mul(normed, add_scalar(gamma, 1.0)), beta);
}

Tensor DenoiserModel::register_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back(t);
    names_.push_back(name);
    return t;
}

Tensor DenoiserModel::make_conv_weight(const std::string& name, int64_t cout, int64_t cin, int64_t kh,
                                       int64_t kw, Rng& rng, bool zero_init) {
    Tensor w;
    if (zero_init) {
        w = Tensor::zeros({cout, cin, kh, kw}, dtype_);
    } else {
        double a = 1.0 / std::sqrt(static_cast<double>(cin * kh * kw));
        w = Tensor::rand_uniform({cout, cin, kh, kw}, -a, a, rng, dtype_);
    }
    return register_param(name, w);
}

Tensor DenoiserModel::make_dense_weight(const std::string& name, int64_t in, int64_t out, Rng& rng) {
    double a = 1.0 / std::sqrt(static_cast<double>(in));
    return register_param(name, Tensor::rand_uniform({in, out}, -a, a, rng, dtype_));
}

Tensor DenoiserModel::make_zeros(const std::string& name, Shape shape) {
    return register_param(name, Tensor::zeros(std::move(shape), dtype_));
}

Tensor DenoiserModel::make_ones(const std::string& name, Shape shape) {
    return register_param(name, Tensor::full(std::move(shape), 1.0, dtype_));
}

ResBlockParams DenoiserModel::make_resblock(const std::string& prefix, int cin, int cout, Rng& rng) {
    ResBlockParams rb;
    rb.cin = cin;
    rb.cout = cout;
    rb.gn1_g = make_ones(prefix + ".norm1.g", {cin});
    rb.gn1_b = make_zeros(prefix + ".norm1.b", {cin});
    rb.conv1_w = make_conv_weight(prefix + ".conv1.w", cout, cin, 3, 3, rng);
    rb.conv1_b = make_zeros(prefix + ".conv1.b", {cout});
    rb.temb_w = make_dense_weight(prefix + ".temb.w", cfg_.time_embed_dim, cout, rng);
    rb.temb_b = make_zeros(prefix + ".temb.b", {cout});
    rb.spade.shared_w =
        make_conv_weight(prefix + ".spade.shared.w", cfg_.spade_hidden, cfg_.cond_channels(), 3, 3, rng);
    rb.spade.shared_b = make_zeros(prefix + ".spade.shared.b", {cfg_.spade_hidden});
    rb.spade.gamma_w = make_conv_weight(prefix + ".spade.gamma.w", cout, cfg_.spade_hidden, 3, 3, rng,
                                        /*zero_init=*/true);
    rb.spade.gamma_b = make_zeros(prefix + ".spade.gamma.b", {cout});
    rb.spade.beta_w = make_conv_weight(prefix + ".spade.beta.w", cout, cfg_.spade_hidden, 3, 3, rng,
                                       /*zero_init=*/true);
    rb.spade.beta_b = make_zeros(prefix + ".spade.beta.b", {cout});
    rb.conv2_w = make_conv_weight(prefix + ".conv2.w", cout, cout, 3, 3, rng, /*zero_init=*/true);
    rb.conv2_b = make_zeros(prefix + ".conv2.b", {cout});
    if (cin != cout) {
        rb.shortcut_w = make_conv_weight(prefix + ".shortcut.w", cout, cin, 1, 1, rng);
        rb.shortcut_b = make_zeros(prefix + ".shortcut.b", {cout});
    }
    return rb;
}

AttnParams DenoiserModel::make_attention(const std::string& prefix, int c, Rng& rng) {
    AttnParams at;
    at.wq = make_conv_weight(prefix + ".wq", c, c, 1, 1, rng);
    at.wk = make_conv_weight(prefix + ".wk", c, c, 1, 1, rng);
    at.wv = make_conv_weight(prefix + ".wv", c, c, 1, 1, rng);
    at.wo = make_conv_weight(prefix + ".wo", c, c, 1, 1, rng, /*zero_init=*/true);
    return at;
}

DenoiserModel::DenoiserModel(UNetConfig cfg, DType dt, uint64_t init_seed)
    : cfg_(std::move(cfg)), dtype_(dt) {
    cfg_.validate();
    Rng rng(init_seed);
    int L = cfg_.levels();
    int in_ch = cfg_.noisy_channels() + cfg_.cond_channels();

    stem_w_ = make_conv_weight("stem.w", cfg_.width_at(0), in_ch, 3, 3, rng);
    stem_b_ = make_zeros("stem.b", {cfg_.width_at(0)});

    int D = cfg_.time_embed_dim;
    time_fc1_w_ = make_dense_weight("time.fc1.w", D, D, rng);
    time_fc1_b_ = make_zeros("time.fc1.b", {D});
    time_fc2_w_ = make_dense_weight("time.fc2.w", D, D, rng);
    time_fc2_b_ = make_zeros("time.fc2.b", {D});

    for (int i = 0; i < L; ++i) {
        int cin = (i == 0) ? cfg_.width_at(0) : cfg_.width_at(i - 1);
        int cout = cfg_.width_at(i);
        std::string prefix = "enc" + std::to_string(i);
        enc_.push_back(make_resblock(prefix + ".rb", cin, cout, rng));
        if (cfg_.has_attention(i))
            enc_attn_.push_back(make_attention(prefix + ".attn", cout, rng));
        else
            enc_attn_.push_back(std::nullopt);
        if (i < L - 1) {
            down_w_.push_back(make_conv_weight(prefix + ".down.w", cout, cout, 3, 3, rng));
            down_b_.push_back(make_zeros(prefix + ".down.b", {cout}));
        }
    }

    mid_ = make_resblock("mid.rb", cfg_.width_at(L - 1), cfg_.width_at(L - 1), rng);

    dec_.resize(static_cast<size_t>(L));
    dec_attn_.resize(static_cast<size_t>(L));
    up_w_.resize(static_cast<size_t>(L));
    up_b_.resize(static_cast<size_t>(L));
    for (int i = L - 1; i >= 0; --i) {
        int cout = cfg_.width_at(i);
        std::string prefix = "dec" + std::to_string(i);
        dec_[static_cast<size_t>(i)] = make_resblock(prefix + ".rb", 2 * cout, cout, rng);
        if (cfg_.has_attention(i))
            dec_attn_[static_cast<size_t>(i)] = make_attention(prefix + ".attn", cout, rng);
        if (i > 0) {
            // Nearest-neighbor upsample then 3x3 conv down to the next level's width.
            up_w_[static_cast<size_t>(i)] =
                make_conv_weight(prefix + ".up.w", cfg_.width_at(i - 1), cout, 3, 3, rng);
            up_b_[static_cast<size_t>(i)] = make_zeros(prefix + ".up.b", {cfg_.width_at(i - 1)});
        }
    }

    head_gn_g_ = make_ones("head.norm.g", {cfg_.width_at(0)});
    head_gn_b_ = make_zeros("head.norm.b", {cfg_.width_at(0)});
    head_w_ = make_conv_weight("head.w", cfg_.noisy_channels(), cfg_.width_at(0), 3, 3, rng,
                               /*zero_init=*/true);
    head_b_ = make_zeros("head.b", {cfg_.noisy_channels()});

    null_cond_ = make_zeros("null_cond", {cfg_.cond_channels()});
}

Tensor DenoiserModel::run_resblock(const ResBlockParams& rb, const Tensor& x, const Tensor& temb,
                                   const Tensor& cond_map) const {
    Tensor h = group_norm(x, cfg_.groups, rb.gn1_g, rb.gn1_b);
    h = silu(h);
    h = add_channel_bias(conv2d(h, rb.conv1_w, 1, 1), rb.conv1_b);
    Tensor proj = add_row_bias(matmul(silu(temb), rb.temb_w), rb.temb_b);
    h = add_channel_bias(h, proj);
    h = spade_norm(h, cond_map, rb.spade, cfg_.groups);
    h = silu(h);
    h = add_channel_bias(conv2d(h, rb.conv2_w, 1, 1), rb.conv2_b);
    Tensor sc = (rb.cin == rb.cout)
                    ? x
                    : add_channel_bias(conv2d(x, rb.shortcut_w), rb.shortcut_b);
    return add(h, sc);
}

Tensor DenoiserModel::forward(const Tensor& noisy, const Tensor& cond, int t) const {
    if (noisy.ndim() != 4 || cond.ndim() != 4)
        throw DimensionError("denoiser: noisy and cond must be 4-d [N,C,H,W]");
    if (noisy.dtype() != dtype_ || cond.dtype() != dtype_)
        throw DimensionError("denoiser: input dtype does not match model dtype");
    int64_t N = noisy.dim(0), H = noisy.dim(2), W = noisy.dim(3);
    if (noisy.dim(1) != cfg_.noisy_channels())
        throw DimensionError("denoiser: expected " + std::to_string(cfg_.noisy_channels()) +
                             " noisy channels, got " + std::to_string(noisy.dim(1)));
    if (cond.dim(0) != N || cond.dim(1) != cfg_.cond_channels() || cond.dim(2) != H ||
        cond.dim(3) != W)
        throw DimensionError("denoiser: cond shape " + shape_str(cond.shape()) +
                             " incompatible with noisy " + shape_str(noisy.shape()));
    if (t < 1) throw UsageError("denoiser: t must be >= 1");
    int L = cfg_.levels();
    int64_t div = int64_t(1) << (L - 1);
    if (H % div != 0 || W % div != 0)
        throw DimensionError("denoiser: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                             " not divisible by 2^" + std::to_string(L - 1));

    // Learned time embedding, shared by every residual block at this step.
    Tensor e = time_embedding_raw(t, cfg_.time_embed_dim, dtype_);
    e = add_row_bias(matmul(e, time_fc1_w_), time_fc1_b_);
    e = silu(e);
    e = add_row_bias(matmul(e, time_fc2_w_), time_fc2_b_);

    // Conditioning pyramid, one map per resolution level.
    std::vector<Tensor> cond_lvl(static_cast<size_t>(L));
    cond_lvl[0] = cond;
    for (int i = 1; i < L; ++i) cond_lvl[static_cast<size_t>(i)] = avg_pool2x(cond_lvl[static_cast<size_t>(i - 1)]);

    Tensor h = add_channel_bias(conv2d(concat_channels(noisy, cond), stem_w_, 1, 1), stem_b_);

    std::vector<Tensor> skips;
    skips.reserve(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) {
        h = run_resblock(enc_[static_cast<size_t>(i)], h, e, cond_lvl[static_cast<size_t>(i)]);
        if (enc_attn_[static_cast<size_t>(i)]) {
            const AttnParams& at = *enc_attn_[static_cast<size_t>(i)];
            h = self_attention(h, cfg_.heads, at.wq, at.wk, at.wv, at.wo);
        }
        skips.push_back(h);
        if (i < L - 1)
            h = add_channel_bias(conv2d(h, down_w_[static_cast<size_t>(i)], 2, 1),
                                 down_b_[static_cast<size_t>(i)]);
    }

    h = run_resblock(mid_, h, e, cond_lvl[static_cast<size_t>(L - 1)]);

    for (int i = L - 1; i >= 0; --i) {
        h = concat_channels(h, skips[static_cast<size_t>(i)]);
        h = run_resblock(dec_[static_cast<size_t>(i)], h, e, cond_lvl[static_cast<size_t>(i)]);
        if (dec_attn_[static_cast<size_t>(i)]) {
            const AttnParams& at = *dec_attn_[static_cast<size_t>(i)];
            h = self_attention(h, cfg_.heads, at.wq, at.wk, at.wv, at.wo);
        }
        if (i > 0) {
            h = upsample_nearest2x(h);
            h = add_channel_bias(conv2d(h, up_w_[static_cast<size_t>(i)], 1, 1),
                                 up_b_[static_cast<size_t>(i)]);
        }
    }

    h = group_norm(h, cfg_.groups, head_gn_g_, head_gn_b_);
    h = silu(h);
    return add_channel_bias(conv2d(h, head_w_, 1, 1), head_b_);
}

Tensor DenoiserModel::drop_condition(const Tensor& cond, double p_drop, Rng& rng) const {
    if (p_drop < 0.0 || p_drop > 1.0)
        throw ConfigError("drop_condition: p_drop must lie in [0,1], got " + std::to_string(p_drop));
    if (cond.ndim() != 4 || cond.dim(1) != cfg_.cond_channels())
        throw DimensionError("drop_condition: cond shape " + shape_str(cond.shape()) +
                             " incompatible with config");
    if (p_drop == 0.0) return cond;
    int64_t N = cond.dim(0), C = cond.dim(1), H = cond.dim(2), W = cond.dim(3);
    int64_t hw = H * W;
    std::vector<char> dropped(static_cast<size_t>(N));
    Tensor out = cond.clone();
    for (int64_t n = 0; n < N; ++n) {
        dropped[static_cast<size_t>(n)] = rng.uniform() < p_drop ? 1 : 0;
        if (!dropped[static_cast<size_t>(n)]) continue;
        for (int64_t c = 0; c < C; ++c) {
            double v = null_cond_.at(c);
            for (int64_t i = 0; i < hw; ++i) out.set((n * C + c) * hw + i, v);
        }
    }
    // Gradient flows only into the learned null embedding of dropped samples.
    if (Tape::current().recording() && null_cond_.requires_grad()) {
        out.set_requires_grad(true);
        auto oi = out.impl_ptr();
        auto ni = null_cond_.impl_ptr();
        Tape::current().record([oi, ni, dropped, N, C, hw]() {
            if (!oi->grad) return;
            Tensor g = Tensor::wrap(oi->grad);
            Tensor dn = Tensor::zeros(ni->shape, ni->dtype);
            for (int64_t n = 0; n < N; ++n) {
                if (!dropped[static_cast<size_t>(n)]) continue;
                for (int64_t c = 0; c < C; ++c) {
                    double acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += g.at((n * C + c) * hw + i);
                    dn.set(c, dn.at(c) + acc);
                }
            }
            Tensor::wrap(ni).accumulate_grad(dn);
        });
    }
    return out;
}

Tensor DenoiserModel::parameter(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return params_[i];
    throw UsageError("unknown parameter: " + name);
}

int64_t DenoiserModel::parameter_count() const {
    int64_t n = 0;
    for (const Tensor& p : params_) n += p.numel();
    return n;
}

void DenoiserModel::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace framecast
