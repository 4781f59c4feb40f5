#include "framecast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace framecast {

namespace {

template <class F>
auto dtype_dispatch(DType dt, F&& f) {
    if (dt == DType::f32)
        return f.template operator()<float>();
    else
        return f.template operator()<double>();
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw DimensionError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                             dtype_name(b.dtype()) + ")");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

void require_ndim(const Tensor& x, int nd, const char* op) {
    if (x.ndim() != nd)
        throw DimensionError(std::string(op) + ": expected " + std::to_string(nd) + "-d tensor, got " +
                             shape_str(x.shape()));
}

bool want_grad(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current().recording()) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Grad of `t` as a plain tensor handle, or undefined if none was accumulated.
inline Tensor grad_of(const std::shared_ptr<TensorImpl>& impl) {
    if (!impl->grad) return Tensor();
    return Tensor::wrap(impl->grad);
}

int64_t floordiv(int64_t a, int64_t b) {
    int64_t q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

int64_t ceildiv(int64_t a, int64_t b) { return floordiv(a + b - 1, b); }

template <class T>
T sigmoid_stable(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

// ----- elementwise -----

static Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, int mode) {
    // mode: 0 add, 1 sub, 2 mul
    require_same_dtype(a, b, name);
    require_same_shape(a, b, name);
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    int64_t n = a.numel();
    dtype_dispatch(a.dtype(), [&]<class T>() {
        const T* pa = a.ptr<T>();
        const T* pb = b.ptr<T>();
        T* po = out.ptr<T>();
        if (mode == 0)
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        else if (mode == 1)
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        else
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    });
    if (want_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([ai, bi, oi, mode, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                const T* pg = g.ptr<T>();
                if (ai->requires_grad) {
                    Tensor da = Tensor::zeros(ai->shape, ai->dtype);
                    T* pd = da.ptr<T>();
                    if (mode == 2) {
                        const T* pb = bi->buf<T>().data();
                        for (int64_t i = 0; i < n; ++i) pd[i] = pg[i] * pb[i];
                    } else {
                        for (int64_t i = 0; i < n; ++i) pd[i] = pg[i];
                    }
                    Tensor::wrap(ai).accumulate_grad(da);
                }
                if (bi->requires_grad) {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    T* pd = db.ptr<T>();
                    if (mode == 0)
                        for (int64_t i = 0; i < n; ++i) pd[i] = pg[i];
                    else if (mode == 1)
                        for (int64_t i = 0; i < n; ++i) pd[i] = -pg[i];
                    else {
                        const T* pa = ai->buf<T>().data();
                        for (int64_t i = 0; i < n; ++i) pd[i] = pg[i] * pa[i];
                    }
                    Tensor::wrap(bi).accumulate_grad(db);
                }
            });
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "add", 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "sub", 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "mul", 2); }

Tensor scale(const Tensor& x, double s) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    int64_t n = x.numel();
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        T sv = static_cast<T>(s);
        for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sv;
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, s, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                const T* pg = g.ptr<T>();
                T* pd = dx.ptr<T>();
                T sv = static_cast<T>(s);
                for (int64_t i = 0; i < n; ++i) pd[i] = pg[i] * sv;
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    int64_t n = x.numel();
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        T cv = static_cast<T>(c);
        for (int64_t i = 0; i < n; ++i) po[i] = px[i] + cv;
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            Tensor::wrap(xi).accumulate_grad(g);
        });
    }
    return out;
}

// ----- matmul / bias -----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "matmul");
    require_ndim(a, 2, "matmul");
    require_ndim(b, 2, "matmul");
    int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros({m, n}, a.dtype());
    dtype_dispatch(a.dtype(), [&]<class T>() {
        const T* pa = a.ptr<T>();
        const T* pb = b.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
                T av = pa[i * k + kk];
                if (av == T(0)) continue;
                const T* brow = pb + kk * n;
                T* orow = po + i * n;
                for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
    });
    if (want_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([ai, bi, oi, m, k, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                const T* pg = g.ptr<T>();
                if (ai->requires_grad) {
                    Tensor da = Tensor::zeros(ai->shape, ai->dtype);
                    T* pd = da.ptr<T>();
                    const T* pb = bi->buf<T>().data();
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t kk = 0; kk < k; ++kk) {
                            T acc = 0;
                            const T* grow = pg + i * n;
                            const T* brow = pb + kk * n;
                            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                            pd[i * k + kk] = acc;
                        }
                    Tensor::wrap(ai).accumulate_grad(da);
                }
                if (bi->requires_grad) {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    T* pd = db.ptr<T>();
                    const T* pa = ai->buf<T>().data();
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t kk = 0; kk < k; ++kk) {
                            T av = pa[i * k + kk];
                            if (av == T(0)) continue;
                            const T* grow = pg + i * n;
                            T* drow = pd + kk * n;
                            for (int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                        }
                    Tensor::wrap(bi).accumulate_grad(db);
                }
            });
        });
    }
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    require_same_dtype(x, b, "add_row_bias");
    require_ndim(x, 2, "add_row_bias");
    require_ndim(b, 1, "add_row_bias");
    int64_t n = x.dim(0), m = x.dim(1);
    if (b.dim(0) != m)
        throw DimensionError("add_row_bias: bias length " + std::to_string(b.dim(0)) +
                             " does not match row width " + std::to_string(m));
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        const T* pb = b.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j) po[i * m + j] = px[i * m + j] + pb[j];
    });
    if (want_grad({&x, &b})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, bi, oi, n, m]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            if (xi->requires_grad) Tensor::wrap(xi).accumulate_grad(g);
            if (bi->requires_grad) {
                dtype_dispatch(g.dtype(), [&]<class T>() {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    const T* pg = g.ptr<T>();
                    T* pd = db.ptr<T>();
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < m; ++j) pd[j] += pg[i * m + j];
                    Tensor::wrap(bi).accumulate_grad(db);
                });
            }
        });
    }
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    require_same_dtype(x, b, "add_channel_bias");
    require_ndim(x, 4, "add_channel_bias");
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t blen = b.numel();
    bool ok_shape = (b.ndim() == 1 && b.dim(0) == C) || (b.ndim() == 2 && b.dim(0) == 1 && b.dim(1) == C);
    if (!ok_shape)
        throw DimensionError("add_channel_bias: bias shape " + shape_str(b.shape()) + " for C=" +
                             std::to_string(C));
    (void)blen;
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    int64_t hw = H * W;
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        const T* pb = b.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            T bv = pb[nc % C];
            const T* xs = px + nc * hw;
            T* os = po + nc * hw;
            for (int64_t i = 0; i < hw; ++i) os[i] = xs[i] + bv;
        }
    });
    if (want_grad({&x, &b})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, bi, oi, N, C, hw]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            if (xi->requires_grad) Tensor::wrap(xi).accumulate_grad(g);
            if (bi->requires_grad) {
                dtype_dispatch(g.dtype(), [&]<class T>() {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    const T* pg = g.ptr<T>();
                    T* pd = db.ptr<T>();
                    for (int64_t nc = 0; nc < N * C; ++nc) {
                        const T* gs = pg + nc * hw;
                        T acc = 0;
                        for (int64_t i = 0; i < hw; ++i) acc += gs[i];
                        pd[nc % C] += acc;
                    }
                    Tensor::wrap(bi).accumulate_grad(db);
                });
            }
        });
    }
    return out;
}

// ----- conv2d -----

namespace {

template <class T>
void conv2d_forward_kernel(const T* px, const T* pw, T* po, int64_t N, int64_t Cin, int64_t H,
                           int64_t W, int64_t Cout, int64_t kh, int64_t kw, int64_t s, int64_t p,
                           int64_t OH, int64_t OW) {
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Cout; ++co) {
            T* out_plane = po + (n * Cout + co) * OH * OW;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const T* x_plane = px + (n * Cin + ci) * H * W;
                const T* w_base = pw + (co * Cin + ci) * kh * kw;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        T wv = w_base[ky * kw + kx];
                        if (wv == T(0)) continue;  // adds exactly zero; frequent with zero-init convs
                        int64_t ox_lo = std::max<int64_t>(0, ceildiv(p - kx, s));
                        int64_t ox_hi = std::min<int64_t>(OW - 1, floordiv(W - 1 + p - kx, s));
                        if (ox_hi < ox_lo) continue;
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            int64_t iy = oy * s - p + ky;
                            if (iy < 0 || iy >= H) continue;
                            const T* xrow = x_plane + iy * W - p + kx;
                            T* orow = out_plane + oy * OW;
                            if (s == 1) {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xrow[ox];
                            } else {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    orow[ox] += wv * xrow[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv2d_backward_kernel(const T* px, const T* pw, const T* pg, T* pdx, T* pdw, int64_t N,
                            int64_t Cin, int64_t H, int64_t W, int64_t Cout, int64_t kh, int64_t kw,
                            int64_t s, int64_t p, int64_t OH, int64_t OW) {
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Cout; ++co) {
            const T* g_plane = pg + (n * Cout + co) * OH * OW;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const T* x_plane = px + (n * Cin + ci) * H * W;
                T* dx_plane = pdx ? pdx + (n * Cin + ci) * H * W : nullptr;
                const T* w_base = pw + (co * Cin + ci) * kh * kw;
                T* dw_base = pdw ? pdw + (co * Cin + ci) * kh * kw : nullptr;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        T wv = w_base[ky * kw + kx];
                        T acc_dw = 0;
                        int64_t ox_lo = std::max<int64_t>(0, ceildiv(p - kx, s));
                        int64_t ox_hi = std::min<int64_t>(OW - 1, floordiv(W - 1 + p - kx, s));
                        if (ox_hi < ox_lo) continue;
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            int64_t iy = oy * s - p + ky;
                            if (iy < 0 || iy >= H) continue;
                            const T* xrow = x_plane + iy * W - p + kx;
                            const T* grow = g_plane + oy * OW;
                            if (dw_base) {
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    acc_dw += grow[ox] * xrow[ox * s];
                            }
                            if (dx_plane) {
                                T* dxrow = dx_plane + iy * W - p + kx;
                                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                    dxrow[ox * s] += grow[ox] * wv;
                            }
                        }
                        if (dw_base) dw_base[ky * kw + kx] += acc_dw;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    require_same_dtype(x, w, "conv2d");
    require_ndim(x, 4, "conv2d");
    require_ndim(w, 4, "conv2d");
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
    int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Cin)
        throw DimensionError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                             std::to_string(Cin));
    int64_t s = stride, p = padding;
    int64_t OH = (H + 2 * p - kh) / s + 1;
    int64_t OW = (W + 2 * p - kw) / s + 1;
    if (H + 2 * p < kh || W + 2 * p < kw)
        throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " larger than padded input " + std::to_string(H + 2 * p) + "x" +
                             std::to_string(W + 2 * p));
    Tensor out = Tensor::zeros({N, Cout, OH, OW}, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        conv2d_forward_kernel<T>(x.ptr<T>(), w.ptr<T>(), out.ptr<T>(), N, Cin, H, W, Cout, kh, kw, s,
                                 p, OH, OW);
    });
    if (want_grad({&x, &w})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), wi = w.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, wi, oi, N, Cin, H, W, Cout, kh, kw, s, p, OH, OW]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx, dw;
                if (xi->requires_grad) dx = Tensor::zeros(xi->shape, xi->dtype);
                if (wi->requires_grad) dw = Tensor::zeros(wi->shape, wi->dtype);
                conv2d_backward_kernel<T>(xi->buf<T>().data(), wi->buf<T>().data(), g.ptr<T>(),
                                          dx.defined() ? dx.ptr<T>() : nullptr,
                                          dw.defined() ? dw.ptr<T>() : nullptr, N, Cin, H, W, Cout,
                                          kh, kw, s, p, OH, OW);
                if (dx.defined()) Tensor::wrap(xi).accumulate_grad(dx);
                if (dw.defined()) Tensor::wrap(wi).accumulate_grad(dw);
            });
        });
    }
    return out;
}

// ----- group norm -----

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
    require_ndim(x, 4, "group_norm");
    require_same_dtype(x, gamma, "group_norm");
    require_same_dtype(x, beta, "group_norm");
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (groups < 1 || C % groups != 0)
        throw DimensionError("group_norm: C=" + std::to_string(C) + " not divisible by groups=" +
                             std::to_string(groups));
    if (gamma.numel() != C || beta.numel() != C)
        throw DimensionError("group_norm: affine parameters must have length C=" + std::to_string(C));
    int64_t G = groups, Cg = C / G, hw = H * W, m = Cg * hw;
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    // Normalized activations and inverse stddevs are kept for the backward pass.
    Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
    std::vector<double> inv_std(static_cast<size_t>(N * G));
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        const T* pgm = gamma.ptr<T>();
        const T* pbt = beta.ptr<T>();
        T* po = out.ptr<T>();
        T* ph = xhat.ptr<T>();
        for (int64_t n = 0; n < N; ++n) {
            for (int64_t g = 0; g < G; ++g) {
                const T* base = px + (n * C + g * Cg) * hw;
                double mean = 0;
                for (int64_t i = 0; i < m; ++i) mean += static_cast<double>(base[i]);
                mean /= static_cast<double>(m);
                double var = 0;
                for (int64_t i = 0; i < m; ++i) {
                    double d = static_cast<double>(base[i]) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(m);
                double inv = 1.0 / std::sqrt(var + eps);
                inv_std[static_cast<size_t>(n * G + g)] = inv;
                for (int64_t cc = 0; cc < Cg; ++cc) {
                    int64_t c = g * Cg + cc;
                    const T* xs = px + (n * C + c) * hw;
                    T* hs = ph + (n * C + c) * hw;
                    T* os = po + (n * C + c) * hw;
                    T gm = pgm[c], bt = pbt[c];
                    for (int64_t i = 0; i < hw; ++i) {
                        T h = static_cast<T>((static_cast<double>(xs[i]) - mean) * inv);
                        hs[i] = h;
                        os[i] = gm * h + bt;
                    }
                }
            }
        }
    });
    if (want_grad({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr(), oi = out.impl_ptr();
        auto hi = xhat.impl_ptr();
        Tape::current().record([xi, gi, bi, oi, hi, inv_std, N, C, G, Cg, hw, m]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                const T* pg = g.ptr<T>();
                const T* ph = hi->buf<T>().data();
                const T* pgm = gi->buf<T>().data();
                if (gi->requires_grad || bi->requires_grad) {
                    Tensor dgm = Tensor::zeros(gi->shape, gi->dtype);
                    Tensor dbt = Tensor::zeros(bi->shape, bi->dtype);
                    T* pdg = dgm.ptr<T>();
                    T* pdb = dbt.ptr<T>();
                    for (int64_t n = 0; n < N; ++n)
                        for (int64_t c = 0; c < C; ++c) {
                            const T* gs = pg + (n * C + c) * hw;
                            const T* hs = ph + (n * C + c) * hw;
                            T ag = 0, ab = 0;
                            for (int64_t i = 0; i < hw; ++i) {
                                ag += gs[i] * hs[i];
                                ab += gs[i];
                            }
                            pdg[c] += ag;
                            pdb[c] += ab;
                        }
                    if (gi->requires_grad) Tensor::wrap(gi).accumulate_grad(dgm);
                    if (bi->requires_grad) Tensor::wrap(bi).accumulate_grad(dbt);
                }
                if (xi->requires_grad) {
                    Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                    T* pdx = dx.ptr<T>();
                    for (int64_t n = 0; n < N; ++n) {
                        for (int64_t gr = 0; gr < G; ++gr) {
                            double s1 = 0, s2 = 0;
                            for (int64_t cc = 0; cc < Cg; ++cc) {
                                int64_t c = gr * Cg + cc;
                                const T* gs = pg + (n * C + c) * hw;
                                const T* hs = ph + (n * C + c) * hw;
                                double gm = static_cast<double>(pgm[c]);
                                for (int64_t i = 0; i < hw; ++i) {
                                    double dh = static_cast<double>(gs[i]) * gm;
                                    s1 += dh;
                                    s2 += dh * static_cast<double>(hs[i]);
                                }
                            }
                            s1 /= static_cast<double>(m);
                            s2 /= static_cast<double>(m);
                            double inv = inv_std[static_cast<size_t>(n * G + gr)];
                            for (int64_t cc = 0; cc < Cg; ++cc) {
                                int64_t c = gr * Cg + cc;
                                const T* gs = pg + (n * C + c) * hw;
                                const T* hs = ph + (n * C + c) * hw;
                                T* ds = pdx + (n * C + c) * hw;
                                double gm = static_cast<double>(pgm[c]);
                                for (int64_t i = 0; i < hw; ++i) {
                                    double dh = static_cast<double>(gs[i]) * gm;
                                    ds[i] = static_cast<T>(
                                        inv * (dh - s1 - static_cast<double>(hs[i]) * s2));
                                }
                            }
                        }
                    }
                    Tensor::wrap(xi).accumulate_grad(dx);
                }
            });
        });
    }
    return out;
}

// ----- silu / reductions -----

Tensor silu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    int64_t n = x.numel();
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sigmoid_stable(px[i]);
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                const T* pg = g.ptr<T>();
                const T* px = xi->buf<T>().data();
                T* pd = dx.ptr<T>();
                for (int64_t i = 0; i < n; ++i) {
                    T s = sigmoid_stable(px[i]);
                    pd[i] = pg[i] * (s * (T(1) + px[i] * (T(1) - s)));
                }
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "mse");
    require_same_shape(a, b, "mse");
    int64_t n = a.numel();
    if (n == 0) throw DimensionError("mse: empty tensors");
    Tensor out = Tensor::zeros({1}, a.dtype());
    dtype_dispatch(a.dtype(), [&]<class T>() {
        const T* pa = a.ptr<T>();
        const T* pb = b.ptr<T>();
        double acc = 0;
        for (int64_t i = 0; i < n; ++i) {
            double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
            acc += d * d;
        }
        out.set(0, acc / static_cast<double>(n));
    });
    if (want_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([ai, bi, oi, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            double gv = g.at(0);
            dtype_dispatch(Tensor::wrap(ai).dtype(), [&]<class T>() {
                const T* pa = ai->buf<T>().data();
                const T* pb = bi->buf<T>().data();
                T c = static_cast<T>(2.0 * gv / static_cast<double>(n));
                if (ai->requires_grad) {
                    Tensor da = Tensor::zeros(ai->shape, ai->dtype);
                    T* pd = da.ptr<T>();
                    for (int64_t i = 0; i < n; ++i) pd[i] = c * (pa[i] - pb[i]);
                    Tensor::wrap(ai).accumulate_grad(da);
                }
                if (bi->requires_grad) {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    T* pd = db.ptr<T>();
                    for (int64_t i = 0; i < n; ++i) pd[i] = -c * (pa[i] - pb[i]);
                    Tensor::wrap(bi).accumulate_grad(db);
                }
            });
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    int64_t n = x.numel();
    Tensor out = Tensor::zeros({1}, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        double acc = 0;
        for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
        out.set(0, acc);
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, n]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            double gv = g.at(0);
            Tensor dx = Tensor::full(xi->shape, gv, xi->dtype);
            Tensor::wrap(xi).accumulate_grad(dx);
        });
    }
    return out;
}

// ----- attention -----

namespace {

// Row-softmaxed scaled dot-product attention on [N,C,H,W] in token-grid form.
// Channel planes are already contiguous over tokens, so each head's Q/K/V is a
// (dh x M) row-major matrix directly in the buffer.
template <class T>
void attention_forward_kernel(const T* q, const T* k, const T* v, T* o, T* attn, int64_t N,
                              int64_t C, int64_t M, int64_t heads) {
    int64_t dh = C / heads;
    double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> srow(static_cast<size_t>(M));
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t h = 0; h < heads; ++h) {
            const T* Q = q + (n * C + h * dh) * M;
            const T* K = k + (n * C + h * dh) * M;
            const T* V = v + (n * C + h * dh) * M;
            T* O = o + (n * C + h * dh) * M;
            T* A = attn + (n * heads + h) * M * M;
            for (int64_t i = 0; i < M; ++i) {
                for (int64_t j = 0; j < M; ++j) srow[static_cast<size_t>(j)] = 0;
                for (int64_t d = 0; d < dh; ++d) {
                    double qv = static_cast<double>(Q[d * M + i]) * scl;
                    const T* krow = K + d * M;
                    for (int64_t j = 0; j < M; ++j)
                        srow[static_cast<size_t>(j)] += qv * static_cast<double>(krow[j]);
                }
                double mx = srow[0];
                for (int64_t j = 1; j < M; ++j) mx = std::max(mx, srow[static_cast<size_t>(j)]);
                double denom = 0;
                T* arow = A + i * M;
                for (int64_t j = 0; j < M; ++j) {
                    double e = std::exp(srow[static_cast<size_t>(j)] - mx);
                    arow[j] = static_cast<T>(e);
                    denom += e;
                }
                T inv = static_cast<T>(1.0 / denom);
                for (int64_t j = 0; j < M; ++j) arow[j] *= inv;
            }
            for (int64_t d = 0; d < dh; ++d) {
                const T* vrow = V + d * M;
                T* orow = O + d * M;
                for (int64_t i = 0; i < M; ++i) {
                    const T* arow = A + i * M;
                    T acc = 0;
                    for (int64_t j = 0; j < M; ++j) acc += vrow[j] * arow[j];
                    orow[i] = acc;
                }
            }
        }
    }
}

template <class T>
void attention_backward_kernel(const T* q, const T* k, const T* v, const T* attn, const T* go,
                               T* dq, T* dk, T* dv, int64_t N, int64_t C, int64_t M, int64_t heads) {
    int64_t dh = C / heads;
    T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<T> dA(static_cast<size_t>(M * M));
    std::vector<T> dS(static_cast<size_t>(M * M));
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t h = 0; h < heads; ++h) {
            const T* Q = q + (n * C + h * dh) * M;
            const T* K = k + (n * C + h * dh) * M;
            const T* V = v + (n * C + h * dh) * M;
            const T* A = attn + (n * heads + h) * M * M;
            const T* GO = go + (n * C + h * dh) * M;
            T* DQ = dq + (n * C + h * dh) * M;
            T* DK = dk + (n * C + h * dh) * M;
            T* DV = dv + (n * C + h * dh) * M;
            // dV = GO applied through A; dA from GO and V.
            std::fill(dA.begin(), dA.end(), T(0));
            for (int64_t d = 0; d < dh; ++d) {
                const T* gorow = GO + d * M;
                const T* vrow = V + d * M;
                T* dvrow = DV + d * M;
                for (int64_t i = 0; i < M; ++i) {
                    T g = gorow[i];
                    if (g == T(0)) continue;
                    const T* arow = A + i * M;
                    T* darow = dA.data() + i * M;
                    for (int64_t j = 0; j < M; ++j) {
                        dvrow[j] += g * arow[j];
                        darow[j] += g * vrow[j];
                    }
                }
            }
            // Softmax backward per row.
            for (int64_t i = 0; i < M; ++i) {
                const T* arow = A + i * M;
                const T* darow = dA.data() + i * M;
                T dot = 0;
                for (int64_t j = 0; j < M; ++j) dot += darow[j] * arow[j];
                T* dsrow = dS.data() + i * M;
                for (int64_t j = 0; j < M; ++j) dsrow[j] = arow[j] * (darow[j] - dot);
            }
            // dQ = scale * K dS^T, dK = scale * Q dS.
            for (int64_t d = 0; d < dh; ++d) {
                const T* krow = K + d * M;
                T* dqrow = DQ + d * M;
                for (int64_t i = 0; i < M; ++i) {
                    const T* dsrow = dS.data() + i * M;
                    T acc = 0;
                    for (int64_t j = 0; j < M; ++j) acc += krow[j] * dsrow[j];
                    dqrow[i] += scl * acc;
                }
                const T* qrow = Q + d * M;
                T* dkrow = DK + d * M;
                for (int64_t i = 0; i < M; ++i) {
                    T qv = qrow[i] * scl;
                    if (qv == T(0)) continue;
                    const T* dsrow = dS.data() + i * M;
                    for (int64_t j = 0; j < M; ++j) dkrow[j] += qv * dsrow[j];
                }
            }
        }
    }
}

}  // namespace

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    require_same_dtype(q, k, "attention_core");
    require_same_dtype(q, v, "attention_core");
    require_same_shape(q, k, "attention_core");
    require_same_shape(q, v, "attention_core");
    require_ndim(q, 4, "attention_core");
    int64_t N = q.dim(0), C = q.dim(1), H = q.dim(2), W = q.dim(3);
    if (heads < 1 || C % heads != 0)
        throw ConfigError("attention_core: C=" + std::to_string(C) + " not divisible by heads=" +
                          std::to_string(heads));
    int64_t M = H * W;
    Tensor out = Tensor::zeros(q.shape(), q.dtype());
    Tensor attn = Tensor::zeros({N, static_cast<int64_t>(heads), M, M}, q.dtype());
    dtype_dispatch(q.dtype(), [&]<class T>() {
        attention_forward_kernel<T>(q.ptr<T>(), k.ptr<T>(), v.ptr<T>(), out.ptr<T>(), attn.ptr<T>(),
                                    N, C, M, heads);
    });
    if (want_grad({&q, &k, &v})) {
        out.set_requires_grad(true);
        auto qi = q.impl_ptr(), ki = k.impl_ptr(), vi = v.impl_ptr(), oi = out.impl_ptr();
        auto ati = attn.impl_ptr();
        int64_t heads64 = heads;
        Tape::current().record([qi, ki, vi, oi, ati, N, C, M, heads64]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dq = Tensor::zeros(qi->shape, qi->dtype);
                Tensor dk = Tensor::zeros(ki->shape, ki->dtype);
                Tensor dv = Tensor::zeros(vi->shape, vi->dtype);
                attention_backward_kernel<T>(qi->buf<T>().data(), ki->buf<T>().data(),
                                             vi->buf<T>().data(), ati->buf<T>().data(), g.ptr<T>(),
                                             dq.ptr<T>(), dk.ptr<T>(), dv.ptr<T>(), N, C, M,
                                             heads64);
                if (qi->requires_grad) Tensor::wrap(qi).accumulate_grad(dq);
                if (ki->requires_grad) Tensor::wrap(ki).accumulate_grad(dk);
                if (vi->requires_grad) Tensor::wrap(vi).accumulate_grad(dv);
            });
        });
    }
    return out;
}

Tensor self_attention(const Tensor& x, int heads, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv, const Tensor& wo) {
    require_ndim(x, 4, "self_attention");
    int64_t C = x.dim(1);
    for (const Tensor* w : {&wq, &wk, &wv, &wo}) {
        if (w->ndim() != 4 || w->dim(0) != C || w->dim(1) != C || w->dim(2) != 1 || w->dim(3) != 1)
            throw DimensionError("self_attention: projection weights must be [C,C,1,1] with C=" +
                                 std::to_string(C));
    }
    Tensor q = conv2d(x, wq);
    Tensor k = conv2d(x, wk);
    Tensor v = conv2d(x, wv);
    Tensor a = attention_core(q, k, v, heads);
    Tensor o = conv2d(a, wo);
    return add(x, o);
}

// ----- spatial resampling / channel plumbing -----

Tensor upsample_nearest2x(const Tensor& x) {
    require_ndim(x, 4, "upsample_nearest2x");
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros({N, C, H * 2, W * 2}, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* xp = px + nc * H * W;
            T* op = po + nc * 4 * H * W;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xx = 0; xx < W; ++xx) {
                    T v = xp[y * W + xx];
                    T* r0 = op + (2 * y) * 2 * W + 2 * xx;
                    T* r1 = r0 + 2 * W;
                    r0[0] = v;
                    r0[1] = v;
                    r1[0] = v;
                    r1[1] = v;
                }
        }
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, N, C, H, W]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                const T* pg = g.ptr<T>();
                T* pd = dx.ptr<T>();
                for (int64_t nc = 0; nc < N * C; ++nc) {
                    const T* gp = pg + nc * 4 * H * W;
                    T* dp = pd + nc * H * W;
                    for (int64_t y = 0; y < H; ++y)
                        for (int64_t xx = 0; xx < W; ++xx) {
                            const T* r0 = gp + (2 * y) * 2 * W + 2 * xx;
                            const T* r1 = r0 + 2 * W;
                            dp[y * W + xx] = r0[0] + r0[1] + r1[0] + r1[1];
                        }
                }
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor avg_pool2x(const Tensor& x) {
    require_ndim(x, 4, "avg_pool2x");
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw DimensionError("avg_pool2x: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                             " must be even");
    int64_t OH = H / 2, OW = W / 2;
    Tensor out = Tensor::zeros({N, C, OH, OW}, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* xp = px + nc * H * W;
            T* op = po + nc * OH * OW;
            for (int64_t y = 0; y < OH; ++y)
                for (int64_t xx = 0; xx < OW; ++xx) {
                    const T* r0 = xp + (2 * y) * W + 2 * xx;
                    const T* r1 = r0 + W;
                    op[y * OW + xx] = static_cast<T>(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
                }
        }
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, N, C, H, W, OH, OW]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                const T* pg = g.ptr<T>();
                T* pd = dx.ptr<T>();
                for (int64_t nc = 0; nc < N * C; ++nc) {
                    const T* gp = pg + nc * OH * OW;
                    T* dp = pd + nc * H * W;
                    for (int64_t y = 0; y < OH; ++y)
                        for (int64_t xx = 0; xx < OW; ++xx) {
                            T v = static_cast<T>(0.25) * gp[y * OW + xx];
                            T* r0 = dp + (2 * y) * W + 2 * xx;
                            T* r1 = r0 + W;
                            r0[0] = v;
                            r0[1] = v;
                            r1[0] = v;
                            r1[1] = v;
                        }
                }
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "concat_channels");
    require_ndim(a, 4, "concat_channels");
    require_ndim(b, 4, "concat_channels");
    int64_t N = a.dim(0), Ca = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw DimensionError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    int64_t Cb = b.dim(1), hw = H * W;
    Tensor out = Tensor::zeros({N, Ca + Cb, H, W}, a.dtype());
    dtype_dispatch(a.dtype(), [&]<class T>() {
        const T* pa = a.ptr<T>();
        const T* pb = b.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t n = 0; n < N; ++n) {
            std::memcpy(po + n * (Ca + Cb) * hw, pa + n * Ca * hw, sizeof(T) * Ca * hw);
            std::memcpy(po + (n * (Ca + Cb) + Ca) * hw, pb + n * Cb * hw, sizeof(T) * Cb * hw);
        }
    });
    if (want_grad({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([ai, bi, oi, N, Ca, Cb, hw]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                const T* pg = g.ptr<T>();
                if (ai->requires_grad) {
                    Tensor da = Tensor::zeros(ai->shape, ai->dtype);
                    T* pd = da.ptr<T>();
                    for (int64_t n = 0; n < N; ++n)
                        std::memcpy(pd + n * Ca * hw, pg + n * (Ca + Cb) * hw, sizeof(T) * Ca * hw);
                    Tensor::wrap(ai).accumulate_grad(da);
                }
                if (bi->requires_grad) {
                    Tensor db = Tensor::zeros(bi->shape, bi->dtype);
                    T* pd = db.ptr<T>();
                    for (int64_t n = 0; n < N; ++n)
                        std::memcpy(pd + n * Cb * hw, pg + (n * (Ca + Cb) + Ca) * hw,
                                    sizeof(T) * Cb * hw);
                    Tensor::wrap(bi).accumulate_grad(db);
                }
            });
        });
    }
    return out;
}

Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1) {
    require_ndim(x, 4, "slice_channels");
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (c0 < 0 || c1 > C || c0 >= c1)
        throw DimensionError("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") invalid for C=" + std::to_string(C));
    int64_t Cs = c1 - c0, hw = H * W;
    Tensor out = Tensor::zeros({N, Cs, H, W}, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        for (int64_t n = 0; n < N; ++n)
            std::memcpy(po + n * Cs * hw, px + (n * C + c0) * hw, sizeof(T) * Cs * hw);
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi, N, C, c0, Cs, hw]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                const T* pg = g.ptr<T>();
                T* pd = dx.ptr<T>();
                for (int64_t n = 0; n < N; ++n)
                    std::memcpy(pd + (n * C + c0) * hw, pg + n * Cs * hw, sizeof(T) * Cs * hw);
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                             " changes element count");
    Tensor out = Tensor::zeros(shape, x.dtype());
    dtype_dispatch(x.dtype(), [&]<class T>() {
        std::memcpy(out.ptr<T>(), x.ptr<T>(), sizeof(T) * static_cast<size_t>(x.numel()));
    });
    if (want_grad({&x})) {
        out.set_requires_grad(true);
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::current().record([xi, oi]() {
            Tensor g = grad_of(oi);
            if (!g.defined()) return;
            dtype_dispatch(g.dtype(), [&]<class T>() {
                Tensor dx = Tensor::zeros(xi->shape, xi->dtype);
                std::memcpy(dx.ptr<T>(), g.ptr<T>(),
                            sizeof(T) * static_cast<size_t>(shape_numel(xi->shape)));
                Tensor::wrap(xi).accumulate_grad(dx);
            });
        });
    }
    return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    int64_t n = x.numel();
    dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        T* po = out.ptr<T>();
        T l = static_cast<T>(lo), h = static_cast<T>(hi);
        for (int64_t i = 0; i < n; ++i) po[i] = std::min(h, std::max(l, px[i]));
    });
    return out;
}

bool all_finite(const Tensor& x) {
    int64_t n = x.numel();
    return dtype_dispatch(x.dtype(), [&]<class T>() {
        const T* px = x.ptr<T>();
        for (int64_t i = 0; i < n; ++i)
            if (!std::isfinite(px[i])) return false;
        return true;
    });
}

}  // namespace framecast
