#pragma once

// Minimal dense-tensor layer set with exact reverse-mode gradients:
// convolution, transposed convolution, max pooling, batch normalization,
// ReLU/sigmoid, MSE loss, and momentum SGD. Double precision, single
// threaded, bit-deterministic given fixed inputs.
//
// Convolutions use the cross-correlation convention with zero padding.
// conv_gather / conv_scatter / conv_kernel_grad are the three primitive maps;
// the transposed convolution is the adjoint of the strided convolution with
// the same kernel, so tconv_forward *is* conv_scatter and the adjoint
// identity <tconv(x), y> = <x, conv(y)> holds to machine precision.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ddsm/errors.hpp"
#include "ddsm/rng.hpp"

namespace ddsm::nn {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;
    std::vector<double> grad;  // allocated for trainable parameters only

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        v.assign(count(shape), 0.0);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }
    std::size_t size() const { return v.size(); }
    std::size_t rank() const { return shape.size(); }

    void alloc_grad() { grad.assign(v.size(), 0.0); }
    void zero_grad() { grad.assign(v.size(), 0.0); }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw shape_error(what);
}

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// y(b,o,p) = sum_{i,dy,dx} K(o,i,dy,dx) x(b,i,s*p+dy-pad, s*q+dx-pad)
inline void conv_gather(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad,
                        Tensor& y) {
    const std::size_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t Co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t Ho = y.shape[2], Wo = y.shape[3];
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Co; ++o) {
            double* yp = &y.v[((b * Co + o) * Ho) * Wo];
            for (std::size_t i = 0; i < Ci; ++i) {
                const double* xp = &x.v[((b * Ci + i) * H) * W];
                const double* kp = &k.v[((o * Ci + i) * kh) * kw];
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const double kv = kp[dy * kw + dx];
                        if (kv == 0.0) continue;
                        for (std::size_t oy = 0; oy < Ho; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            const double* xrow = xp + iy * static_cast<std::ptrdiff_t>(W);
                            double* yrow = yp + oy * Wo;
                            for (std::size_t ox = 0; ox < Wo; ++ox) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + dx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                yrow[ox] += kv * xrow[ix];
                            }
                        }
                    }
            }
        }
}

// adjoint of conv_gather: x(b,i,.) += sum K(o,i,.) y(b,o,.)
inline void conv_scatter(const Tensor& y, const Tensor& k, std::size_t stride, std::size_t pad,
                         Tensor& x) {
    const std::size_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t Co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t Ho = y.shape[2], Wo = y.shape[3];
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Co; ++o) {
            const double* yp = &y.v[((b * Co + o) * Ho) * Wo];
            for (std::size_t i = 0; i < Ci; ++i) {
                double* xp = &x.v[((b * Ci + i) * H) * W];
                const double* kp = &k.v[((o * Ci + i) * kh) * kw];
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const double kv = kp[dy * kw + dx];
                        if (kv == 0.0) continue;
                        for (std::size_t oy = 0; oy < Ho; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            double* xrow = xp + iy * static_cast<std::ptrdiff_t>(W);
                            const double* yrow = yp + oy * Wo;
                            for (std::size_t ox = 0; ox < Wo; ++ox) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + dx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                xrow[ix] += kv * yrow[ox];
                            }
                        }
                    }
            }
        }
}

// dK(o,i,dy,dx) = sum_{b,p} y(b,o,p) x(b,i,s*p+dy-pad,...)
inline void conv_kernel_grad(const Tensor& x, const Tensor& y, std::size_t stride,
                             std::size_t pad, Tensor& dk) {
    const std::size_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t Co = dk.shape[0], kh = dk.shape[2], kw = dk.shape[3];
    const std::size_t Ho = y.shape[2], Wo = y.shape[3];
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Co; ++o) {
            const double* yp = &y.v[((b * Co + o) * Ho) * Wo];
            for (std::size_t i = 0; i < Ci; ++i) {
                const double* xp = &x.v[((b * Ci + i) * H) * W];
                double* kp = &dk.v[((o * Ci + i) * kh) * kw];
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        double acc = 0.0;
                        for (std::size_t oy = 0; oy < Ho; ++oy) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            const double* xrow = xp + iy * static_cast<std::ptrdiff_t>(W);
                            const double* yrow = yp + oy * Wo;
                            for (std::size_t ox = 0; ox < Wo; ++ox) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + dx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += yrow[ox] * xrow[ix];
                            }
                        }
                        kp[dy * kw + dx] += acc;
                    }
            }
        }
}

}  // namespace detail

struct ConvParams {
    Tensor w;  // conv: [out][in][kh][kw]; tconv: [in][out][kh][kw]
    Tensor b;  // [out]
    Tensor vw, vb;  // SGD momentum state
};

inline ConvParams make_conv(std::size_t in, std::size_t out, std::size_t k) {
    if (k % 2 == 0) throw parameter_error("kernel size must be odd");
    ConvParams p;
    p.w = Tensor({out, in, k, k});
    p.b = Tensor({out});
    p.vw = Tensor(p.w.shape);
    p.vb = Tensor(p.b.shape);
    return p;
}

inline ConvParams make_tconv(std::size_t in, std::size_t out, std::size_t k) {
    if (k % 2 == 0) throw parameter_error("kernel size must be odd");
    ConvParams p;
    p.w = Tensor({in, out, k, k});
    p.b = Tensor({out});
    p.vw = Tensor(p.w.shape);
    p.vb = Tensor(p.b.shape);
    return p;
}

struct ConvGrads {
    Tensor dx, dw, db;
};

inline Tensor conv_forward(const Tensor& x, const ConvParams& p, std::size_t stride = 1) {
    detail::require(x.rank() == 4, "conv input must be rank 4 (B,C,H,W)");
    detail::require(x.shape[1] == p.w.shape[1], "conv channel mismatch");
    const std::size_t k = p.w.shape[2], pad = (k - 1) / 2;
    detail::require(x.shape[2] + 2 * pad >= k && x.shape[3] + 2 * pad >= k,
                    "conv input smaller than kernel");
    Tensor y({x.shape[0], p.w.shape[0], detail::conv_out(x.shape[2], k, stride, pad),
              detail::conv_out(x.shape[3], k, stride, pad)});
    detail::conv_gather(x, p.w, stride, pad, y);
    const std::size_t plane = y.shape[2] * y.shape[3];
    for (std::size_t b = 0; b < y.shape[0]; ++b)
        for (std::size_t o = 0; o < y.shape[1]; ++o) {
            double* yp = &y.v[(b * y.shape[1] + o) * plane];
            for (std::size_t t = 0; t < plane; ++t) yp[t] += p.b.v[o];
        }
    return y;
}

inline ConvGrads conv_backward(const Tensor& x, const ConvParams& p, const Tensor& dy,
                               std::size_t stride = 1) {
    detail::require(dy.shape[1] == p.w.shape[0], "conv upstream channel mismatch");
    const std::size_t k = p.w.shape[2], pad = (k - 1) / 2;
    ConvGrads g;
    g.dx = Tensor(x.shape);
    g.dw = Tensor(p.w.shape);
    g.db = Tensor(p.b.shape);
    detail::conv_scatter(dy, p.w, stride, pad, g.dx);
    detail::conv_kernel_grad(x, dy, stride, pad, g.dw);
    const std::size_t plane = dy.shape[2] * dy.shape[3];
    for (std::size_t b = 0; b < dy.shape[0]; ++b)
        for (std::size_t o = 0; o < dy.shape[1]; ++o) {
            const double* dp = &dy.v[(b * dy.shape[1] + o) * plane];
            double acc = 0.0;
            for (std::size_t t = 0; t < plane; ++t) acc += dp[t];
            g.db.v[o] += acc;
        }
    return g;
}

// Output spatial size is stride * input size (kernel odd, same-style padding).
inline Tensor tconv_forward(const Tensor& x, const ConvParams& p, std::size_t stride = 2) {
    detail::require(x.rank() == 4, "tconv input must be rank 4 (B,C,H,W)");
    detail::require(x.shape[1] == p.w.shape[0], "tconv channel mismatch");
    if (stride < 1) throw parameter_error("tconv stride must be >= 1");
    const std::size_t k = p.w.shape[2], pad = (k - 1) / 2;
    Tensor y({x.shape[0], p.w.shape[1], stride * x.shape[2], stride * x.shape[3]});
    detail::require(detail::conv_out(y.shape[2], k, stride, pad) == x.shape[2] &&
                        detail::conv_out(y.shape[3], k, stride, pad) == x.shape[3],
                    "tconv geometry mismatch");
    // x plays the conv-output role; the kernel's leading axes read as
    // [conv-out = tconv-in][conv-in = tconv-out].
    detail::conv_scatter(x, p.w, stride, pad, y);
    const std::size_t plane = y.shape[2] * y.shape[3];
    for (std::size_t b = 0; b < y.shape[0]; ++b)
        for (std::size_t o = 0; o < y.shape[1]; ++o) {
            double* yp = &y.v[(b * y.shape[1] + o) * plane];
            for (std::size_t t = 0; t < plane; ++t) yp[t] += p.b.v[o];
        }
    return y;
}

inline ConvGrads tconv_backward(const Tensor& x, const ConvParams& p, const Tensor& dy,
                                std::size_t stride = 2) {
    const std::size_t k = p.w.shape[2], pad = (k - 1) / 2;
    ConvGrads g;
    g.dx = Tensor(x.shape);
    g.dw = Tensor(p.w.shape);
    g.db = Tensor(p.b.shape);
    detail::conv_gather(dy, p.w, stride, pad, g.dx);
    detail::conv_kernel_grad(dy, x, stride, pad, g.dw);
    const std::size_t plane = dy.shape[2] * dy.shape[3];
    for (std::size_t b = 0; b < dy.shape[0]; ++b)
        for (std::size_t o = 0; o < dy.shape[1]; ++o) {
            const double* dp = &dy.v[(b * dy.shape[1] + o) * plane];
            double acc = 0.0;
            for (std::size_t t = 0; t < plane; ++t) acc += dp[t];
            g.db.v[o] += acc;
        }
    return g;
}

struct PoolResult {
    Tensor y;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

inline PoolResult maxpool_forward(const Tensor& x, std::size_t window = 2) {
    detail::require(x.rank() == 4, "pool input must be rank 4");
    detail::require(x.shape[2] % window == 0 && x.shape[3] % window == 0,
                    "pool needs spatial dims divisible by the window");
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t Ho = H / window, Wo = W / window;
    PoolResult r;
    r.y = Tensor({B, C, Ho, Wo});
    r.argmax.assign(r.y.size(), 0);
    std::size_t out = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* xp = &x.v[bc * H * W];
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox, ++out) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_at = 0;
                for (std::size_t wy = 0; wy < window; ++wy)
                    for (std::size_t wx = 0; wx < window; ++wx) {
                        const std::size_t at = (oy * window + wy) * W + ox * window + wx;
                        if (xp[at] > best) {  // strict: first index wins ties
                            best = xp[at];
                            best_at = at;
                        }
                    }
                r.y.v[out] = best;
                r.argmax[out] = bc * H * W + best_at;
            }
    }
    return r;
}

inline Tensor maxpool_backward(const std::vector<std::size_t>& argmax,
                               const std::vector<std::size_t>& input_shape, const Tensor& dy) {
    Tensor dx(input_shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.v[argmax[i]] += dy.v[i];
    return dx;
}

struct BatchNormParams {
    Tensor gamma, beta;
    Tensor running_mean, running_var;
    Tensor vgamma, vbeta;
    double eps = 1e-5;
    double momentum = 0.9;
};

inline BatchNormParams make_batchnorm(std::size_t channels) {
    BatchNormParams p;
    p.gamma = Tensor({channels});
    p.beta = Tensor({channels});
    p.running_mean = Tensor({channels});
    p.running_var = Tensor({channels});
    p.vgamma = Tensor({channels});
    p.vbeta = Tensor({channels});
    for (auto& v : p.gamma.v) v = 1.0;
    for (auto& v : p.running_var.v) v = 1.0;
    return p;
}

struct BatchNormCache {
    Tensor xhat;
    std::vector<double> invstd;  // per channel
    bool train = false;
};

inline Tensor batchnorm_forward(const Tensor& x, BatchNormParams& p, bool train,
                                BatchNormCache* cache = nullptr) {
    detail::require(x.rank() == 4, "batchnorm input must be rank 4");
    const std::size_t B = x.shape[0], C = x.shape[1], plane = x.shape[2] * x.shape[3];
    detail::require(C == p.gamma.size(), "batchnorm channel mismatch");
    const std::size_t m = B * plane;
    if (train && m < 2) throw parameter_error("batchnorm train mode needs >= 2 values");
    Tensor y(x.shape);
    if (cache) {
        cache->xhat = Tensor(x.shape);
        cache->invstd.assign(C, 0.0);
        cache->train = train;
    }
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (train) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xp = &x.v[(b * C + c) * plane];
                for (std::size_t t = 0; t < plane; ++t) s += xp[t];
            }
            mean = s / static_cast<double>(m);
            double s2 = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xp = &x.v[(b * C + c) * plane];
                for (std::size_t t = 0; t < plane; ++t) s2 += (xp[t] - mean) * (xp[t] - mean);
            }
            var = s2 / static_cast<double>(m);
            p.running_mean.v[c] = p.momentum * p.running_mean.v[c] + (1.0 - p.momentum) * mean;
            p.running_var.v[c] = p.momentum * p.running_var.v[c] + (1.0 - p.momentum) * var;
        } else {
            mean = p.running_mean.v[c];
            var = p.running_var.v[c];
        }
        const double invstd = 1.0 / std::sqrt(var + p.eps);
        if (cache) cache->invstd[c] = invstd;
        for (std::size_t b = 0; b < B; ++b) {
            const double* xp = &x.v[(b * C + c) * plane];
            double* yp = &y.v[(b * C + c) * plane];
            double* hp = cache ? &cache->xhat.v[(b * C + c) * plane] : nullptr;
            for (std::size_t t = 0; t < plane; ++t) {
                const double xhat = (xp[t] - mean) * invstd;
                if (hp) hp[t] = xhat;
                yp[t] = p.gamma.v[c] * xhat + p.beta.v[c];
            }
        }
    }
    return y;
}

struct BatchNormGrads {
    Tensor dx, dgamma, dbeta;
};

inline BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNormParams& p,
                                         const Tensor& dy) {
    const std::size_t B = dy.shape[0], C = dy.shape[1], plane = dy.shape[2] * dy.shape[3];
    const double m = static_cast<double>(B * plane);
    BatchNormGrads g;
    g.dx = Tensor(dy.shape);
    g.dgamma = Tensor({C});
    g.dbeta = Tensor({C});
    for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double* dp = &dy.v[(b * C + c) * plane];
            const double* hp = &cache.xhat.v[(b * C + c) * plane];
            for (std::size_t t = 0; t < plane; ++t) {
                sum_dy += dp[t];
                sum_dy_xhat += dp[t] * hp[t];
            }
        }
        g.dgamma.v[c] = sum_dy_xhat;
        g.dbeta.v[c] = sum_dy;
        const double scale = p.gamma.v[c] * cache.invstd[c];
        for (std::size_t b = 0; b < B; ++b) {
            const double* dp = &dy.v[(b * C + c) * plane];
            const double* hp = &cache.xhat.v[(b * C + c) * plane];
            double* gp = &g.dx.v[(b * C + c) * plane];
            for (std::size_t t = 0; t < plane; ++t) {
                if (cache.train)
                    gp[t] = scale * (dp[t] - sum_dy / m - hp[t] * sum_dy_xhat / m);
                else
                    gp[t] = scale * dp[t];
            }
        }
    }
    return g;
}

enum class Activation { relu, sigmoid };

inline Tensor activation_forward(const Tensor& x, Activation kind) {
    Tensor y(x.shape);
    if (kind == Activation::relu)
        for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
    else
        for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
    return y;
}

// relu uses the input, sigmoid uses the output; pass whichever was kept.
inline Tensor activation_backward(const Tensor& x_or_y, Activation kind, const Tensor& dy) {
    Tensor dx(dy.shape);
    if (kind == Activation::relu)
        for (std::size_t i = 0; i < dy.size(); ++i)
            dx.v[i] = x_or_y.v[i] > 0.0 ? dy.v[i] : 0.0;  // subgradient 0 at the kink
    else
        for (std::size_t i = 0; i < dy.size(); ++i)
            dx.v[i] = dy.v[i] * x_or_y.v[i] * (1.0 - x_or_y.v[i]);
    return dx;
}

// Mean over the batch of the summed squared node errors.
inline std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& truth) {
    detail::require(pred.shape == truth.shape, "loss operands must match in shape");
    const double batch = static_cast<double>(pred.rank() >= 1 ? pred.shape[0] : 1);
    double loss = 0.0;
    Tensor grad(pred.shape);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.v[i] - truth.v[i];
        loss += d * d;
        grad.v[i] = 2.0 * d / batch;
    }
    return {loss / batch, std::move(grad)};
}

// v <- momentum*v + g; p <- p - lr*v
inline void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                     double momentum) {
    if (!(lr > 0.0) && lr != 0.0) throw parameter_error("learning rate must be finite");
    if (momentum < 0.0 || momentum >= 1.0) throw parameter_error("momentum must be in [0,1)");
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity.v[i] = momentum * velocity.v[i] + grad.v[i];
        param.v[i] -= lr * velocity.v[i];
    }
}

}  // namespace ddsm::nn
