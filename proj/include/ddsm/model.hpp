#pragma once

// The learned index functional: channel stacking of coordinate slices and
// Cauchy difference fields, a mirrored encoder/decoder CNN with skip
// concatenation, momentum-SGD training on the MSE target, reconstruction,
// and overlap metrics.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ddsm/data.hpp"
#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/nn.hpp"
#include "ddsm/rng.hpp"

namespace ddsm {

struct NetworkConfig {
    std::size_t grid_n1 = 64;
    std::size_t grid_n2 = 64;
    std::size_t in_channels = 12;  // N + 2 coordinate slices
    std::vector<std::size_t> encoder_widths = {32, 64, 128};
    std::size_t kernel = 3;
    bool sigmoid_head = true;
    double lr = 1e-2;
    double momentum = 0.9;
    std::size_t batch = 16;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
};

// Small widths tuned for 64^2 grids on a laptop CPU. The learning rate is
// calibrated to the summed-node loss scale (gradients grow with node count).
inline NetworkConfig desk_preset(std::size_t grid_n, std::size_t n_pairs) {
    NetworkConfig cfg;
    cfg.grid_n1 = cfg.grid_n2 = grid_n;
    cfg.in_channels = n_pairs + 2;
    cfg.encoder_widths = {8, 16, 32};
    cfg.lr = 1.5e-3;
    return cfg;
}

inline NetworkConfig full_preset(std::size_t grid_n, std::size_t n_pairs) {
    NetworkConfig cfg;
    cfg.grid_n1 = cfg.grid_n2 = grid_n;
    cfg.in_channels = n_pairs + 2;
    cfg.encoder_widths = {32, 64, 128};
    cfg.lr = 1e-4;
    return cfg;
}

// Input stack: [x1-coords, x2-coords, phi_1, ..., phi_N] as (C, n1, n2); in
// 3D a third coordinate slice joins and the stack is (C, n1, n2, n3).
inline nn::Tensor stack_input(const GridPtr& grid, const std::vector<ScalarField>& phis) {
    for (const auto& phi : phis)
        if (phi.grid.get() != grid.get()) throw shape_error("phi field on a different grid");
    const std::size_t dim = static_cast<std::size_t>(grid->dim);
    const std::size_t channels = phis.size() + dim;
    std::vector<std::size_t> shape{channels};
    for (std::size_t a = 0; a < dim; ++a) shape.push_back(grid->counts[a]);
    nn::Tensor z(shape);

    const std::size_t plane = grid->node_count();
    // node (i1,i2[,i3]) maps to channel offset i1*n2[*n3] + i2[*n3 + i3]
    auto channel_index = [&](std::size_t node) {
        const auto m = grid->multi_index(node);
        std::size_t at = m[0];
        for (std::size_t a = 1; a < dim; ++a) at = at * grid->counts[a] + m[a];
        return at;
    };
    for (std::size_t node = 0; node < plane; ++node) {
        const auto x = grid->coords(node);
        const std::size_t at = channel_index(node);
        for (std::size_t a = 0; a < dim; ++a) z.v[a * plane + at] = x[a];
        for (std::size_t c = 0; c < phis.size(); ++c)
            z.v[(dim + c) * plane + at] = phis[c].v[node];
    }
    return z;
}

namespace detail_model {

struct EncoderBlock {
    nn::ConvParams conv;
    nn::BatchNormParams bn;
};

struct DecoderBlock {
    nn::ConvParams tconv;
    nn::BatchNormParams bn;
};

struct ForwardCache {
    nn::Tensor input;
    // encoder
    std::vector<nn::Tensor> conv_in;      // input to each conv
    std::vector<nn::BatchNormCache> enc_bn;
    std::vector<nn::Tensor> enc_bn_out;   // relu input
    std::vector<nn::Tensor> enc_act;      // pre-pool activation (skip source)
    std::vector<std::vector<std::size_t>> pool_argmax;
    std::vector<std::vector<std::size_t>> pool_in_shape;
    // decoder
    std::vector<nn::Tensor> tconv_in;
    std::vector<nn::BatchNormCache> dec_bn;
    std::vector<nn::Tensor> dec_bn_out;
    std::vector<nn::Tensor> dec_act;
    // head
    nn::Tensor head_in;
    nn::Tensor head_out;  // post-activation
};

struct Gradients {
    std::vector<nn::ConvGrads> enc_conv;
    std::vector<nn::BatchNormGrads> enc_bn;
    std::vector<nn::ConvGrads> dec_tconv;
    std::vector<nn::BatchNormGrads> dec_bn;
    nn::ConvGrads head;
};

}  // namespace detail_model

class Network {
public:
    explicit Network(NetworkConfig cfg) : config(std::move(cfg)) {
        if (config.encoder_widths.empty()) throw parameter_error("need at least one block");
        const std::size_t depth = config.encoder_widths.size();
        const std::size_t h = config.grid_n1 - config.grid_n1 % 2;
        const std::size_t w = config.grid_n2 - config.grid_n2 % 2;
        const std::size_t factor = std::size_t{1} << depth;
        if (h % factor != 0 || w % factor != 0)
            throw parameter_error(
                "grid size (after even-crop) must be divisible by 2^depth; use fewer encoder "
                "blocks for this grid");

        Rng rng(config.seed);
        auto init = [&rng](nn::Tensor& t, std::size_t fan_in, std::size_t fan_out) {
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : t.v) v = rng.uniform(-bound, bound);
        };

        const std::size_t k = config.kernel;
        std::size_t channels = config.in_channels;
        for (std::size_t i = 0; i < depth; ++i) {
            detail_model::EncoderBlock block;
            block.conv = nn::make_conv(channels, config.encoder_widths[i], k);
            init(block.conv.w, channels * k * k, config.encoder_widths[i] * k * k);
            block.bn = nn::make_batchnorm(config.encoder_widths[i]);
            channels = config.encoder_widths[i];
            encoder_.push_back(std::move(block));
        }
        for (std::size_t i = 0; i < depth; ++i) {
            const std::size_t mirror = depth - 1 - i;
            const std::size_t out = config.encoder_widths[mirror];
            detail_model::DecoderBlock block;
            block.tconv = nn::make_tconv(channels, out, k);
            init(block.tconv.w, channels * k * k, out * k * k);
            block.bn = nn::make_batchnorm(out);
            channels = 2 * out;  // concat with the mirrored pre-pool activation
            decoder_.push_back(std::move(block));
        }
        head_ = nn::make_conv(channels, 1, 1);
        init(head_.w, channels, 1);
    }

    NetworkConfig config;

    // x: (B, C, H, W) with even H, W. Output: (B, 1, H, W).
    nn::Tensor forward(const nn::Tensor& x, bool train,
                       detail_model::ForwardCache* cache = nullptr) {
        if (x.rank() != 4 || x.shape[1] != config.in_channels)
            throw shape_error("network input must be (B, " +
                              std::to_string(config.in_channels) + ", H, W)");
        if (cache) *cache = detail_model::ForwardCache{};
        if (cache) cache->input = x;

        std::vector<nn::Tensor> skips;
        nn::Tensor cur = x;
        for (auto& block : encoder_) {
            if (cache) cache->conv_in.push_back(cur);
            cur = nn::conv_forward(cur, block.conv);
            nn::BatchNormCache bn_cache;
            cur = nn::batchnorm_forward(cur, block.bn, train, cache ? &bn_cache : nullptr);
            if (cache) {
                cache->enc_bn.push_back(std::move(bn_cache));
                cache->enc_bn_out.push_back(cur);
            }
            cur = nn::activation_forward(cur, nn::Activation::relu);
            if (cache) cache->enc_act.push_back(cur);
            skips.push_back(cur);
            auto pooled = nn::maxpool_forward(cur, 2);
            if (cache) {
                cache->pool_argmax.push_back(std::move(pooled.argmax));
                cache->pool_in_shape.push_back(cur.shape);
            }
            cur = std::move(pooled.y);
        }
        const std::size_t depth = encoder_.size();
        for (std::size_t i = 0; i < depth; ++i) {
            auto& block = decoder_[i];
            if (cache) cache->tconv_in.push_back(cur);
            cur = nn::tconv_forward(cur, block.tconv, 2);
            nn::BatchNormCache bn_cache;
            cur = nn::batchnorm_forward(cur, block.bn, train, cache ? &bn_cache : nullptr);
            if (cache) {
                cache->dec_bn.push_back(std::move(bn_cache));
                cache->dec_bn_out.push_back(cur);
            }
            cur = nn::activation_forward(cur, nn::Activation::relu);
            if (cache) cache->dec_act.push_back(cur);
            cur = concat_channels(cur, skips[depth - 1 - i]);
        }
        if (cache) cache->head_in = cur;
        cur = nn::conv_forward(cur, head_);
        cur = nn::activation_forward(
            cur, config.sigmoid_head ? nn::Activation::sigmoid : nn::Activation::relu);
        if (cache) cache->head_out = cur;
        return cur;
    }

    detail_model::Gradients backward(const detail_model::ForwardCache& cache,
                                     const nn::Tensor& dloss) {
        detail_model::Gradients grads;
        const std::size_t depth = encoder_.size();

        nn::Tensor d = config.sigmoid_head
                           ? nn::activation_backward(cache.head_out, nn::Activation::sigmoid,
                                                     dloss)
                           : relu_backward_from_output(cache.head_out, dloss);
        grads.head = nn::conv_backward(cache.head_in, head_, d);
        d = std::move(grads.head.dx);

        std::vector<nn::Tensor> skip_grads(depth);
        grads.dec_tconv.resize(depth);
        grads.dec_bn.resize(depth);
        for (std::size_t i = depth; i-- > 0;) {
            auto [own, skip] = split_channels(d, cache.dec_act[i].shape[1]);
            skip_grads[depth - 1 - i] = std::move(skip);
            nn::Tensor da =
                nn::activation_backward(cache.dec_bn_out[i], nn::Activation::relu, own);
            grads.dec_bn[i] = nn::batchnorm_backward(cache.dec_bn[i], decoder_[i].bn, da);
            grads.dec_tconv[i] =
                nn::tconv_backward(cache.tconv_in[i], decoder_[i].tconv, grads.dec_bn[i].dx, 2);
            d = std::move(grads.dec_tconv[i].dx);
        }

        grads.enc_conv.resize(depth);
        grads.enc_bn.resize(depth);
        for (std::size_t i = depth; i-- > 0;) {
            nn::Tensor dact =
                nn::maxpool_backward(cache.pool_argmax[i], cache.pool_in_shape[i], d);
            for (std::size_t t = 0; t < dact.size(); ++t) dact.v[t] += skip_grads[i].v[t];
            nn::Tensor da =
                nn::activation_backward(cache.enc_bn_out[i], nn::Activation::relu, dact);
            grads.enc_bn[i] = nn::batchnorm_backward(cache.enc_bn[i], encoder_[i].bn, da);
            grads.enc_conv[i] =
                nn::conv_backward(cache.conv_in[i], encoder_[i].conv, grads.enc_bn[i].dx);
            d = std::move(grads.enc_conv[i].dx);
        }
        return grads;
    }

    void apply_sgd(const detail_model::Gradients& grads, double lr, double momentum) {
        for (std::size_t i = 0; i < encoder_.size(); ++i) {
            nn::sgd_step(encoder_[i].conv.w, grads.enc_conv[i].dw, encoder_[i].conv.vw, lr,
                         momentum);
            nn::sgd_step(encoder_[i].conv.b, grads.enc_conv[i].db, encoder_[i].conv.vb, lr,
                         momentum);
            nn::sgd_step(encoder_[i].bn.gamma, grads.enc_bn[i].dgamma, encoder_[i].bn.vgamma,
                         lr, momentum);
            nn::sgd_step(encoder_[i].bn.beta, grads.enc_bn[i].dbeta, encoder_[i].bn.vbeta, lr,
                         momentum);
        }
        for (std::size_t i = 0; i < decoder_.size(); ++i) {
            nn::sgd_step(decoder_[i].tconv.w, grads.dec_tconv[i].dw, decoder_[i].tconv.vw, lr,
                         momentum);
            nn::sgd_step(decoder_[i].tconv.b, grads.dec_tconv[i].db, decoder_[i].tconv.vb, lr,
                         momentum);
            nn::sgd_step(decoder_[i].bn.gamma, grads.dec_bn[i].dgamma, decoder_[i].bn.vgamma,
                         lr, momentum);
            nn::sgd_step(decoder_[i].bn.beta, grads.dec_bn[i].dbeta, decoder_[i].bn.vbeta, lr,
                         momentum);
        }
        nn::sgd_step(head_.w, grads.head.dw, head_.vw, lr, momentum);
        nn::sgd_step(head_.b, grads.head.db, head_.vb, lr, momentum);
    }

    // Parameter traversal in declaration order (persistence, gradient tests).
    template <class Fn>
    void visit_params(Fn&& fn) {
        for (auto& block : encoder_) {
            fn(block.conv.w);
            fn(block.conv.b);
            fn(block.bn.gamma);
            fn(block.bn.beta);
            fn(block.bn.running_mean);
            fn(block.bn.running_var);
        }
        for (auto& block : decoder_) {
            fn(block.tconv.w);
            fn(block.tconv.b);
            fn(block.bn.gamma);
            fn(block.bn.beta);
            fn(block.bn.running_mean);
            fn(block.bn.running_var);
        }
        fn(head_.w);
        fn(head_.b);
    }

    nn::ConvParams& head() { return head_; }

private:
    static nn::Tensor concat_channels(const nn::Tensor& a, const nn::Tensor& b) {
        nn::Tensor out({a.shape[0], a.shape[1] + b.shape[1], a.shape[2], a.shape[3]});
        const std::size_t plane = a.shape[2] * a.shape[3];
        for (std::size_t n = 0; n < a.shape[0]; ++n) {
            std::copy(a.v.begin() + n * a.shape[1] * plane,
                      a.v.begin() + (n + 1) * a.shape[1] * plane,
                      out.v.begin() + n * out.shape[1] * plane);
            std::copy(b.v.begin() + n * b.shape[1] * plane,
                      b.v.begin() + (n + 1) * b.shape[1] * plane,
                      out.v.begin() + (n * out.shape[1] + a.shape[1]) * plane);
        }
        return out;
    }

    static std::pair<nn::Tensor, nn::Tensor> split_channels(const nn::Tensor& d,
                                                            std::size_t first) {
        const std::size_t rest = d.shape[1] - first;
        nn::Tensor a({d.shape[0], first, d.shape[2], d.shape[3]});
        nn::Tensor b({d.shape[0], rest, d.shape[2], d.shape[3]});
        const std::size_t plane = d.shape[2] * d.shape[3];
        for (std::size_t n = 0; n < d.shape[0]; ++n) {
            std::copy(d.v.begin() + n * d.shape[1] * plane,
                      d.v.begin() + (n * d.shape[1] + first) * plane,
                      a.v.begin() + n * first * plane);
            std::copy(d.v.begin() + (n * d.shape[1] + first) * plane,
                      d.v.begin() + (n + 1) * d.shape[1] * plane,
                      b.v.begin() + n * rest * plane);
        }
        return {std::move(a), std::move(b)};
    }

    static nn::Tensor relu_backward_from_output(const nn::Tensor& y, const nn::Tensor& dy) {
        nn::Tensor dx(dy.shape);
        for (std::size_t i = 0; i < dy.size(); ++i) dx.v[i] = y.v[i] > 0.0 ? dy.v[i] : 0.0;
        return dx;
    }

    std::vector<detail_model::EncoderBlock> encoder_;
    std::vector<detail_model::DecoderBlock> decoder_;
    nn::ConvParams head_;
};

namespace detail_model {

// Odd grids are cropped to even sizes by dropping the last row/column; the
// reconstruction pads the prediction back by edge replication.
inline nn::Tensor crop_even(const nn::Tensor& chw) {
    const std::size_t C = chw.shape[0], H = chw.shape[1], W = chw.shape[2];
    const std::size_t He = H - H % 2, We = W - W % 2;
    if (He == H && We == W) return chw;
    nn::Tensor out({C, He, We});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < He; ++i)
            for (std::size_t j = 0; j < We; ++j)
                out.v[(c * He + i) * We + j] = chw.v[(c * H + i) * W + j];
    return out;
}

}  // namespace detail_model

// Minibatch SGD over the sample set; returns the mean training loss per epoch.
inline std::vector<double> train(Network& net, const std::vector<Sample>& samples,
                                 const GridPtr& grid) {
    if (samples.empty()) throw parameter_error("empty training set");
    const auto& cfg = net.config;
    const std::size_t n_pairs = cfg.in_channels - 2;
    for (const auto& s : samples) {
        if (s.truth.grid.get() != grid.get() || s.phis.size() != n_pairs)
            throw shape_error("sample does not match the network configuration");
    }
    if (grid->dim != 2) throw shape_error("training is defined for 2D grids");
    if (grid->counts[0] != cfg.grid_n1 || grid->counts[1] != cfg.grid_n2)
        throw shape_error("grid does not match the network configuration");

    const std::size_t He = cfg.grid_n1 - cfg.grid_n1 % 2;
    const std::size_t We = cfg.grid_n2 - cfg.grid_n2 % 2;

    auto sample_input = [&](const Sample& s) {
        return detail_model::crop_even(stack_input(grid, s.phis));
    };
    auto sample_target = [&](const Sample& s) {
        nn::Tensor full({1, cfg.grid_n1, cfg.grid_n2});
        for (std::size_t node = 0; node < grid->node_count(); ++node) {
            const auto m = grid->multi_index(node);
            full.v[m[0] * cfg.grid_n2 + m[1]] = s.truth.v[node];
        }
        return detail_model::crop_even(full);
    };

    Rng rng(cfg.seed ^ 0x7261696eULL);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, order.size() - start);
            nn::Tensor x({bs, cfg.in_channels, He, We});
            nn::Tensor target({bs, 1, He, We});
            for (std::size_t b = 0; b < bs; ++b) {
                const auto& s = samples[order[start + b]];
                const auto xi = sample_input(s);
                const auto ti = sample_target(s);
                std::copy(xi.v.begin(), xi.v.end(),
                          x.v.begin() + b * cfg.in_channels * He * We);
                std::copy(ti.v.begin(), ti.v.end(), target.v.begin() + b * He * We);
            }
            detail_model::ForwardCache cache;
            auto pred = net.forward(x, /*train=*/true, &cache);
            auto [loss, dloss] = nn::mse_loss(pred, target);
            auto grads = net.backward(cache, dloss);
            net.apply_sgd(grads, cfg.lr, cfg.momentum);
            epoch_loss += loss * static_cast<double>(bs);
            seen += bs;
        }
        history.push_back(epoch_loss / static_cast<double>(seen));
    }
    return history;
}

// Runs the network on one sample's difference fields (eval mode) and maps the
// output back onto the grid, padding cropped rows/columns by replication.
inline ScalarField reconstruct(Network& net, const GridPtr& grid,
                               const std::vector<ScalarField>& phis) {
    const auto& cfg = net.config;
    if (phis.size() != cfg.in_channels - 2)
        throw shape_error("field count does not match the network configuration");
    const auto chw = detail_model::crop_even(stack_input(grid, phis));
    nn::Tensor x({1, chw.shape[0], chw.shape[1], chw.shape[2]});
    x.v = chw.v;
    auto y = net.forward(x, /*train=*/false);

    const std::size_t He = y.shape[2], We = y.shape[3];
    ScalarField out(grid, 0.0);
    for (std::size_t node = 0; node < grid->node_count(); ++node) {
        const auto m = grid->multi_index(node);
        const std::size_t i = std::min(m[0], He - 1);  // edge replication on cropped rims
        const std::size_t j = std::min(m[1], We - 1);
        out.v[node] = y.v[i * We + j];
    }
    return out;
}

inline ScalarField reconstruct(Network& net, const Sample& sample) {
    return reconstruct(net, sample.truth.grid, sample.phis);
}

struct Metrics {
    double mse = 0.0;
    double dice = 0.0;
    double iou = 0.0;
    bool argmax_inside = false;
};

// Overlap scores of the thresholded prediction against the truth mask.
inline Metrics evaluate(const ScalarField& pred, const ScalarField& truth,
                        double threshold = 0.5) {
    if (pred.grid.get() != truth.grid.get()) throw shape_error("fields on different grids");
    Metrics m;
    double inter = 0.0, pred_count = 0.0, truth_count = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_at = 0;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        const double d = pred.v[p] - truth.v[p];
        m.mse += d * d;
        const bool a = pred.v[p] > threshold;
        const bool b = truth.v[p] > threshold;
        inter += (a && b) ? 1.0 : 0.0;
        pred_count += a ? 1.0 : 0.0;
        truth_count += b ? 1.0 : 0.0;
        if (pred.v[p] > best) {
            best = pred.v[p];
            best_at = p;
        }
    }
    m.mse /= static_cast<double>(pred.size());
    m.dice = (pred_count + truth_count) > 0.0 ? 2.0 * inter / (pred_count + truth_count) : 1.0;
    const double uni = pred_count + truth_count - inter;
    m.iou = uni > 0.0 ? inter / uni : 1.0;
    m.argmax_inside = truth.v[best_at] > threshold;
    return m;
}

}  // namespace ddsm
