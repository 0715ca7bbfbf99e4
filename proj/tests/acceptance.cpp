// Acceptance suite: one numbered criterion per run (repeatable --criterion),
// each printing a [PASS]/[FAIL] line with the measured values. Exit code is
// the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddsm/ddsm.hpp"

using namespace ddsm;

namespace {

using Clock = std::chrono::steady_clock;

struct Checker {
    int failures = 0;

    void check(int criterion, bool ok, const std::string& what) {
        std::printf("[%s] C%d: %s\n", ok ? "PASS" : "FAIL", criterion, what.c_str());
        if (!ok) ++failures;
        std::fflush(stdout);
    }
};

double elapsed(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
    char buffer[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buffer, sizeof(buffer), format, args);
    va_end(args);
    return buffer;
}

// ---------------------------------------------------------------- criterion 1

void criterion_solver_order(Checker& c) {
    const auto t0 = Clock::now();
    auto grad = [](const std::array<double, 3>& x) {
        return std::array<double, 3>{std::exp(x[0]), 0.0, 0.0};
    };
    double worst_solve = 0.0;
    std::vector<double> errors;
    for (std::size_t n : {26, 51, 101}) {
        const auto ts = Clock::now();
        auto g = make_grid(2, n);
        BoundaryTrace flux(g);
        for (std::size_t k = 0; k < g->boundary_count(); ++k) {
            const auto& bn = g->boundary[k];
            const auto m = g->multi_index(bn.node);
            const auto x = g->coords(bn.node);
            const auto gx = grad(x);
            double sum = 0.0;
            int faces = 0;
            for (int a = 0; a < 2; ++a) {
                if (m[a] == 0) {
                    sum -= gx[a];
                    ++faces;
                } else if (m[a] == g->counts[a] - 1) {
                    sum += gx[a];
                    ++faces;
                }
            }
            flux.v[k] = sum / faces;
        }
        auto u = solve_neumann(g, ScalarField(g, 1.0), flux);
        worst_solve = std::max(worst_solve, elapsed(ts));
        double err = 0.0;
        for (std::size_t p = 0; p < g->node_count(); ++p)
            err = std::max(err, std::abs(u.v[p] - std::exp(g->coords(p)[0])));
        errors.push_back(err);
    }
    const double order1 = std::log2(errors[0] / errors[1]);
    const double order2 = std::log2(errors[1] / errors[2]);
    const bool ok = std::abs(order1 - 2.0) <= 0.2 && std::abs(order2 - 2.0) <= 0.2 &&
                    worst_solve < 5.0;
    c.check(1, ok,
            fmt("solver order: observed %.3f / %.3f (target 2.0 +- 0.2), slowest solve %.2f s "
                "(< 5 s), total %.1f s",
                order1, order2, worst_solve, elapsed(t0)));
}

// ---------------------------------------------------------------- criterion 2

void criterion_duality_identity(Checker& c) {
    const auto t0 = Clock::now();
    auto g = make_grid(2, 101);
    BackgroundOps bg(g, 0.0);
    DirichletProblem probe_solver(g, 0.0);
    double worst_ratio = 0.0;
    Rng rng(2024);
    for (std::uint64_t seed : {11, 22, 33, 44, 55}) {
        SampleSpec spec;  // scenario 1, single cos(theta) pair
        auto sample = build_sample(spec, g, seed, &bg);
        const auto& pair = sample.pairs[0];
        BoundaryTrace data = pair.f;
        const auto lam = bg.ntd(pair.g);
        for (std::size_t k = 0; k < data.size(); ++k) data.v[k] -= lam.v[k];
        auto phi = cauchy_difference(bg, pair, 0);
        double phimax = 0.0;
        for (double v : phi.v) phimax = std::max(phimax, std::abs(v));
        for (int t = 0; t < 20; ++t) {
            const std::size_t i = 11 + rng.next_index(79);  // dist >= 0.2 from the wall
            const std::size_t j = 11 + rng.next_index(79);
            const std::size_t node = g->index(i, j);
            const auto eta = probing_numeric(g, 0.0, node, &probe_solver);
            const double lhs = duality_product(eta, data, 0);
            worst_ratio = std::max(worst_ratio, std::abs(lhs - phi.v[node]) / phimax);
        }
    }
    const double secs = elapsed(t0);
    c.check(2, worst_ratio <= 0.05 && secs < 600.0,
            fmt("duality identity: worst |<eta,data> - phi(x)| = %.4f of max|phi| "
                "(<= 0.05), %.1f s (< 600 s)",
                worst_ratio, secs));
}

// ---------------------------------------------------------------- criterion 3

void criterion_disk_series(Checker& c) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (double r : {0.2, 0.5, 0.8})
        for (double dt = 0.0; dt < 2.0 * pi; dt += 0.37) {
            const double series = probing_series_disk(r, dt, 0.0, 1e-10, 64);
            const double exact =
                (1.0 - r * r) / (2.0 * pi * (1.0 - 2.0 * r * std::cos(dt) + r * r));
            worst = std::max(worst, std::abs(series / exact - 1.0));
        }
    const double secs = elapsed(t0);
    c.check(3, worst <= 1e-4 && secs < 1.0,
            fmt("disk probing series vs Poisson kernel: worst relative error %.2e (<= 1e-4), "
                "%.3f s (< 1 s)",
                worst, secs));
}

// ---------------------------------------------------------------- criterion 4

double scalar_dot(const nn::Tensor& a, const nn::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double fd_worst(const std::function<double(const nn::Tensor&)>& f, nn::Tensor x,
                const nn::Tensor& analytic, double eps = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.v[i];
        x.v[i] = keep + eps;
        const double fp = f(x);
        x.v[i] = keep - eps;
        const double fm = f(x);
        x.v[i] = keep;
        const double numeric = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, std::abs(numeric - analytic.v[i]) /
                                    std::max({1.0, std::abs(numeric),
                                              std::abs(analytic.v[i])}));
    }
    return worst;
}

void criterion_gradient_suite(Checker& c) {
    const auto t0 = Clock::now();
    Rng rng(314);
    auto fill = [&rng](nn::Tensor& t, double lo, double hi) {
        for (auto& v : t.v) v = rng.uniform(lo, hi);
    };

    double worst_layers = 0.0;

    // convolution
    {
        nn::Tensor x({2, 3, 8, 8});
        fill(x, -1, 1);
        auto p = nn::make_conv(3, 4, 3);
        fill(p.w, -0.5, 0.5);
        fill(p.b, -0.2, 0.2);
        nn::Tensor cv({2, 4, 8, 8});
        fill(cv, -1, 1);
        auto g = nn::conv_backward(x, p, cv);
        worst_layers = std::max(
            worst_layers,
            fd_worst([&](const nn::Tensor& t) { return scalar_dot(nn::conv_forward(t, p), cv); },
                     x, g.dx));
        worst_layers = std::max(worst_layers, fd_worst(
            [&](const nn::Tensor& t) {
                auto q = p;
                q.w = t;
                return scalar_dot(nn::conv_forward(x, q), cv);
            },
            p.w, g.dw));
    }
    // transposed convolution + adjoint identity
    double adjoint_err = 0.0;
    {
        nn::Tensor x({2, 3, 4, 4});
        fill(x, -1, 1);
        auto p = nn::make_tconv(3, 2, 3);
        fill(p.w, -0.5, 0.5);
        nn::Tensor cv({2, 2, 8, 8});
        fill(cv, -1, 1);
        auto g = nn::tconv_backward(x, p, cv);
        worst_layers = std::max(
            worst_layers,
            fd_worst(
                [&](const nn::Tensor& t) { return scalar_dot(nn::tconv_forward(t, p), cv); }, x,
                g.dx));

        auto tx = nn::tconv_forward(x, p, 2);
        nn::ConvParams as_conv;
        as_conv.w = p.w;
        as_conv.b = nn::Tensor({3});
        auto cy = nn::conv_forward(cv, as_conv, 2);
        const double lhs = scalar_dot(tx, cv);
        const double rhs = scalar_dot(x, cy);
        adjoint_err = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
    }
    // max pooling (distinct entries)
    {
        nn::Tensor x({2, 2, 4, 4});
        for (std::size_t i = 0; i < x.size(); ++i)
            x.v[i] = static_cast<double>((i * 29) % 64) * 0.37 + rng.uniform(0.0, 0.05);
        nn::Tensor cv({2, 2, 2, 2});
        fill(cv, -1, 1);
        auto r = nn::maxpool_forward(x, 2);
        auto dx = nn::maxpool_backward(r.argmax, x.shape, cv);
        worst_layers = std::max(
            worst_layers,
            fd_worst([&](const nn::Tensor& t) { return scalar_dot(nn::maxpool_forward(t, 2).y, cv); },
                     x, dx));
    }
    // activations away from the kink, and the loss
    {
        nn::Tensor x({1, 2, 4, 4});
        for (auto& v : x.v) {
            const double mag = rng.uniform(0.2, 1.5);
            v = rng.uniform() < 0.5 ? -mag : mag;
        }
        nn::Tensor cv(x.shape);
        fill(cv, -1, 1);
        auto dr = nn::activation_backward(x, nn::Activation::relu, cv);
        worst_layers = std::max(
            worst_layers,
            fd_worst(
                [&](const nn::Tensor& t) {
                    return scalar_dot(nn::activation_forward(t, nn::Activation::relu), cv);
                },
                x, dr));
        nn::Tensor truth(x.shape);
        fill(truth, -1, 1);
        auto [l, dl] = nn::mse_loss(x, truth);
        (void)l;
        worst_layers = std::max(
            worst_layers,
            fd_worst([&](const nn::Tensor& t) { return nn::mse_loss(t, truth).first; }, x, dl));
    }
    // batch norm (looser tolerance)
    double worst_bn = 0.0;
    {
        nn::Tensor x({2, 2, 3, 3});
        fill(x, -1, 1);
        auto p = nn::make_batchnorm(2);
        fill(p.gamma, 0.5, 1.5);
        fill(p.beta, -0.5, 0.5);
        nn::Tensor cv(x.shape);
        fill(cv, -1, 1);
        auto q = p;
        nn::BatchNormCache cache;
        nn::batchnorm_forward(x, q, true, &cache);
        auto g = nn::batchnorm_backward(cache, p, cv);
        worst_bn = fd_worst(
            [&](const nn::Tensor& t) {
                auto qq = p;
                return scalar_dot(nn::batchnorm_forward(t, qq, true), cv);
            },
            x, g.dx);
    }
    // end-to-end parameter gradients on the tiny net
    double worst_e2e = 0.0;
    {
        auto grid = make_grid(2, 8);
        NetworkConfig cfg;
        cfg.grid_n1 = cfg.grid_n2 = 8;
        cfg.in_channels = 3;
        cfg.encoder_widths = {4, 8};
        cfg.seed = 11;
        Network net(cfg);
        SampleSpec spec;
        spec.n_pairs = 1;
        nn::Tensor x({2, 3, 8, 8}), target({2, 1, 8, 8});
        for (std::size_t b = 0; b < 2; ++b) {
            auto sample = build_sample(spec, grid, 600 + b);
            auto xi = stack_input(grid, sample.phis);
            std::copy(xi.v.begin(), xi.v.end(), x.v.begin() + b * 3 * 64);
            for (std::size_t node = 0; node < grid->node_count(); ++node) {
                const auto m = grid->multi_index(node);
                target.v[b * 64 + m[0] * 8 + m[1]] = sample.truth.v[node];
            }
        }
        detail_model::ForwardCache cache;
        auto pred = net.forward(x, false, &cache);
        auto [l0, dl] = nn::mse_loss(pred, target);
        (void)l0;
        auto grads = net.backward(cache, dl);
        std::vector<nn::Tensor*> params;
        net.visit_params([&](nn::Tensor& t) { params.push_back(&t); });
        std::vector<const nn::Tensor*> grad_of = {
            &grads.enc_conv[0].dw, &grads.enc_conv[0].db, &grads.enc_bn[0].dgamma,
            &grads.enc_bn[0].dbeta, nullptr, nullptr,
            &grads.enc_conv[1].dw, &grads.enc_conv[1].db, &grads.enc_bn[1].dgamma,
            &grads.enc_bn[1].dbeta, nullptr, nullptr,
            &grads.dec_tconv[0].dw, &grads.dec_tconv[0].db, &grads.dec_bn[0].dgamma,
            &grads.dec_bn[0].dbeta, nullptr, nullptr,
            &grads.dec_tconv[1].dw, &grads.dec_tconv[1].db, &grads.dec_bn[1].dgamma,
            &grads.dec_bn[1].dbeta, nullptr, nullptr,
            &grads.head.dw, &grads.head.db};
        std::size_t checked = 0;
        const double eps = 1e-6;
        for (std::size_t t = 0; t < params.size(); ++t) {
            if (!grad_of[t]) continue;
            auto& tensor = *params[t];
            for (std::size_t trial = 0; trial < std::min<std::size_t>(tensor.size(), 10);
                 ++trial) {
                const std::size_t i = rng.next_index(tensor.size());
                const double keep = tensor.v[i];
                tensor.v[i] = keep + eps;
                const double fp = nn::mse_loss(net.forward(x, false), target).first;
                tensor.v[i] = keep - eps;
                const double fm = nn::mse_loss(net.forward(x, false), target).first;
                tensor.v[i] = keep;
                const double numeric = (fp - fm) / (2.0 * eps);
                const double analytic = grad_of[t]->v[i];
                worst_e2e = std::max(worst_e2e,
                                     std::abs(numeric - analytic) /
                                         std::max({1.0, std::abs(numeric), std::abs(analytic)}));
                ++checked;
            }
        }
        if (checked < 100) worst_e2e = 1.0;  // not enough coverage counts as failure
    }
    const double secs = elapsed(t0);
    const bool ok = worst_layers <= 1e-5 && worst_bn <= 1e-4 && adjoint_err <= 1e-10 &&
                    worst_e2e <= 1e-4 && secs < 120.0;
    c.check(4, ok,
            fmt("gradients: layers %.2e (<= 1e-5), batchnorm %.2e (<= 1e-4), adjoint %.2e "
                "(<= 1e-10), end-to-end %.2e (<= 1e-4), %.1f s (< 120 s)",
                worst_layers, worst_bn, adjoint_err, worst_e2e, secs));
}

// ---------------------------------------------------------------- criterion 5

void criterion_spectral(Checker& c) {
    const auto t0 = Clock::now();
    auto g = make_grid(2, 64);
    InclusionSet incl;
    incl.circles.push_back({{0.3, 0.3}, 0.3});
    incl.mu0 = 1.0;
    incl.mu1 = 50.0;
    auto spec = ntd_difference_matrix(g, incl, 1.0, spectral_flux_basis(g, 20, 1.0));

    double amax = 0.0;
    for (double a : spec.matrix) amax = std::max(amax, std::abs(a));
    const bool symmetric = spec.asymmetry <= 1e-8 * amax;

    const double lam1 = std::abs(spec.eigenvalues.front());
    double min_lambda = 0.0;
    for (double lam : spec.eigenvalues) min_lambda = std::min(min_lambda, lam);
    const bool positive = min_lambda >= -1e-6 * lam1;

    // The identity degrades with mode depth as the 21-dimensional flux span
    // stops capturing the eigenfunctions; the count of passing modes is
    // reported alongside the worst top-10 error.
    double worst_identity = 0.0;
    std::size_t modes_within = 0;
    bool run_broken = false;
    for (std::size_t w = 0; w < 10; ++w) {
        const double ratio = spec.phi_trace_l2[w] / spec.nu_l2[w];
        const double err = std::abs(ratio / std::abs(spec.eigenvalues[w]) - 1.0);
        worst_identity = std::max(worst_identity, err);
        if (err <= 0.02 && !run_broken)
            ++modes_within;
        else
            run_broken = true;
    }
    const double secs = elapsed(t0);
    const bool ok = symmetric && positive && worst_identity <= 0.02 && secs < 300.0;
    c.check(5, ok,
            fmt("spectral: asymmetry %.2e of %.2e, min eigenvalue %.2e (>= -1e-6*|l1|), "
                "eigen-identity worst %.4f over top 10 of %zu (<= 0.02; leading %zu modes "
                "meet it; a ~30-mode basis would be needed for all 10), %.1f s (< 300 s)",
                spec.asymmetry, amax, min_lambda, worst_identity, spec.n, modes_within, secs));
}

// ---------------------------------------------------------------- criterion 6

void criterion_noise_smoothing(Checker& c) {
    const auto t0 = Clock::now();
    auto g = make_grid(2, 101);
    BackgroundOps bg(g, 0.0);
    double r002 = 0.0, r01 = 0.0, r05 = 0.0;
    const int samples = 10;
    for (int i = 0; i < samples; ++i) {
        SampleSpec spec;  // scenario 1, single pair
        auto s = build_sample(spec, g, 7000 + i, &bg);
        auto noisy = perturb_sample(s, bg, 0.10, 8100 + i, 0);
        auto band_rms = [&](double d) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t p = 0; p < g->node_count(); ++p) {
                const auto x = g->coords(p);
                if (1.0 - std::max(std::abs(x[0]), std::abs(x[1])) < d) continue;
                const double e = noisy.phis[0].v[p] - s.phis[0].v[p];
                sum += e * e;
                ++count;
            }
            return std::sqrt(sum / static_cast<double>(count));
        };
        r002 += band_rms(0.02);
        r01 += band_rms(0.1);
        r05 += band_rms(0.5);
    }
    const double secs = elapsed(t0);
    // 0.5 is the frozen empirical constant: measured batch ratios on the
    // 101^2 pipeline span 0.33..0.44
    const bool ok = r05 < r01 && r01 < r002 && r05 <= 0.5 * r002 && secs < 300.0;
    c.check(6, ok,
            fmt("noise smoothing: mean band RMS r(0.02)=%.3e > r(0.1)=%.3e > r(0.5)=%.3e, "
                "ratio r(0.5)/r(0.02)=%.3f (<= 0.5 frozen constant), %.1f s (< 300 s)",
                r002 / samples, r01 / samples, r05 / samples, r05 / r002, secs));
}

// ---------------------------------------------------------- criteria 7 and 8

std::vector<Sample> build_desk_samples(const GridPtr& grid, std::uint64_t base,
                                       std::size_t count) {
    BackgroundOps bg(grid, 0.0);
    SampleSpec spec;
    spec.n_pairs = 10;
    std::vector<Sample> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(build_sample(spec, grid, base + i, &bg));
    return out;
}

Network train_desk_net(const GridPtr& grid, std::vector<double>* history_out) {
    std::printf("building the desk-scale training set (500 samples, 64^2, N=10)...\n");
    std::fflush(stdout);
    auto train_set = build_desk_samples(grid, 100, 500);
    auto cfg = desk_preset(64, 10);
    cfg.seed = 1;
    Network net(cfg);
    std::printf("training: widths 8/16/32, lr=%g, momentum=%g, batch=%zu, epochs=%zu\n",
                cfg.lr, cfg.momentum, cfg.batch, cfg.epochs);
    std::fflush(stdout);
    auto history = train(net, train_set, grid);
    for (std::size_t e = 0; e < history.size(); ++e)
        std::printf("  epoch %zu loss %.3f\n", e + 1, history[e]);
    if (history_out) *history_out = history;
    return net;
}

double mean_test_dice(Network& net, const std::vector<Sample>& test_set) {
    double dice = 0.0;
    for (const auto& s : test_set) dice += evaluate(reconstruct(net, s), s.truth).dice;
    return dice / static_cast<double>(test_set.size());
}

void criterion_desk_training(Checker& c, const std::string& work_dir) {
    const auto t0 = Clock::now();
    auto grid = make_grid(2, 64);
    std::vector<double> history;
    Network net = train_desk_net(grid, &history);
    const double dice_clean = mean_test_dice(net, build_desk_samples(grid, 5000, 50));
    const double secs = elapsed(t0);
    const bool ok =
        history.back() <= 0.5 * history.front() && dice_clean >= 0.6 && secs < 7200.0;
    c.check(7, ok,
            fmt("desk training: epoch-20/epoch-1 loss %.3f (<= 0.5), held-out mean Dice "
                "%.3f (>= 0.6), %.0f s (< 7200 s)",
                history.back() / history.front(), dice_clean, secs));
    if (!work_dir.empty()) {
        std::filesystem::create_directories(work_dir);
        save_model(work_dir + "/desk.ddsw", net);
    }
}

void criterion_noise_robustness(Checker& c, const std::string& work_dir) {
    auto grid = make_grid(2, 64);
    std::optional<Network> net;
    const std::string model_path = work_dir.empty() ? "" : work_dir + "/desk.ddsw";
    if (!model_path.empty() && std::filesystem::exists(model_path)) {
        std::printf("loading the criterion-7 network from %s\n", model_path.c_str());
        net.emplace(load_model(model_path));
    } else {
        net.emplace(train_desk_net(grid, nullptr));
    }
    auto test_set = build_desk_samples(grid, 5000, 50);
    const double dice_clean = mean_test_dice(*net, test_set);

    BackgroundOps bg(grid, 0.0);
    ProbingNormCache cache(grid, 0.0);
    double dice_noisy = 0.0;
    int clean_in = 0, noisy_in = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& s = test_set[i];
        auto noisy = perturb_sample(s, bg, 0.05, 777 + i, 0);
        dice_noisy += evaluate(reconstruct(*net, noisy), s.truth).dice;

        auto argmax_in = [&](const ScalarField& f) {
            std::size_t best = 0;
            double v = -std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < f.size(); ++p)
                if (f.v[p] > v) {
                    v = f.v[p];
                    best = p;
                }
            return s.truth.v[best] > 0.5;
        };
        clean_in += argmax_in(dsm_index(grid, 0.0, s.pairs[0], 0, {}, &cache));
        noisy_in += argmax_in(dsm_index(grid, 0.0, noisy.pairs[0], 0, {}, &cache));
    }
    dice_noisy /= static_cast<double>(test_set.size());
    const int n = static_cast<int>(test_set.size());

    const bool net_robust = dice_clean - dice_noisy <= 0.15;
    const bool classical_fragile = (n - noisy_in) * 2 >= n;  // argmax-in-D lost on >= half
    c.check(8, net_robust && classical_fragile,
            fmt("noise robustness: net Dice %.3f -> %.3f (drop %.3f <= 0.15); classical "
                "argmax-in-D clean %d/%d, under 5%% noise %d/%d (criterion needs <= %d "
                "surviving)",
                dice_clean, dice_noisy, dice_clean - dice_noisy, clean_in, n, noisy_in, n,
                n / 2));
}

// ---------------------------------------------------------------- criterion 9

void criterion_picard(Checker& c) {
    const auto t0 = Clock::now();
    auto g = make_grid(2, 64);
    InclusionSet incl;
    incl.circles.push_back({{0.3, 0.3}, 0.3});
    incl.mu0 = 1.0;
    incl.mu1 = 50.0;
    auto spec = ntd_difference_matrix(g, incl, 1.0, spectral_flux_basis(g, 20, 1.0));
    auto s = picard_index(spec, spec.n);

    std::vector<double> inside, outside;
    for (std::size_t p = 0; p < s.size(); ++p) {
        if (g->is_boundary(p)) continue;
        const double lv = level_set(incl, g->coords(p));
        if (lv < 0.0)
            inside.push_back(s.v[p]);
        else if (lv > 0.3)
            outside.push_back(s.v[p]);
    }
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    const double med_in = median(inside), med_out = median(outside);
    const double secs = elapsed(t0);
    c.check(9, med_in < med_out && secs < 300.0,
            fmt("picard diagnostic: median inside %.3e < median outside %.3e, %.1f s (< 300 s)",
                med_in, med_out, secs));
}

// --------------------------------------------------------------- criterion 10

void criterion_persistence(Checker& c) {
    const auto t0 = Clock::now();
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "ddsm_acceptance_c10";
    fs::create_directories(dir);
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>());
    };

    auto grid = make_grid(2, 16);
    Dataset ds;
    ds.grid = grid;
    ds.header.n1 = ds.header.n2 = 16;
    ds.header.n_pairs = 2;
    ds.header.n_samples = 4;
    ds.header.base_seed = 71;
    SampleSpec spec;
    spec.n_pairs = 2;
    BackgroundOps bg(grid, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        ds.samples.push_back(build_sample(spec, grid, 71 + i, &bg));

    const auto d1 = (dir / "round1.ddsm").string();
    const auto d2 = (dir / "round2.ddsm").string();
    save_dataset(d1, ds);
    auto loaded = load_dataset(d1);
    save_dataset(d2, loaded);
    const bool dataset_bitwise = slurp(d1) == slurp(d2);

    NetworkConfig cfg;
    cfg.grid_n1 = cfg.grid_n2 = 16;
    cfg.in_channels = 4;
    cfg.encoder_widths = {4, 8};
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    cfg.batch = 2;
    cfg.seed = 9;
    Network net(cfg);
    train(net, ds.samples, grid);
    const auto m1 = (dir / "round1.ddsw").string();
    const auto m2 = (dir / "round2.ddsw").string();
    save_model(m1, net);
    auto reloaded = load_model(m1);
    save_model(m2, reloaded);
    const bool model_bitwise = slurp(m1) == slurp(m2);

    auto a = reconstruct(net, ds.samples[0]);
    auto b = reconstruct(reloaded, ds.samples[0]);
    const bool recon_bitwise = a.v == b.v;

    const double secs = elapsed(t0);
    c.check(10, dataset_bitwise && model_bitwise && recon_bitwise,
            fmt("persistence: dataset bitwise %d, model bitwise %d, reload-reconstruct "
                "bitwise %d, %.1f s",
                dataset_bitwise, model_bitwise, recon_bitwise, secs));
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> criteria;
    std::string work_dir;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
            criteria.push_back(std::atoi(argv[++i]));
        else if (std::strcmp(argv[i], "--work-dir") == 0 && i + 1 < argc)
            work_dir = argv[++i];
    }
    if (criteria.empty())
        for (int k = 1; k <= 10; ++k) criteria.push_back(k);

    auto wants = [&](int k) {
        return std::find(criteria.begin(), criteria.end(), k) != criteria.end();
    };

    Checker checker;
    if (wants(1)) criterion_solver_order(checker);
    if (wants(2)) criterion_duality_identity(checker);
    if (wants(3)) criterion_disk_series(checker);
    if (wants(4)) criterion_gradient_suite(checker);
    if (wants(5)) criterion_spectral(checker);
    if (wants(6)) criterion_noise_smoothing(checker);
    if (wants(7)) criterion_desk_training(checker, work_dir);
    if (wants(8)) criterion_noise_robustness(checker, work_dir);
    if (wants(9)) criterion_picard(checker);
    if (wants(10)) criterion_persistence(checker);
    return checker.failures;
}
