// Command-line front end: dataset generation, training, reconstruction, the
// classical sampling index, and the Picard spectral diagnostic.
//
// Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 I/O error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ddsm/ddsm.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("DDSM_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

ddsm::GridPtr grid_for(const std::string& scenario, std::size_t n) {
    const auto sc = ddsm::scenario_from_string(scenario);
    return ddsm::make_grid(sc == ddsm::Scenario::ellipsoids3d ? 3 : 2, n);
}

struct GenerateArgs {
    std::string scenario = "circles2d";
    std::size_t grid = 64;
    std::size_t n_pairs = 10;
    std::size_t samples = 50;
    std::uint64_t seed = default_seed();
    double mu0 = 0.0;
    double mu1 = 50.0;
    int s = 0;
    double noise = 0.0;
    bool train_noise = false;
    std::size_t limited = 0;
    std::size_t count_override = 0;
    std::size_t jobs = 1;
    std::string out;
};

int run_generate(const GenerateArgs& a) {
    if (a.noise > 0.0 && !a.train_noise) {
        std::cerr << "generate: refusing --noise without --train-noise; measurement noise "
                     "belongs to evaluation time (use `reconstruct --noise`), or pass "
                     "--train-noise to override\n";
        return 1;
    }
    std::cout << "config: command=generate scenario=" << a.scenario << " grid=" << a.grid
              << " n_pairs=" << a.n_pairs << " samples=" << a.samples << " seed=" << a.seed
              << " mu0=" << a.mu0 << " mu1=" << a.mu1 << " s=" << a.s << " noise=" << a.noise
              << " limited=" << a.limited << " jobs=" << a.jobs << " out=" << a.out << "\n";

    const auto start = Clock::now();
    auto grid = grid_for(a.scenario, a.grid);
    ddsm::SampleSpec spec;
    spec.scenario = ddsm::scenario_from_string(a.scenario);
    spec.n_pairs = a.n_pairs;
    spec.mu0 = a.mu0;
    spec.mu1 = a.mu1;
    spec.s = a.s;
    spec.noise = a.noise;
    spec.limited = a.limited;
    spec.count_override = a.count_override;

    ddsm::BackgroundOps bg(grid, a.mu0);
    std::vector<ddsm::Sample> samples(a.samples);
    const std::size_t jobs = std::max<std::size_t>(1, a.jobs);
    std::atomic<std::size_t> next{0}, done{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= a.samples) return;
            samples[i] = ddsm::build_sample(spec, grid, a.seed + i, &bg);
            const std::size_t d = ++done;
            std::printf("sample %zu/%zu\n", d, a.samples);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    ddsm::Dataset ds;
    ds.grid = grid;
    ds.header.dim = static_cast<std::uint32_t>(grid->dim);
    ds.header.n1 = static_cast<std::uint32_t>(grid->counts[0]);
    ds.header.n2 = static_cast<std::uint32_t>(grid->counts[1]);
    ds.header.n3 = static_cast<std::uint32_t>(grid->counts[2]);
    ds.header.n_pairs = static_cast<std::uint32_t>(a.n_pairs);
    ds.header.n_samples = static_cast<std::uint32_t>(a.samples);
    ds.header.scenario = static_cast<std::uint32_t>(spec.scenario);
    ds.header.mu0 = a.mu0;
    ds.header.mu1 = a.mu1;
    ds.header.s_order = static_cast<std::uint32_t>(a.s);
    ds.header.base_seed = a.seed;
    ds.samples = std::move(samples);
    ddsm::save_dataset(a.out, ds);
    std::cout << "wrote " << a.out << " in " << seconds_since(start) << " s\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string preset = "desk";
    std::string config_json;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<std::size_t> batch;
    std::optional<std::uint64_t> seed;
    bool relu_head = false;
    std::string out;
    std::string loss_csv;
};

int run_train(const TrainArgs& a) {
    auto ds = ddsm::load_dataset(a.data);
    if (ds.header.dim != 2) {
        std::cerr << "train: the network is 2D; 3D datasets are generation/diagnostic only\n";
        return 1;
    }
    ddsm::NetworkConfig cfg;
    if (!a.config_json.empty()) {
        std::ifstream in(a.config_json);
        if (!in) throw ddsm::format_error("cannot open config: " + a.config_json);
        nlohmann::json j;
        in >> j;
        cfg = j.get<ddsm::NetworkConfig>();
    } else if (a.preset == "desk") {
        cfg = ddsm::desk_preset(ds.header.n1, ds.header.n_pairs);
    } else if (a.preset == "full") {
        cfg = ddsm::full_preset(ds.header.n1, ds.header.n_pairs);
    } else {
        std::cerr << "train: unknown preset " << a.preset << " (desk|full)\n";
        return 1;
    }
    cfg.grid_n1 = ds.header.n1;
    cfg.grid_n2 = ds.header.n2;
    cfg.in_channels = ds.header.n_pairs + 2;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.lr) cfg.lr = *a.lr;
    if (a.momentum) cfg.momentum = *a.momentum;
    if (a.batch) cfg.batch = *a.batch;
    if (a.seed) cfg.seed = *a.seed;
    if (a.relu_head) cfg.sigmoid_head = false;

    std::cout << "config: command=train data=" << a.data << " preset=" << a.preset
              << " epochs=" << cfg.epochs << " lr=" << cfg.lr << " momentum=" << cfg.momentum
              << " batch=" << cfg.batch << " seed=" << cfg.seed
              << " sigmoid_head=" << cfg.sigmoid_head << " widths=";
    for (std::size_t i = 0; i < cfg.encoder_widths.size(); ++i)
        std::cout << (i ? "/" : "") << cfg.encoder_widths[i];
    std::cout << " out=" << a.out << "\n";
    if (cfg.lr == 0.0) std::cout << "warning: learning rate is zero, weights will not move\n";

    const auto start = Clock::now();
    ddsm::Network net(cfg);
    auto history = ddsm::train(net, ds.samples, ds.grid);
    for (std::size_t e = 0; e < history.size(); ++e)
        std::cout << "epoch " << (e + 1) << " loss " << history[e] << "\n";

    ddsm::save_model(a.out, net);
    const std::string loss_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
    std::ofstream loss(loss_path);
    if (!loss) throw ddsm::format_error("cannot open for writing: " + loss_path);
    loss << "epoch,loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < history.size(); ++e)
        loss << (e + 1) << "," << history[e] << "\n";
    const std::string cfg_path = a.out + ".json";
    std::ofstream cfg_out(cfg_path);
    cfg_out << nlohmann::json(cfg).dump(2) << "\n";
    std::cout << "wrote " << a.out << ", " << loss_path << ", " << cfg_path << " in "
              << seconds_since(start) << " s\n";
    return 0;
}

void export_pair(const ddsm::ScalarField& field, const std::string& prefix,
                 const std::string& name) {
    ddsm::export_field(field, prefix + name + ".csv", ddsm::ExportFormat::csv);
    ddsm::export_field(field, prefix + name + ".pgm", ddsm::ExportFormat::pgm);
}

void print_metrics(const ddsm::Metrics& m) {
    std::cout << "metrics: mse=" << m.mse << " dice=" << m.dice << " iou=" << m.iou
              << " argmax_in_truth=" << (m.argmax_inside ? 1 : 0) << "\n";
}

struct ReconstructArgs {
    std::string model;
    std::string data;
    std::optional<std::size_t> index;
    std::string scenario = "circles2d";
    std::optional<std::uint64_t> seed;
    double noise = 0.0;
    std::uint64_t noise_seed = 1;
    std::size_t limited = 0;
    std::optional<double> mu0, mu1;
    int s = 0;
    std::string out_prefix = "recon_";
};

int run_reconstruct(const ReconstructArgs& a) {
    auto net = ddsm::load_model(a.model);
    const std::size_t n_pairs = net.config.in_channels - 2;
    std::cout << "config: command=reconstruct model=" << a.model << " data="
              << (a.data.empty() ? "-" : a.data)
              << " index=" << (a.index ? std::to_string(*a.index) : std::string("-"))
              << " scenario=" << a.scenario
              << " seed=" << (a.seed ? std::to_string(*a.seed) : std::string("-"))
              << " noise=" << a.noise << " noise_seed=" << a.noise_seed
              << " limited=" << a.limited << " mu0=" << (a.mu0 ? std::to_string(*a.mu0) : "-")
              << " mu1=" << (a.mu1 ? std::to_string(*a.mu1) : "-") << " s=" << a.s
              << " out_prefix=" << a.out_prefix << "\n";

    ddsm::Sample sample;
    ddsm::GridPtr grid;
    int s_order = a.s;
    double mu0 = 0.0;
    if (a.index) {
        if (a.data.empty()) {
            std::cerr << "reconstruct: --index needs --data\n";
            return 1;
        }
        if (a.limited || a.mu0 || a.mu1) {
            std::cerr << "reconstruct: --limited/--mu0/--mu1 regenerate the measurements; use "
                         "the fresh-sample mode (--scenario/--seed) for them\n";
            return 1;
        }
        auto ds = ddsm::load_dataset(a.data);
        if (*a.index >= ds.samples.size()) {
            std::cerr << "reconstruct: index out of range (dataset holds "
                      << ds.samples.size() << " samples)\n";
            return 1;
        }
        grid = ds.grid;
        sample = ds.samples[*a.index];
        s_order = static_cast<int>(ds.header.s_order);
        mu0 = ds.header.mu0;
        if (a.noise > 0.0) {
            ddsm::BackgroundOps bg(grid, mu0);
            sample = ddsm::perturb_sample(sample, bg, a.noise, a.noise_seed, s_order);
        }
    } else {
        if (!a.seed) {
            std::cerr << "reconstruct: need either --index or --seed for a fresh sample\n";
            return 1;
        }
        grid = grid_for(a.scenario, net.config.grid_n1);
        ddsm::SampleSpec spec;
        spec.scenario = ddsm::scenario_from_string(a.scenario);
        spec.n_pairs = n_pairs;
        spec.mu0 = a.mu0.value_or(0.0);
        spec.mu1 = a.mu1.value_or(50.0);
        spec.s = a.s;
        spec.noise = a.noise;
        spec.limited = a.limited;
        sample = ddsm::build_sample(spec, grid, *a.seed);
    }
    if (sample.phis.size() != n_pairs) {
        std::cerr << "reconstruct: model expects " << n_pairs << " pairs, sample has "
                  << sample.phis.size() << "\n";
        return 1;
    }
    auto pred = ddsm::reconstruct(net, grid, sample.phis);
    export_pair(pred, a.out_prefix, "pred");
    export_pair(sample.truth, a.out_prefix, "truth");
    print_metrics(ddsm::evaluate(pred, sample.truth));
    return 0;
}

struct DsmArgs {
    std::string scenario = "circles2d";
    std::size_t grid = 64;
    std::uint64_t seed = default_seed();
    double mu0 = 0.0;
    double mu1 = 50.0;
    int s = 0;
    double noise = 0.0;
    std::uint64_t noise_seed = 1;
    double exp_h1 = 0.5;
    double exp_l2 = 0.75;
    std::string out_prefix = "dsm_";
};

int run_dsm(const DsmArgs& a) {
    std::cout << "config: command=dsm scenario=" << a.scenario << " grid=" << a.grid
              << " seed=" << a.seed << " mu0=" << a.mu0 << " mu1=" << a.mu1 << " s=" << a.s
              << " noise=" << a.noise << " noise_seed=" << a.noise_seed << " p=" << a.exp_h1
              << " q=" << a.exp_l2 << " out_prefix=" << a.out_prefix << "\n";
    auto grid = grid_for(a.scenario, a.grid);
    ddsm::SampleSpec spec;
    spec.scenario = ddsm::scenario_from_string(a.scenario);
    spec.n_pairs = 1;
    spec.mu0 = a.mu0;
    spec.mu1 = a.mu1;
    spec.s = a.s;
    auto sample = ddsm::build_sample(spec, grid, a.seed);
    if (a.noise > 0.0) {
        ddsm::BackgroundOps bg(grid, a.mu0);
        sample = ddsm::perturb_sample(sample, bg, a.noise, a.noise_seed, a.s);
    }
    ddsm::ProbingNormCache cache(grid, a.mu0);
    ddsm::NormExponents exps{a.exp_h1, a.exp_l2};
    auto index = ddsm::dsm_index(grid, a.mu0, sample.pairs[0], a.s, exps, &cache);
    export_pair(index, a.out_prefix, "index");
    export_pair(sample.truth, a.out_prefix, "truth");

    std::size_t best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < index.size(); ++p)
        if (index.v[p] > best_val) {
            best_val = index.v[p];
            best = p;
        }
    const bool inside = sample.truth.v[best] > 0.5;
    const auto x = grid->coords(best);
    std::cout << "dsm: peak=(" << x[0] << "," << x[1] << ") value=" << best_val
              << " argmax_in_d=" << (inside ? 1 : 0) << "\n";
    return 0;
}

struct PicardArgs {
    std::string scenario = "circles2d";
    std::size_t grid = 64;
    std::uint64_t seed = default_seed();
    std::size_t n_pairs = 20;
    double mu0 = 1.0;
    double mu1 = 50.0;
    std::optional<std::size_t> truncation;
    std::string out_prefix = "picard_";
};

int run_picard(const PicardArgs& a) {
    std::cout << "config: command=picard scenario=" << a.scenario << " grid=" << a.grid
              << " seed=" << a.seed << " n_pairs=" << a.n_pairs << " mu0=" << a.mu0
              << " mu1=" << a.mu1
              << " truncation=" << (a.truncation ? std::to_string(*a.truncation) : "all")
              << " out_prefix=" << a.out_prefix << "\n";
    auto grid = grid_for(a.scenario, a.grid);
    auto incl = ddsm::sample_inclusions(ddsm::scenario_from_string(a.scenario), a.seed);
    incl.mu0 = a.mu0;
    incl.mu1 = a.mu1;
    auto spec = ddsm::ntd_difference_matrix(grid, incl, a.mu0,
                                            ddsm::spectral_flux_basis(grid, a.n_pairs, a.mu0));
    const std::size_t K = a.truncation.value_or(spec.n);
    auto field = ddsm::picard_index(spec, K);
    export_pair(field, a.out_prefix, "picard");
    export_pair(ddsm::rasterize_mask(incl, grid), a.out_prefix, "truth");

    std::vector<double> inside, outside;
    for (std::size_t p = 0; p < field.size(); ++p) {
        if (grid->is_boundary(p)) continue;
        const double lv = ddsm::level_set(incl, grid->coords(p));
        if (lv < 0.0)
            inside.push_back(field.v[p]);
        else if (lv > 0.3)
            outside.push_back(field.v[p]);
    }
    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    std::cout << "picard: lambda1=" << spec.eigenvalues.front() << " modes=" << spec.n
              << " K=" << K << " median_inside=" << median(inside)
              << " median_outside=" << median(outside) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Direct and deep direct sampling reconstruction for diffusive optical "
                 "tomography"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* sub_gen = app.add_subcommand("generate", "Generate a synthetic dataset");
    sub_gen->add_option("--scenario", gen.scenario, "circles2d|ellipses2d|ellipsoids3d");
    sub_gen->add_option("--grid", gen.grid, "nodes per axis");
    sub_gen->add_option("--n-pairs", gen.n_pairs, "Cauchy pairs per sample");
    sub_gen->add_option("--samples", gen.samples, "sample count");
    sub_gen->add_option("--seed", gen.seed, "base seed (default: DDSM_SEED or 0)");
    sub_gen->add_option("--mu0", gen.mu0, "background absorption");
    sub_gen->add_option("--mu1", gen.mu1, "inclusion absorption");
    sub_gen->add_option("--s", gen.s, "boundary operator order (0 or 1)");
    sub_gen->add_option("--noise", gen.noise, "train-time noise level (discouraged)");
    sub_gen->add_flag("--train-noise", gen.train_noise, "allow --noise during generation");
    sub_gen->add_option("--limited", gen.limited, "limited data: points per side");
    sub_gen->add_option("--count-override", gen.count_override, "primitives per sample");
    sub_gen->add_option("--jobs", gen.jobs, "worker threads");
    sub_gen->add_option("--out", gen.out, "output dataset path")->required();

    TrainArgs tr;
    auto* sub_tr = app.add_subcommand("train", "Train the reconstruction network");
    sub_tr->add_option("--data", tr.data, "dataset path")->required();
    sub_tr->add_option("--preset", tr.preset, "desk|full");
    sub_tr->add_option("--config", tr.config_json, "NetworkConfig JSON (overrides preset)");
    sub_tr->add_option("--epochs", tr.epochs, "epoch count");
    sub_tr->add_option("--lr", tr.lr, "learning rate");
    sub_tr->add_option("--momentum", tr.momentum, "SGD momentum");
    sub_tr->add_option("--batch", tr.batch, "minibatch size");
    sub_tr->add_option("--seed", tr.seed, "init/shuffle seed");
    sub_tr->add_flag("--relu-head", tr.relu_head, "ReLU output head instead of sigmoid");
    sub_tr->add_option("--out", tr.out, "model output path")->required();
    sub_tr->add_option("--loss-csv", tr.loss_csv, "loss history path (default <out>.loss.csv)");

    ReconstructArgs rec;
    auto* sub_rec = app.add_subcommand("reconstruct", "Run the network on one sample");
    sub_rec->add_option("--model", rec.model, "model path")->required();
    sub_rec->add_option("--data", rec.data, "dataset path (with --index)");
    sub_rec->add_option("--index", rec.index, "sample index within --data");
    sub_rec->add_option("--scenario", rec.scenario, "fresh-sample scenario");
    sub_rec->add_option("--seed", rec.seed, "fresh-sample seed");
    sub_rec->add_option("--noise", rec.noise, "test-time measurement noise");
    sub_rec->add_option("--noise-seed", rec.noise_seed, "noise seed");
    sub_rec->add_option("--limited", rec.limited, "limited data points per side (fresh mode)");
    sub_rec->add_option("--mu0", rec.mu0, "fresh-sample background absorption");
    sub_rec->add_option("--mu1", rec.mu1, "fresh-sample inclusion absorption");
    sub_rec->add_option("--s", rec.s, "boundary operator order (fresh mode)");
    sub_rec->add_option("--out-prefix", rec.out_prefix, "output path prefix");

    DsmArgs dsm;
    auto* sub_dsm = app.add_subcommand("dsm", "Classical single-pair sampling index");
    sub_dsm->add_option("--scenario", dsm.scenario, "inclusion scenario");
    sub_dsm->add_option("--grid", dsm.grid, "nodes per axis");
    sub_dsm->add_option("--seed", dsm.seed, "sample seed");
    sub_dsm->add_option("--mu0", dsm.mu0, "background absorption");
    sub_dsm->add_option("--mu1", dsm.mu1, "inclusion absorption");
    sub_dsm->add_option("--s", dsm.s, "boundary operator order");
    sub_dsm->add_option("--noise", dsm.noise, "measurement noise level");
    sub_dsm->add_option("--noise-seed", dsm.noise_seed, "noise seed");
    sub_dsm->add_option("--p", dsm.exp_h1, "H1-seminorm exponent of |eta|_Y");
    sub_dsm->add_option("--q", dsm.exp_l2, "L2-norm exponent of |eta|_Y");
    sub_dsm->add_option("--out-prefix", dsm.out_prefix, "output path prefix");

    PicardArgs pic;
    auto* sub_pic = app.add_subcommand("picard", "Picard spectral diagnostic field");
    sub_pic->add_option("--scenario", pic.scenario, "inclusion scenario");
    sub_pic->add_option("--grid", pic.grid, "nodes per axis");
    sub_pic->add_option("--seed", pic.seed, "sample seed");
    sub_pic->add_option("--n-pairs", pic.n_pairs, "flux basis size");
    sub_pic->add_option("--mu0", pic.mu0, "background absorption");
    sub_pic->add_option("--mu1", pic.mu1, "inclusion absorption");
    sub_pic->add_option("--truncation", pic.truncation, "series truncation (default: all)");
    sub_pic->add_option("--out-prefix", pic.out_prefix, "output path prefix");

    try {
        app.parse(argc, argv);
        if (sub_gen->parsed()) return run_generate(gen);
        if (sub_tr->parsed()) return run_train(tr);
        if (sub_rec->parsed()) return run_reconstruct(rec);
        if (sub_dsm->parsed()) return run_dsm(dsm);
        if (sub_pic->parsed()) return run_picard(pic);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ddsm::parameter_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const ddsm::shape_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const ddsm::convergence_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const ddsm::incompatible_flux_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const ddsm::degeneracy_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const ddsm::format_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const ddsm::corruption_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
