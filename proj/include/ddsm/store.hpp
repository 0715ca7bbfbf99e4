#pragma once

// Bit-exact persistence: flat binary dataset files (magic "DDSM"), model
// weight files (magic "DDSW"), grayscale/csv field exports, and JSON run
// configuration. All integers and doubles are written little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ddsm/data.hpp"
#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/model.hpp"

#include "json.hpp"

namespace ddsm {

namespace detail_io {

template <class T>
void put(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!in) throw corruption_error("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
    for (double x : v) put_f64(out, x);
}

inline void get_doubles(std::istream& in, std::vector<double>& v) {
    for (auto& x : v) x = get_f64(in);
}

}  // namespace detail_io

struct DatasetHeader {
    std::uint32_t version = 1;
    std::uint32_t dim = 2;
    std::uint32_t n1 = 0, n2 = 0, n3 = 1;
    std::uint32_t n_pairs = 0;
    std::uint32_t n_samples = 0;
    std::uint32_t scenario = 0;
    double mu0 = 0.0;
    double mu1 = 50.0;
    std::uint32_t s_order = 0;
    std::uint64_t base_seed = 0;
};

struct Dataset {
    DatasetHeader header;
    GridPtr grid;
    std::vector<Sample> samples;
};

inline void save_dataset(const std::string& path, const Dataset& ds) {
    const auto& h = ds.header;
    if (ds.samples.size() != h.n_samples)
        throw corruption_error("header sample count does not match the payload");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    out.write("DDSM", 4);
    detail_io::put(out, h.version);
    detail_io::put(out, h.dim);
    detail_io::put(out, h.n1);
    detail_io::put(out, h.n2);
    detail_io::put(out, h.n3);
    detail_io::put(out, h.n_pairs);
    detail_io::put(out, h.n_samples);
    detail_io::put(out, h.scenario);
    detail_io::put_f64(out, h.mu0);
    detail_io::put_f64(out, h.mu1);
    detail_io::put(out, h.s_order);
    detail_io::put(out, h.base_seed);
    for (const auto& s : ds.samples) {
        if (s.pairs.size() != h.n_pairs || s.phis.size() != h.n_pairs)
            throw corruption_error("sample pair count does not match the header");
        detail_io::put_doubles(out, s.truth.v);
        for (const auto& p : s.pairs) detail_io::put_doubles(out, p.g.v);
        for (const auto& p : s.pairs) detail_io::put_doubles(out, p.f.v);
        for (const auto& phi : s.phis) detail_io::put_doubles(out, phi.v);
    }
    if (!out) throw format_error("write failure: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DDSM") throw format_error("not a dataset file");
    Dataset ds;
    auto& h = ds.header;
    h.version = detail_io::get<std::uint32_t>(in);
    if (h.version != 1) throw format_error("unsupported dataset version");
    h.dim = detail_io::get<std::uint32_t>(in);
    h.n1 = detail_io::get<std::uint32_t>(in);
    h.n2 = detail_io::get<std::uint32_t>(in);
    h.n3 = detail_io::get<std::uint32_t>(in);
    h.n_pairs = detail_io::get<std::uint32_t>(in);
    h.n_samples = detail_io::get<std::uint32_t>(in);
    h.scenario = detail_io::get<std::uint32_t>(in);
    h.mu0 = detail_io::get_f64(in);
    h.mu1 = detail_io::get_f64(in);
    h.s_order = detail_io::get<std::uint32_t>(in);
    h.base_seed = detail_io::get<std::uint64_t>(in);
    if (h.dim != 2 && h.dim != 3) throw corruption_error("bad dimension in header");

    std::vector<std::size_t> counts{h.n1, h.n2};
    if (h.dim == 3) counts.push_back(h.n3);
    ds.grid = make_grid(static_cast<int>(h.dim), counts);

    const std::size_t nodes = ds.grid->node_count();
    const std::size_t bdry = ds.grid->boundary_count();
    const std::size_t per_sample = nodes + h.n_pairs * (2 * bdry + nodes);
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto file_end = in.tellg();
    in.seekg(header_end);
    const std::size_t payload_bytes = static_cast<std::size_t>(file_end - header_end);
    if (payload_bytes != 8 * per_sample * h.n_samples)
        throw corruption_error("payload length does not match the header arithmetic");

    for (std::uint32_t i = 0; i < h.n_samples; ++i) {
        Sample s;
        s.scenario = static_cast<Scenario>(h.scenario);
        s.seed = h.base_seed + i;
        s.inclusions.mu0 = h.mu0;
        s.inclusions.mu1 = h.mu1;
        s.truth = ScalarField(ds.grid);
        detail_io::get_doubles(in, s.truth.v);
        s.pairs.resize(h.n_pairs);
        s.phis.assign(h.n_pairs, ScalarField(ds.grid));
        for (std::uint32_t w = 0; w < h.n_pairs; ++w) {
            s.pairs[w].omega = w + 1;
            s.pairs[w].g = BoundaryTrace(ds.grid);
            detail_io::get_doubles(in, s.pairs[w].g.v);
        }
        for (std::uint32_t w = 0; w < h.n_pairs; ++w) {
            s.pairs[w].f = BoundaryTrace(ds.grid);
            detail_io::get_doubles(in, s.pairs[w].f.v);
        }
        for (std::uint32_t w = 0; w < h.n_pairs; ++w) detail_io::get_doubles(in, s.phis[w].v);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline void save_model(const std::string& path, Network& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    const auto& c = net.config;
    out.write("DDSW", 4);
    detail_io::put<std::uint32_t>(out, 1);  // version
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.grid_n1));
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.grid_n2));
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.in_channels));
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.encoder_widths.size()));
    for (auto w : c.encoder_widths)
        detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kernel));
    detail_io::put<std::uint32_t>(out, c.sigmoid_head ? 1 : 0);
    detail_io::put_f64(out, c.lr);
    detail_io::put_f64(out, c.momentum);
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.batch));
    detail_io::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.epochs));
    detail_io::put(out, c.seed);
    net.visit_params([&out](nn::Tensor& t) { detail_io::put_doubles(out, t.v); });
    if (!out) throw format_error("write failure: " + path);
}

inline Network load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DDSW") throw format_error("not a model file");
    if (detail_io::get<std::uint32_t>(in) != 1) throw format_error("unsupported model version");
    NetworkConfig c;
    c.grid_n1 = detail_io::get<std::uint32_t>(in);
    c.grid_n2 = detail_io::get<std::uint32_t>(in);
    c.in_channels = detail_io::get<std::uint32_t>(in);
    const std::uint32_t depth = detail_io::get<std::uint32_t>(in);
    c.encoder_widths.resize(depth);
    for (auto& w : c.encoder_widths) w = detail_io::get<std::uint32_t>(in);
    c.kernel = detail_io::get<std::uint32_t>(in);
    c.sigmoid_head = detail_io::get<std::uint32_t>(in) != 0;
    c.lr = detail_io::get_f64(in);
    c.momentum = detail_io::get_f64(in);
    c.batch = detail_io::get<std::uint32_t>(in);
    c.epochs = detail_io::get<std::uint32_t>(in);
    c.seed = detail_io::get<std::uint64_t>(in);
    Network net(c);
    net.visit_params([&in](nn::Tensor& t) { detail_io::get_doubles(in, t.v); });
    in.peek();
    if (!in.eof()) throw corruption_error("trailing bytes after the parameter payload");
    return net;
}

enum class ExportFormat { csv, pgm };

namespace detail_io {

inline void export_plane_csv(std::ostream& out, const Grid& grid, const ScalarField& field,
                             std::size_t i3) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (std::size_t i = 0; i < grid.counts[0]; ++i) {
        line.str("");
        for (std::size_t j = 0; j < grid.counts[1]; ++j) {
            if (j) line << ',';
            line << field.v[grid.index(i, j, i3)];
        }
        out << line.str() << '\n';
    }
}

inline void export_plane_pgm(const std::string& path, const Grid& grid,
                             const ScalarField& field, std::size_t i3, double lo, double hi) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    out << "P5\n" << grid.counts[1] << " " << grid.counts[0] << "\n255\n";
    for (std::size_t i = 0; i < grid.counts[0]; ++i)
        for (std::size_t j = 0; j < grid.counts[1]; ++j) {
            double byte = 0.0;
            if (hi > lo) {
                byte = std::floor(255.0 * (field.v[grid.index(i, j, i3)] - lo) / (hi - lo));
                byte = std::min(byte, 255.0);
            }
            out.put(static_cast<char>(static_cast<unsigned char>(byte)));
        }
    if (!out) throw format_error("write failure: " + path);
}

inline std::string slice_path(const std::string& path, std::size_t i3) {
    const auto dot = path.rfind('.');
    std::ostringstream suffix;
    suffix << "_s" << std::setw(3) << std::setfill('0') << i3;
    if (dot == std::string::npos) return path + suffix.str();
    return path.substr(0, dot) + suffix.str() + path.substr(dot);
}

}  // namespace detail_io

// csv: row-major, one line per x1 index with n2 values, full precision.
// pgm: P5 min-max scaled to 0..255 (constant fields map to 0). 3D fields
// export one block (csv: blank-line separated) or file (pgm) per x3 slice.
inline void export_field(const ScalarField& field, const std::string& path,
                         ExportFormat format) {
    const auto& grid = *field.grid;
    if (format == ExportFormat::csv) {
        std::ofstream out(path);
        if (!out) throw format_error("cannot open for writing: " + path);
        for (std::size_t i3 = 0; i3 < grid.counts[2]; ++i3) {
            if (i3) out << '\n';
            detail_io::export_plane_csv(out, grid, field, i3);
        }
        if (!out) throw format_error("write failure: " + path);
        return;
    }
    double lo = field.v[0], hi = field.v[0];
    for (double v : field.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (grid.dim == 2) {
        detail_io::export_plane_pgm(path, grid, field, 0, lo, hi);
        return;
    }
    for (std::size_t i3 = 0; i3 < grid.counts[2]; ++i3)
        detail_io::export_plane_pgm(detail_io::slice_path(path, i3), grid, field, i3, lo, hi);
}

// --- JSON mirror of the network configuration ---

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
    j = nlohmann::json{{"grid_n1", c.grid_n1},
                       {"grid_n2", c.grid_n2},
                       {"in_channels", c.in_channels},
                       {"encoder_widths", c.encoder_widths},
                       {"kernel", c.kernel},
                       {"sigmoid_head", c.sigmoid_head},
                       {"lr", c.lr},
                       {"momentum", c.momentum},
                       {"batch", c.batch},
                       {"epochs", c.epochs},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
    j.at("grid_n1").get_to(c.grid_n1);
    j.at("grid_n2").get_to(c.grid_n2);
    j.at("in_channels").get_to(c.in_channels);
    j.at("encoder_widths").get_to(c.encoder_widths);
    j.at("kernel").get_to(c.kernel);
    j.at("sigmoid_head").get_to(c.sigmoid_head);
    j.at("lr").get_to(c.lr);
    j.at("momentum").get_to(c.momentum);
    j.at("batch").get_to(c.batch);
    j.at("epochs").get_to(c.epochs);
    j.at("seed").get_to(c.seed);
}

}  // namespace ddsm
