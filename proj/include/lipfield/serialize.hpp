#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lipfield/errors.hpp"
#include "lipfield/eval.hpp"
#include "lipfield/fields.hpp"
#include "lipfield/net.hpp"
#include "lipfield/optim.hpp"

namespace lipfield {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kVersionString = "lipfield 0.1.0";

// ---------------------------------------------------------------------------
// enum <-> string
// ---------------------------------------------------------------------------

namespace detail {

inline Activation activation_from(const std::string& name, double leaky_slope) {
    if (name == "relu") return Activation::relu();
    if (name == "leaky_relu") return Activation::leaky_relu(leaky_slope);
    if (name == "tanh") return Activation::tanh();
    if (name == "sigmoid") return Activation::sigmoid();
    if (name == "fullsort") return Activation::fullsort();
    if (name == "identity") return Activation::identity();
    throw ConfigError("unknown activation '" + name + "'");
}

inline RegVariant reg_variant_from(const std::string& name) {
    for (RegVariant v : {RegVariant::LipschitzProduct, RegVariant::YoshidaSqSum, RegVariant::DirectProduct,
                         RegVariant::LogProduct, RegVariant::KScale, RegVariant::L1, RegVariant::L2,
                         RegVariant::Dirichlet, RegVariant::None})
        if (to_string(v) == name) return v;
    throw ConfigError("unknown regularizer variant '" + name + "'");
}

inline NormKind norm_kind_from(const std::string& name) {
    if (name == "inf") return NormKind::Inf;
    if (name == "one") return NormKind::One;
    if (name == "spectral") return NormKind::Spectral;
    throw ConfigError("unknown norm kind '" + name + "'");
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": bad field '" + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    MlpParams params;
    std::size_t latent_dim = 0;
    std::uint64_t train_seed = 0;
    std::size_t final_epoch = 0;

    std::size_t spatial_dim() const { return params.input_dim() - latent_dim; }
};

inline json checkpoint_to_json(const Checkpoint& ck) {
    const MlpParams& p = ck.params;
    json j;
    j["format_version"] = kCheckpointVersion;
    j["dims"] = p.dims;
    j["activation"] = to_string(p.activation.kind);
    j["leaky_slope"] = p.activation.leaky_slope;
    j["lipschitz_mode"] = p.lipschitz_mode;
    j["output"] = p.output == OutputKind::Sigmoid ? "sigmoid" : "linear";
    j["input_scale"] = p.input_scale;
    json ws = json::array();
    for (const DenseMatrix& w : p.weights)
        ws.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"data", w.storage()}});
    j["weights"] = std::move(ws);
    j["biases"] = p.biases;
    j["rho"] = p.rho;
    j["latent_dim"] = ck.latent_dim;
    j["train_seed"] = ck.train_seed;
    j["final_epoch"] = ck.final_epoch;
    return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
    const int version = detail::get_field<int>(j, "format_version", "checkpoint");
    if (version != kCheckpointVersion)
        throw ConfigError("checkpoint format version " + std::to_string(version) + " is not supported");
    Checkpoint ck;
    MlpParams& p = ck.params;
    p.dims = detail::get_field<std::vector<std::size_t>>(j, "dims", "checkpoint");
    p.activation = detail::activation_from(detail::get_field<std::string>(j, "activation", "checkpoint"),
                                           detail::get_or<double>(j, "leaky_slope", 0.01));
    p.lipschitz_mode = detail::get_field<bool>(j, "lipschitz_mode", "checkpoint");
    p.output = detail::get_field<std::string>(j, "output", "checkpoint") == "sigmoid"
                   ? OutputKind::Sigmoid
                   : OutputKind::Linear;
    p.input_scale = detail::get_field<double>(j, "input_scale", "checkpoint");
    for (const json& wj : detail::get_field<json>(j, "weights", "checkpoint")) {
        DenseMatrix w(detail::get_field<std::size_t>(wj, "rows", "checkpoint weight"),
                      detail::get_field<std::size_t>(wj, "cols", "checkpoint weight"));
        const auto data = detail::get_field<std::vector<double>>(wj, "data", "checkpoint weight");
        if (data.size() != w.size()) throw ConfigError("checkpoint: weight data length mismatch");
        w.storage() = data;
        p.weights.push_back(std::move(w));
    }
    p.biases = detail::get_field<std::vector<DenseVector>>(j, "biases", "checkpoint");
    p.rho = detail::get_field<std::vector<double>>(j, "rho", "checkpoint");
    ck.latent_dim = detail::get_field<std::size_t>(j, "latent_dim", "checkpoint");
    ck.train_seed = detail::get_field<std::uint64_t>(j, "train_seed", "checkpoint");
    ck.final_epoch = detail::get_field<std::size_t>(j, "final_epoch", "checkpoint");

    if (p.weights.size() + 1 != p.dims.size() || p.biases.size() != p.weights.size())
        throw ConfigError("checkpoint: layer count mismatch");
    for (std::size_t i = 0; i < p.weights.size(); ++i)
        if (p.weights[i].rows() != p.dims[i + 1] || p.weights[i].cols() != p.dims[i] ||
            p.biases[i].size() != p.dims[i + 1])
            throw ConfigError("checkpoint: layer shape mismatch");
    if (p.lipschitz_mode && p.rho.size() != p.weights.size())
        throw ConfigError("checkpoint: rho length mismatch");
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint to " + path);
    out << checkpoint_to_json(ck).dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read checkpoint from " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint " + path + " is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Field specs and train configs
// ---------------------------------------------------------------------------

inline json field_to_json(const FieldSpec& f) {
    json j;
    j["kind"] = to_string(f.kind);
    j["representation"] = f.representation == FieldRepr::Occupancy ? "occupancy" : "sdf";
    j["latent"] = f.latent_target;
    switch (f.kind) {
        case FieldKind::Circle:
            j["center"] = f.center;
            j["radius"] = f.radius;
            break;
        case FieldKind::Star:
            j["center"] = f.center;
            j["r_outer"] = f.r_outer;
            j["r_inner"] = f.r_inner;
            j["points"] = f.star_points;
            break;
        case FieldKind::Polygon:
            j["vertices"] = f.vertices;
            break;
        case FieldKind::Torus3d:
            j["center"] = f.torus_a.center;
            j["major_radius"] = f.torus_a.major_radius;
            j["minor_radius"] = f.torus_a.minor_radius;
            break;
        case FieldKind::DoubleTorus3d:
            j["torus_a"] = {{"center", f.torus_a.center},
                            {"major_radius", f.torus_a.major_radius},
                            {"minor_radius", f.torus_a.minor_radius}};
            j["torus_b"] = {{"center", f.torus_b.center},
                            {"major_radius", f.torus_b.major_radius},
                            {"minor_radius", f.torus_b.minor_radius}};
            break;
        case FieldKind::RasterGrid:
            j["nx"] = f.raster.nx;
            j["ny"] = f.raster.ny;
            j["spacing"] = f.raster.spacing;
            j["origin"] = f.raster.origin;
            j["values"] = f.raster.values;
            break;
    }
    return j;
}

/// `base_dir` resolves relative file references (polygon vertex lists).
inline FieldSpec field_from_json(const json& j, const std::string& base_dir = ".") {
    const auto kind = detail::get_field<std::string>(j, "kind", "shape");
    const auto repr = detail::get_or<std::string>(j, "representation", "sdf") == "occupancy"
                          ? FieldRepr::Occupancy
                          : FieldRepr::Sdf;
    const auto latent = detail::get_field<DenseVector>(j, "latent", "shape");

    if (kind == "circle")
        return make_circle(detail::get_field<std::array<double, 2>>(j, "center", "circle"),
                           detail::get_field<double>(j, "radius", "circle"), latent, repr);
    if (kind == "star")
        return make_star(detail::get_field<std::array<double, 2>>(j, "center", "star"),
                         detail::get_field<double>(j, "r_outer", "star"),
                         detail::get_field<double>(j, "r_inner", "star"),
                         detail::get_field<int>(j, "points", "star"), latent, repr);
    if (kind == "polygon") {
        std::vector<std::array<double, 2>> verts;
        if (j.contains("vertices_file")) {
            const auto rel = j.at("vertices_file").get<std::string>();
            const auto path = std::filesystem::path(base_dir) / rel;
            std::ifstream in(path);
            if (!in) throw ConfigError("cannot read polygon vertices from " + path.string());
            verts = parse_polygon_text(in);
        } else {
            verts = detail::get_field<std::vector<std::array<double, 2>>>(j, "vertices", "polygon");
        }
        return make_polygon(std::move(verts), latent, repr);
    }
    if (kind == "torus3d") {
        TorusSpec t;
        t.center = detail::get_field<std::array<double, 3>>(j, "center", "torus3d");
        t.major_radius = detail::get_field<double>(j, "major_radius", "torus3d");
        t.minor_radius = detail::get_field<double>(j, "minor_radius", "torus3d");
        return make_torus(t, latent, repr);
    }
    if (kind == "double_torus3d") {
        auto torus_of = [](const json& tj) {
            TorusSpec t;
            t.center = detail::get_field<std::array<double, 3>>(tj, "center", "double_torus3d");
            t.major_radius = detail::get_field<double>(tj, "major_radius", "double_torus3d");
            t.minor_radius = detail::get_field<double>(tj, "minor_radius", "double_torus3d");
            return t;
        };
        return make_double_torus(torus_of(detail::get_field<json>(j, "torus_a", "double_torus3d")),
                                 torus_of(detail::get_field<json>(j, "torus_b", "double_torus3d")),
                                 latent, repr);
    }
    if (kind == "raster_grid") {
        RasterGrid g;
        g.nx = detail::get_field<std::size_t>(j, "nx", "raster_grid");
        g.ny = detail::get_field<std::size_t>(j, "ny", "raster_grid");
        g.spacing = detail::get_field<double>(j, "spacing", "raster_grid");
        g.origin = detail::get_or<std::array<double, 2>>(j, "origin", {0.0, 0.0});
        g.values = detail::get_field<std::vector<double>>(j, "values", "raster_grid");
        return make_raster(std::move(g), latent, repr);
    }
    throw ConfigError("unknown shape kind '" + kind + "'");
}

inline json train_config_to_json(const TrainConfig& c) {
    json j;
    j["arch"] = {{"dims", c.dims},
                 {"activation", to_string(c.activation.kind)},
                 {"leaky_slope", c.activation.leaky_slope},
                 {"lipschitz_mode", c.lipschitz_mode},
                 {"input_scale", c.input_scale}};
    j["loss"] = to_string(c.loss_kind);
    json reg;
    reg["variant"] = to_string(c.regularizer.variant);
    reg["alpha"] = c.regularizer.alpha;
    reg["norm_kind"] = to_string(c.regularizer.norm_kind);
    reg["fd_step"] = c.regularizer.fd_step;
    if (!c.regularizer.dirichlet_samples.empty())
        reg["dirichlet_samples"] = c.regularizer.dirichlet_samples;
    j["regularizer"] = std::move(reg);
    j["optimizer"] = {{"kind", c.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
                      {"lr", c.optimizer.lr},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps}};
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    json shapes = json::array();
    for (const FieldSpec& f : c.shapes) shapes.push_back(field_to_json(f));
    j["shapes"] = std::move(shapes);
    j["sample_plan"] = {{"n_total", c.sample_plan.n_total},
                        {"fractions", std::array<double, 3>{c.sample_plan.frac_surface,
                                                            c.sample_plan.frac_near,
                                                            c.sample_plan.frac_uniform}},
                        {"near_sigma", c.sample_plan.near_sigma},
                        {"bbox", c.sample_plan.bbox},
                        {"seed", c.sample_plan.seed}};
    j["resample_per_epoch"] = c.resample_per_epoch;
    return j;
}

inline TrainConfig train_config_from_json(const json& j, const std::string& base_dir = ".") {
    TrainConfig c;
    const json arch = detail::get_field<json>(j, "arch", "config");
    c.dims = detail::get_field<std::vector<std::size_t>>(arch, "dims", "arch");
    c.activation = detail::activation_from(detail::get_field<std::string>(arch, "activation", "arch"),
                                           detail::get_or<double>(arch, "leaky_slope", 0.01));
    c.lipschitz_mode = detail::get_field<bool>(arch, "lipschitz_mode", "arch");
    c.input_scale = detail::get_or<double>(arch, "input_scale", 100.0);

    const auto loss_name = detail::get_or<std::string>(j, "loss", "mse");
    if (loss_name == "mse")
        c.loss_kind = LossKind::Mse;
    else if (loss_name == "bce")
        c.loss_kind = LossKind::Bce;
    else
        throw ConfigError("unknown loss '" + loss_name + "'");

    const json reg = detail::get_field<json>(j, "regularizer", "config");
    c.regularizer.variant = detail::reg_variant_from(detail::get_field<std::string>(reg, "variant", "regularizer"));
    c.regularizer.alpha = detail::get_field<double>(reg, "alpha", "regularizer");
    c.regularizer.norm_kind =
        detail::norm_kind_from(detail::get_or<std::string>(reg, "norm_kind", "spectral"));
    c.regularizer.fd_step = detail::get_or<double>(reg, "fd_step", 1e-3);
    if (reg.contains("dirichlet_samples"))
        c.regularizer.dirichlet_samples = reg.at("dirichlet_samples").get<std::vector<DenseVector>>();

    const json opt = detail::get_field<json>(j, "optimizer", "config");
    const auto opt_kind = detail::get_or<std::string>(opt, "kind", "adam");
    if (opt_kind == "adam")
        c.optimizer.kind = OptimizerKind::Adam;
    else if (opt_kind == "sgd")
        c.optimizer.kind = OptimizerKind::Sgd;
    else
        throw ConfigError("unknown optimizer '" + opt_kind + "'");
    c.optimizer.lr = detail::get_field<double>(opt, "lr", "optimizer");
    c.optimizer.beta1 = detail::get_or<double>(opt, "beta1", 0.9);
    c.optimizer.beta2 = detail::get_or<double>(opt, "beta2", 0.999);
    c.optimizer.eps = detail::get_or<double>(opt, "eps", 1e-8);

    c.epochs = detail::get_field<std::size_t>(j, "epochs", "config");
    c.batch_size = detail::get_or<std::size_t>(j, "batch_size", 512);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);

    for (const json& sj : detail::get_field<json>(j, "shapes", "config"))
        c.shapes.push_back(field_from_json(sj, base_dir));

    const json plan = detail::get_field<json>(j, "sample_plan", "config");
    c.sample_plan.n_total = detail::get_field<std::size_t>(plan, "n_total", "sample_plan");
    const auto fr = detail::get_or<std::array<double, 3>>(plan, "fractions", {0.4, 0.4, 0.2});
    c.sample_plan.frac_surface = fr[0];
    c.sample_plan.frac_near = fr[1];
    c.sample_plan.frac_uniform = fr[2];
    c.sample_plan.near_sigma = detail::get_or<double>(plan, "near_sigma", 0.01);
    c.sample_plan.bbox = detail::get_or<std::vector<std::array<double, 2>>>(plan, "bbox", {});
    c.sample_plan.seed = detail::get_or<std::uint64_t>(plan, "seed", 0);

    c.resample_per_epoch = detail::get_or<bool>(j, "resample_per_epoch", false);
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config from " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return train_config_from_json(j, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// CSV / PGM / SVG emitters
// ---------------------------------------------------------------------------

/// Round-trip exact rendering for 64-bit floats.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw ConfigError("cannot write csv to " + path);
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << "\n";
        columns_ = header.size();
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_) throw DimensionError("csv row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << format_g17(values[i]);
        out_ << "\n";
    }

private:
    std::ofstream out_;
    std::size_t columns_ = 0;
};

/// Binary PGM with a linear value map: lo -> 0, hi -> 255, clamped; the range
/// is recorded in a header comment.
inline void write_pgm(const RasterGrid& grid, const std::string& path, double lo, double hi) {
    if (!(hi > lo)) throw DomainError("write_pgm: need hi > lo");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write pgm to " + path);
    out << "P5\n# value range [" << format_g17(lo) << ", " << format_g17(hi) << "]\n"
        << grid.nx << " " << grid.ny << "\n255\n";
    for (std::size_t iy = 0; iy < grid.ny; ++iy)
        for (std::size_t ix = 0; ix < grid.nx; ++ix) {
            const double v = (grid.at(ix, iy) - lo) / (hi - lo);
            const int byte = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
            out.put(static_cast<char>(byte));
        }
}

/// Contours as SVG polylines in the unit box, y flipped for display.
inline void write_contour_svg(const Contour& contour, const std::string& path,
                              const std::string& stroke = "black") {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write svg to " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\">\n";
    for (const Polyline& pl : contour.polylines) {
        out << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"0.004\" points=\"";
        for (std::size_t i = 0; i < pl.size(); ++i)
            out << (i ? " " : "") << pl[i][0] << "," << 1.0 - pl[i][1];
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

/// Points file: one "x y [z]" line per point.
inline std::vector<DenseVector> parse_points_text(std::istream& in) {
    std::vector<DenseVector> points;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        DenseVector p;
        double v;
        while (ls >> v) p.push_back(v);
        if (p.size() < 2 || p.size() > 3)
            throw ParseError("points line must hold 'x y' or 'x y z'", lineno);
        points.push_back(std::move(p));
    }
    return points;
}

inline std::vector<DenseVector> load_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read points from " + path);
    return parse_points_text(in);
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string command;
    json resolved_config;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;
    std::string status = "ok";
};

inline void write_manifest(const RunManifest& m, const std::string& dir) {
    json j;
    j["command"] = m.command;
    j["config"] = m.resolved_config;
    j["seed"] = m.seed;
    j["code_version"] = kVersionString;
    j["outputs"] = m.outputs;
    j["wall_seconds"] = m.wall_seconds;
    j["status"] = m.status;
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + dir);
    out << j.dump(1) << "\n";
}

} // namespace lipfield
