// lipfield: neural implicit fields with learnable Lipschitz bounds.
//
// Subcommands reproduce the experiments end to end: train writes a
// checkpoint, interp/attack/fit/metrics consume one. Every command writes a
// manifest.json into its output directory. Exit codes: 0 success, 2 bad
// usage or config, 3 numerical abort.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lipfield/eval.hpp"
#include "lipfield/optim.hpp"
#include "lipfield/serialize.hpp"

namespace fs = std::filesystem;
using namespace lipfield;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

DenseVector parse_latent(const std::string& text) {
    DenseVector t;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            t.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse latent component '" + item + "'");
        }
    }
    if (t.empty()) throw ConfigError("empty latent code");
    return t;
}

std::vector<DenseVector> jacobian_sample_grid(std::size_t res) {
    std::vector<DenseVector> grid;
    const double step = 1.0 / static_cast<double>(res - 1);
    for (std::size_t i = 0; i < res; ++i)
        for (std::size_t j = 0; j < res; ++j) grid.push_back({j * step, i * step});
    return grid;
}

void require_2d(const Checkpoint& ck) {
    if (ck.spatial_dim() != 2)
        throw ConfigError("this command renders 2-D fields; checkpoint has spatial dimension " +
                          std::to_string(ck.spatial_dim()));
}

int cmd_train(const std::string& config_path, const std::string& out_dir, long long seed_override) {
    TrainConfig cfg = load_train_config(config_path); // throws ConfigError before anything is written
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    Timer timer;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "train";
    manifest.resolved_config = train_config_to_json(cfg);
    manifest.seed = cfg.seed;

    try {
        auto [params, log] = train(cfg);

        Checkpoint ck{std::move(params), cfg.latent_dim(), cfg.seed, cfg.epochs - 1};
        save_checkpoint(ck, (fs::path(out_dir) / "checkpoint.json").string());

        CsvWriter csv((fs::path(out_dir) / "trainlog.csv").string(),
                      {"epoch", "loss", "reg", "bound", "seconds"});
        for (const TrainLogRow& row : log)
            csv.row({static_cast<double>(row.epoch), row.task_loss, row.reg_value, row.bound_product,
                     row.seconds});

        manifest.outputs = {"checkpoint.json", "trainlog.csv"};
        manifest.wall_seconds = timer.seconds();
        write_manifest(manifest, out_dir);
        return kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "train aborted: " << e.what() << "\n";
        manifest.status = std::string("aborted: ") + e.what();
        manifest.wall_seconds = timer.seconds();
        write_manifest(manifest, out_dir);
        return kExitNumerical;
    }
}

int cmd_interp(const std::string& ckpt_path, const std::string& out_dir,
               const std::vector<std::string>& t_flags, double t_start, double t_end, double t_step,
               std::size_t grid_res) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    require_2d(ck);
    if (grid_res < 2) throw ConfigError("grid resolution must be at least 2");

    std::vector<DenseVector> ts;
    if (!t_flags.empty()) {
        for (const std::string& s : t_flags) ts.push_back(parse_latent(s));
    } else {
        if (ck.latent_dim != 1)
            throw ConfigError("latent range sweep needs a 1-D latent; pass explicit --t codes");
        for (double v = t_start; v <= t_end + 1e-12; v += t_step) ts.push_back({v});
    }
    for (const DenseVector& t : ts)
        if (t.size() != ck.latent_dim)
            throw ConfigError("latent code length " + std::to_string(t.size()) +
                              " does not match checkpoint latent dimension " +
                              std::to_string(ck.latent_dim));

    Timer timer;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "interp";
    manifest.resolved_config = {{"checkpoint", ckpt_path}, {"grid_res", grid_res}};
    manifest.seed = ck.train_seed;

    std::vector<RasterGrid> grids;
    grids.reserve(ts.size());
    for (const DenseVector& t : ts) grids.push_back(render_grid(ck.params, t, grid_res));

    // one shared linear value map across the sweep so frames are comparable
    double lo = grids[0].values[0], hi = lo;
    for (const RasterGrid& g : grids)
        for (double v : g.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) hi = lo + 1.0;
    manifest.resolved_config["pgm_range"] = {lo, hi};

    std::vector<std::string> smooth_header;
    for (std::size_t k = 0; k < ck.latent_dim; ++k) smooth_header.push_back("t" + std::to_string(k));
    smooth_header.push_back("jacobian_norm_sq");
    CsvWriter smooth((fs::path(out_dir) / "smoothness.csv").string(), smooth_header);

    const auto jac_grid = jacobian_sample_grid(16);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::string field_name = "field_t" + std::to_string(i) + ".pgm";
        const std::string contour_name = "contour_t" + std::to_string(i) + ".svg";
        write_pgm(grids[i], (fs::path(out_dir) / field_name).string(), lo, hi);
        write_contour_svg(marching_squares(grids[i], 0.0), (fs::path(out_dir) / contour_name).string());
        manifest.outputs.push_back(field_name);
        manifest.outputs.push_back(contour_name);

        std::vector<double> row(ts[i].begin(), ts[i].end());
        row.push_back(jacobian_norm_sq(ck.params, jac_grid, ts[i]));
        smooth.row(row);
    }
    manifest.outputs.push_back("smoothness.csv");
    manifest.wall_seconds = timer.seconds();
    write_manifest(manifest, out_dir);
    return kExitOk;
}

int cmd_attack(const std::string& ckpt_path, const std::string& out_dir, double epsilon,
               const std::string& t_text, std::size_t grid_res, double probe_step,
               std::uint64_t seed) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    require_2d(ck);
    const DenseVector t = parse_latent(t_text);
    if (t.size() != ck.latent_dim)
        throw ConfigError("latent code length does not match checkpoint latent dimension");

    Timer timer;
    fs::create_directories(out_dir);

    const AttackReport rep = fgsm_attack(ck.params, t, epsilon, jacobian_sample_grid(grid_res),
                                         probe_step, seed);

    CsvWriter csv((fs::path(out_dir) / "attack.csv").string(),
                  {"epsilon", "mean_abs_delta", "max_abs_delta"});
    csv.row({rep.epsilon, rep.mean_abs_delta, rep.max_abs_delta});

    const RasterGrid before = render_grid(ck.params, t, grid_res);
    const RasterGrid after = render_grid(ck.params, rep.t_adv, grid_res);
    double lo = before.values[0], hi = lo;
    for (const RasterGrid* g : {&before, &after})
        for (double v : g->values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) hi = lo + 1.0;
    write_pgm(before, (fs::path(out_dir) / "before.pgm").string(), lo, hi);
    write_pgm(after, (fs::path(out_dir) / "after.pgm").string(), lo, hi);

    RunManifest manifest;
    manifest.command = "attack";
    manifest.resolved_config = {{"checkpoint", ckpt_path}, {"epsilon", epsilon},
                                {"t", t},                  {"grid_res", grid_res},
                                {"probe_step", probe_step}, {"pgm_range", {lo, hi}}};
    manifest.seed = seed;
    manifest.outputs = {"attack.csv", "before.pgm", "after.pgm"};
    manifest.wall_seconds = timer.seconds();
    write_manifest(manifest, out_dir);
    return kExitOk;
}

int cmd_fit(const std::string& ckpt_path, const std::string& out_dir, const std::string& points_path,
            const std::string& t_init_text, const FitOptions& opts, std::size_t grid_res) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const DenseVector t_init = parse_latent(t_init_text);
    if (t_init.size() != ck.latent_dim)
        throw ConfigError("latent code length does not match checkpoint latent dimension");
    const std::vector<DenseVector> points = load_points(points_path);
    for (const DenseVector& p : points)
        if (p.size() != ck.spatial_dim())
            throw ConfigError("points file dimension does not match the checkpoint's spatial dimension");

    Timer timer;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "fit";
    manifest.resolved_config = {{"checkpoint", ckpt_path},
                                {"points", points_path},
                                {"t_init", t_init},
                                {"steps", opts.steps},
                                {"eikonal_weight", opts.eikonal_weight},
                                {"fd_step", opts.fd_step},
                                {"optimizer", opts.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
                                {"lr", opts.optimizer.lr}};
    manifest.seed = ck.train_seed;

    const FitResult res = fit_latent(ck.params, points, t_init, opts);

    {
        std::vector<std::string> header{"step"};
        for (std::size_t k = 0; k < ck.latent_dim; ++k) header.push_back("t" + std::to_string(k));
        header.push_back("loss");
        CsvWriter csv((fs::path(out_dir) / "trajectory.csv").string(), header);
        for (std::size_t s = 0; s < res.trajectory.size(); ++s) {
            std::vector<double> row{static_cast<double>(s)};
            row.insert(row.end(), res.trajectory[s].first.begin(), res.trajectory[s].first.end());
            row.push_back(res.trajectory[s].second);
            csv.row(row);
        }
    }
    manifest.outputs = {"trajectory.csv"};

    if (res.diverged) {
        std::cerr << "fit aborted: loss diverged after " << res.trajectory.size() << " steps\n";
        manifest.status = "aborted: loss diverged";
        manifest.wall_seconds = timer.seconds();
        write_manifest(manifest, out_dir);
        return kExitNumerical;
    }

    if (ck.spatial_dim() == 2) {
        const RasterGrid grid = render_grid(ck.params, res.t_star, grid_res);
        write_contour_svg(marching_squares(grid, 0.0), (fs::path(out_dir) / "fit_contour.svg").string());
        manifest.outputs.push_back("fit_contour.svg");
    }
    manifest.resolved_config["t_star"] = res.t_star;
    manifest.resolved_config["final_loss"] = res.final_loss;
    manifest.wall_seconds = timer.seconds();
    write_manifest(manifest, out_dir);
    return kExitOk;
}

int cmd_metrics(const std::string& ckpt_path, const std::string& out_dir, std::size_t pairs,
                std::size_t grid_res, std::uint64_t seed) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    require_2d(ck);

    Timer timer;
    fs::create_directories(out_dir);

    const auto x_grid = jacobian_sample_grid(grid_res);
    const LipschitzBoundReport bound = lipschitz_bound(ck.params);
    const ProbeReport probe = empirical_lipschitz(ck.params, x_grid, pairs, seed);

    // per-point Jacobian stats over a unit-range latent sweep
    double jac_mean = 0.0, jac_max = 0.0;
    const std::size_t t_samples = 21;
    Rng trng(seed ^ 0x7177ull);
    for (std::size_t i = 0; i < t_samples; ++i) {
        DenseVector t(ck.latent_dim);
        if (ck.latent_dim == 1)
            t[0] = static_cast<double>(i) / static_cast<double>(t_samples - 1);
        else
            for (auto& e : t) e = trng.uniform01();
        const double j = jacobian_norm_sq(ck.params, x_grid, t);
        jac_mean += j / static_cast<double>(t_samples);
        jac_max = std::max(jac_max, j);
    }

    {
        std::ofstream out(fs::path(out_dir) / "metrics.csv");
        if (!out) throw ConfigError("cannot write metrics.csv");
        out << "metric,value\n";
        out << "bound_product," << format_g17(bound.product) << "\n";
        for (std::size_t i = 0; i < bound.per_layer.size(); ++i)
            out << "c_" << i << "," << format_g17(bound.per_layer[i]) << "\n";
        out << "empirical_ratio_max," << format_g17(probe.empirical_ratio_max) << "\n";
        out << "pairs_tested," << format_g17(static_cast<double>(probe.pairs_tested)) << "\n";
        out << "jacobian_norm_sq_mean," << format_g17(jac_mean) << "\n";
        out << "jacobian_norm_sq_max," << format_g17(jac_max) << "\n";
    }

    RunManifest manifest;
    manifest.command = "metrics";
    manifest.resolved_config = {{"checkpoint", ckpt_path}, {"pairs", pairs}, {"grid_res", grid_res}};
    manifest.seed = seed;
    manifest.outputs = {"metrics.csv"};
    manifest.wall_seconds = timer.seconds();
    write_manifest(manifest, out_dir);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lipschitz-regularized neural implicit fields"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_dir = "out", points_path, t_text = "0", t_init_text = "0.5";
    std::vector<std::string> t_flags;
    long long seed_override = -1;
    std::uint64_t seed = 0;
    double epsilon = 0.05, probe_step = 1e-3;
    double t_start = -0.5, t_end = 1.5, t_step = 0.25;
    std::size_t grid_res = 64, pairs = 1000, steps = 500;
    std::string fit_optimizer = "adam";
    double fit_lr = 1e-2, eikonal_weight = 0.0, fd_step = 1e-3;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    train_cmd->add_option("--config", config_path, "training config (json)")->required();
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--seed", seed_override, "override the config seed");

    CLI::App* interp_cmd = app.add_subcommand("interp", "render fields over a latent sweep");
    interp_cmd->add_option("--checkpoint", ckpt_path, "checkpoint (json)")->required();
    interp_cmd->add_option("--out", out_dir, "output directory");
    interp_cmd->add_option("--t", t_flags, "explicit latent codes (comma-separated components)");
    interp_cmd->add_option("--t-start", t_start, "sweep start");
    interp_cmd->add_option("--t-end", t_end, "sweep end");
    interp_cmd->add_option("--t-step", t_step, "sweep step");
    interp_cmd->add_option("--grid-res", grid_res, "render resolution");

    CLI::App* attack_cmd = app.add_subcommand("attack", "fast gradient sign attack on the latent");
    attack_cmd->add_option("--checkpoint", ckpt_path, "checkpoint (json)")->required();
    attack_cmd->add_option("--out", out_dir, "output directory");
    attack_cmd->add_option("--epsilon", epsilon, "attack budget in latent units");
    attack_cmd->add_option("--t", t_text, "latent code to attack");
    attack_cmd->add_option("--grid-res", grid_res, "evaluation grid resolution");
    attack_cmd->add_option("--probe-step", probe_step, "offset for the gradient probe");
    attack_cmd->add_option("--seed", seed, "probe direction seed");

    CLI::App* fit_cmd = app.add_subcommand("fit", "test-time latent optimization on points");
    fit_cmd->add_option("--checkpoint", ckpt_path, "checkpoint (json)")->required();
    fit_cmd->add_option("--points", points_path, "points file, one 'x y [z]' per line")->required();
    fit_cmd->add_option("--out", out_dir, "output directory");
    fit_cmd->add_option("--t-init", t_init_text, "initial latent code");
    fit_cmd->add_option("--steps", steps, "optimization steps");
    fit_cmd->add_option("--optimizer", fit_optimizer, "adam or sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    fit_cmd->add_option("--lr", fit_lr, "learning rate");
    fit_cmd->add_option("--eikonal-weight", eikonal_weight, "weight of the eikonal term");
    fit_cmd->add_option("--fd-step", fd_step, "finite-difference step for the eikonal gradient");
    fit_cmd->add_option("--grid-res", grid_res, "contour render resolution");

    CLI::App* metrics_cmd = app.add_subcommand("metrics", "bound, probe and smoothness report");
    metrics_cmd->add_option("--checkpoint", ckpt_path, "checkpoint (json)")->required();
    metrics_cmd->add_option("--out", out_dir, "output directory");
    metrics_cmd->add_option("--pairs", pairs, "latent pairs for the empirical probe");
    metrics_cmd->add_option("--grid-res", grid_res, "spatial sample resolution");
    metrics_cmd->add_option("--seed", seed, "probe seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir, seed_override);
        if (interp_cmd->parsed())
            return cmd_interp(ckpt_path, out_dir, t_flags, t_start, t_end, t_step, grid_res);
        if (attack_cmd->parsed())
            return cmd_attack(ckpt_path, out_dir, epsilon, t_text, grid_res, probe_step, seed);
        if (fit_cmd->parsed()) {
            FitOptions opts;
            opts.steps = steps;
            opts.optimizer.kind = fit_optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
            opts.optimizer.lr = fit_lr;
            opts.eikonal_weight = eikonal_weight;
            opts.fd_step = fd_step;
            return cmd_fit(ckpt_path, out_dir, points_path, t_init_text, opts, grid_res);
        }
        if (metrics_cmd->parsed()) return cmd_metrics(ckpt_path, out_dir, pairs, grid_res, seed);
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
