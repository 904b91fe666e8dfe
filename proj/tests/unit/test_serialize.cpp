#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lipfield/serialize.hpp"

using namespace lipfield;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("serialize") {

TEST_CASE("checkpoint round-trips bit-exactly") {
    MlpParams p = init_params({3, 12, 12, 1}, Activation::leaky_relu(0.02), true, 88);
    for (auto& r : p.rho) r -= 0.4;
    Checkpoint ck{p, 1, 88, 250};

    const std::string path = temp_path("lipfield_ck_test.json");
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);

    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        CHECK(back.params.weights[i] == p.weights[i]);
        CHECK(back.params.biases[i] == p.biases[i]);
        CHECK(back.params.rho[i] == p.rho[i]);
    }
    CHECK(back.params.activation.kind == p.activation.kind);
    CHECK(back.params.activation.leaky_slope == p.activation.leaky_slope);
    CHECK(back.params.input_scale == p.input_scale);
    CHECK(back.train_seed == 88);
    CHECK(back.final_epoch == 250);

    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const DenseVector x{rng.uniform01(), rng.uniform01()};
        const DenseVector t{rng.uniform(-0.5, 1.5)};
        CHECK(forward(back.params, x, t)[0] == forward(p, x, t)[0]);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint version and shape mismatches are rejected") {
    MlpParams p = init_params({2, 4, 1}, Activation::tanh(), false, 1);
    json j = checkpoint_to_json({p, 1, 1, 1});
    j["format_version"] = 999;
    CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);

    json j2 = checkpoint_to_json({p, 1, 1, 1});
    j2["weights"][0]["rows"] = 7;
    CHECK_THROWS_AS(checkpoint_from_json(j2), ConfigError);

    json j3 = checkpoint_to_json({p, 1, 1, 1});
    j3.erase("dims");
    CHECK_THROWS_AS(checkpoint_from_json(j3), ConfigError);
}

TEST_CASE("train config round-trips through json") {
    TrainConfig c;
    c.dims = {3, 64, 64, 1};
    c.activation = Activation::relu();
    c.lipschitz_mode = true;
    c.input_scale = 100.0;
    c.regularizer = {RegVariant::LipschitzProduct, 3e-6};
    c.loss_kind = LossKind::Mse;
    c.optimizer = {OptimizerKind::Adam, 1e-4, 0.9, 0.999, 1e-8};
    c.epochs = 400;
    c.batch_size = 512;
    c.seed = 11;
    c.shapes = {make_circle({0.5, 0.5}, 0.3, {0.0}), make_star({0.5, 0.5}, 0.35, 0.15, 5, {1.0})};
    c.sample_plan.n_total = 4096;
    c.sample_plan.seed = 7;

    const json j = train_config_to_json(c);
    const TrainConfig back = train_config_from_json(j);
    CHECK(train_config_to_json(back) == j); // parse(serialize(c)) == c

    CHECK(back.dims == c.dims);
    CHECK(back.regularizer.variant == RegVariant::LipschitzProduct);
    CHECK(back.regularizer.alpha == 3e-6);
    CHECK(back.shapes.size() == 2);
    CHECK(back.shapes[1].kind == FieldKind::Star);
    CHECK(back.shapes[1].vertices == c.shapes[1].vertices);
}

TEST_CASE("config parsing reports the bad field") {
    json j = train_config_to_json([] {
        TrainConfig c;
        c.dims = {3, 8, 1};
        c.shapes = {make_circle({0.5, 0.5}, 0.3, {0.0})};
        c.epochs = 1;
        return c;
    }());
    j["regularizer"].erase("alpha");
    CHECK_THROWS_WITH_AS(train_config_from_json(j), doctest::Contains("alpha"), ConfigError);

    json j2 = j;
    j2["regularizer"]["alpha"] = 1e-6;
    j2["arch"]["activation"] = "swish";
    CHECK_THROWS_WITH_AS(train_config_from_json(j2), doctest::Contains("swish"), ConfigError);
}

TEST_CASE("dirichlet samples survive the config round trip") {
    TrainConfig c;
    c.dims = {3, 8, 1};
    c.shapes = {make_circle({0.5, 0.5}, 0.3, {0.0})};
    c.epochs = 1;
    c.regularizer.variant = RegVariant::Dirichlet;
    c.regularizer.alpha = 1e-4;
    c.regularizer.dirichlet_samples = {DenseVector{1.0 / 3.0}, DenseVector{2.0 / 3.0}};
    const TrainConfig back = train_config_from_json(train_config_to_json(c));
    REQUIRE(back.regularizer.dirichlet_samples.size() == 2);
    CHECK(back.regularizer.dirichlet_samples[0][0] == c.regularizer.dirichlet_samples[0][0]);
}

TEST_CASE("format_g17 round-trips doubles") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        const double v = (rng.uniform01() - 0.5) * std::pow(10.0, rng.uniform(-30, 30));
        CHECK(std::stod(format_g17(v)) == v);
    }
}

TEST_CASE("csv writer emits a header and 17-digit values") {
    const std::string path = temp_path("lipfield_csv_test.csv");
    {
        CsvWriter csv(path, {"epoch", "loss"});
        csv.row({0.0, 0.1234567890123456789});
        CHECK_THROWS_AS(csv.row({1.0}), DimensionError);
    }
    const std::string text = slurp(path);
    CHECK(text.substr(0, 11) == "epoch,loss\n");
    CHECK(text.find("0.12345678901234568") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("pgm writer produces a valid binary header and payload") {
    RasterGrid g;
    g.nx = 3;
    g.ny = 2;
    g.spacing = 1.0;
    g.values = {-1.0, 0.0, 1.0, 2.0, -5.0, 0.5};
    const std::string path = temp_path("lipfield_pgm_test.pgm");
    write_pgm(g, path, -1.0, 1.0);
    const std::string text = slurp(path);
    CHECK(text.substr(0, 3) == "P5\n");
    CHECK(text.find("3 2\n255\n") != std::string::npos);
    const std::string payload = text.substr(text.size() - 6);
    CHECK(static_cast<unsigned char>(payload[0]) == 0);    // -1 maps to 0
    CHECK(static_cast<unsigned char>(payload[1]) == 128);  // 0 maps to mid
    CHECK(static_cast<unsigned char>(payload[2]) == 255);  // 1 maps to 255
    CHECK(static_cast<unsigned char>(payload[3]) == 255);  // clamped
    CHECK(static_cast<unsigned char>(payload[4]) == 0);    // clamped
    CHECK_THROWS_AS(write_pgm(g, path, 1.0, 1.0), DomainError);
    std::remove(path.c_str());
}

TEST_CASE("contour svg contains its polylines") {
    Contour c;
    c.polylines.push_back({{0.1, 0.2}, {0.3, 0.4}});
    const std::string path = temp_path("lipfield_svg_test.svg");
    write_contour_svg(c, path);
    const std::string text = slurp(path);
    CHECK(text.find("<svg") != std::string::npos);
    CHECK(text.find("polyline") != std::string::npos);
    CHECK(text.find("0.1,0.8") != std::string::npos); // y flipped
    std::remove(path.c_str());
}

TEST_CASE("points files parse and validate") {
    std::istringstream in("0.1 0.2\n# note\n0.3 0.4 0.5\n");
    const auto pts = parse_points_text(in);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].size() == 2);
    CHECK(pts[1].size() == 3);

    std::istringstream bad("0.1\n");
    CHECK_THROWS_AS(parse_points_text(bad), ParseError);
}

TEST_CASE("manifest lands in the output directory") {
    const std::string dir = temp_path("lipfield_manifest_dir");
    std::filesystem::create_directories(dir);
    RunManifest m;
    m.command = "train";
    m.resolved_config = {{"epochs", 3}};
    m.seed = 9;
    m.outputs = {"checkpoint.json"};
    m.wall_seconds = 1.5;
    write_manifest(m, dir);
    const json j = json::parse(slurp(dir + "/manifest.json"));
    CHECK(j["command"] == "train");
    CHECK(j["status"] == "ok");
    CHECK(j["outputs"][0] == "checkpoint.json");
    std::filesystem::remove_all(dir);
}

} // TEST_SUITE
