#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vaeiw/bprost.hpp"
#include "vaeiw/harness.hpp"

using namespace vaeiw;
using namespace vaeiw::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig small_grid(std::uint64_t seed = 1) {
    RunConfig cfg;
    cfg.env = {"grid_collect", {{"size", 8}, {"gems", 4}, {"cell_pixels", 4}, {"seed", 3}, {"move_cap", 40}}};
    cfg.planner.node_budget = 60;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("normalization") {
    CHECK(normalize_score(200, 100, 200) == 100.0);
    CHECK(normalize_score(100, 100, 200) == 0.0);
    CHECK(normalize_score(150, 100, 200) == 50.0);
    CHECK(normalize_score(50, 100, 200) == -50.0);
    CHECK_THROWS_AS(normalize_score(1, 5, 5), std::invalid_argument);
}

TEST_CASE("split sizes follow 95/5") {
    CHECK(split_sizes(15000) == std::pair<std::size_t, std::size_t>{14250, 750});
    CHECK(split_sizes(100) == std::pair<std::size_t, std::size_t>{95, 5});
    CHECK(split_sizes(2) == std::pair<std::size_t, std::size_t>{1, 1});
    CHECK_THROWS_AS(split_sizes(1), std::invalid_argument);
    CHECK_THROWS_AS(split_sizes(0), std::invalid_argument);
}

TEST_CASE("frame files round trip with a little-endian header") {
    TempDir dir("vaeiw_frames");
    GrayImage img{3, 2, {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.125f}};
    write_frame(dir.path / "f.f32", img);
    CHECK(fs::file_size(dir.path / "f.f32") == 8 + 6 * 4);
    std::ifstream in(dir.path / "f.f32", std::ios::binary);
    unsigned char head[8];
    in.read(reinterpret_cast<char*>(head), 8);
    CHECK(head[0] == 3);
    CHECK(head[1] == 0);
    CHECK(head[4] == 2);
    CHECK(read_frame(dir.path / "f.f32") == img);

    std::ofstream(dir.path / "short.f32", std::ios::binary) << "abc";
    CHECK_THROWS(read_frame(dir.path / "short.f32"));
}

TEST_CASE("collect writes frames and a 95/5 index") {
    TempDir dir("vaeiw_collect");
    const RunConfig cfg = small_grid();
    const FrameDataset ds = collect_frames(cfg, 100, dir.path);
    CHECK(ds.count() == 100);
    CHECK(ds.train == 95);
    CHECK(ds.validation == 5);

    const FrameDataset back = read_dataset(dir.path);
    CHECK(back.count() == 100);
    CHECK(back.train == 95);
    CHECK(back.height == 32);
    CHECK(read_frame(dir.path / back.frames[0].file).width == 32);

    const json index = json::parse(std::ifstream(dir.path / "index.json"));
    CHECK(index.at("count") == 100);
    CHECK(index.at("split").at("validation") == 5);

    fs::remove(dir.path / back.frames[7].file);
    CHECK_THROWS(read_dataset(dir.path));
    CHECK_THROWS_AS(collect_frames(cfg, 1, dir.path / "tiny"), std::invalid_argument);
}

TEST_CASE("collected frames reproduce the recorded B-PROST feature counts") {
    // Frames are stored at screen resolution here, so each gray value maps
    // back to exactly one palette color.
    TempDir dir("vaeiw_replay");
    const RunConfig cfg = small_grid(5);
    const FrameDataset ds = collect_frames(cfg, 60, dir.path);
    auto env = make_environment(cfg.env);
    const Screen proto = env->render(env->initial_state());
    const auto bcfg = bprost::Config::for_screen(proto, 4, 4);

    FeatureSet prev;
    int episode = -1;
    for (const FrameEntry& e : ds.frames) {
        const GrayImage g = read_frame(dir.path / e.file);
        Screen s(g.width, g.height, proto.palette_size);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            s.pixels[i] = static_cast<std::uint8_t>(std::lround(g.data[i] * (proto.palette_size - 1)));
        const bool first = e.episode != episode;
        episode = e.episode;
        const auto r = bprost::extract(s, first ? nullptr : &prev, bcfg);
        CHECK(r.features.size() == e.features);
        prev = r.basic;
    }
}

TEST_CASE("config parsing with overrides and defaults") {
    const json j = json::parse(R"({
        "environment": {"name": "avoid_game", "seed": 4, "width": 6},
        "backend": {"kind": "neural", "weights": "w.bin"},
        "planner": {"algorithm": "rollout_iw", "node_budget": 300, "alpha": 1, "gamma": 0.95, "frame_skip": 2},
        "extractor": {"lambda": 0.8, "quant_bits": 6},
        "runs": 3, "seed": 11, "jobs": 2
    })");
    const RunConfig cfg = config_from_json(j);
    CHECK(cfg.env.name == "avoid_game");
    CHECK(cfg.env.params.at("width") == 6);
    CHECK(cfg.backend.kind == "neural");
    CHECK(cfg.backend.weights->string() == "w.bin");
    CHECK(cfg.planner.node_budget == 300);
    CHECK(cfg.planner.risk_aversion == 1.0);
    CHECK(cfg.planner.gamma == 0.95);
    CHECK(cfg.planner.frame_skip->skip == 2);
    CHECK(cfg.backend.lambda == 0.8);
    CHECK(cfg.backend.quant_bits == 6);
    CHECK(cfg.runs == 3);
    CHECK(cfg.seed == 11);
    CHECK(env_label(cfg.env) == "avoid_game/seed=4");

    const RunConfig again = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(again) == config_to_json(cfg));

    const RunConfig defaults = config_from_json(json::object());
    CHECK(defaults.planner.gamma == 0.99);
    CHECK(defaults.planner.risk_aversion == 50000.0);
    CHECK(defaults.planner.action_cap == 15000);
    CHECK(defaults.planner.time_budget.count() == 500);
    CHECK(defaults.backend.lambda == 0.9);
    CHECK_FALSE(defaults.planner.frame_skip.has_value());
}

TEST_CASE("extractor selection per backend") {
    auto env = make_environment({"grid_collect", {{"size", 8}, {"cell_pixels", 4}}});
    CHECK(make_extractor({.kind = "random"}, *env) == nullptr);
    CHECK(make_extractor({.kind = "bprost"}, *env)->space().size == bprost::count({8, 8, 4, 4, 3}).total);
    CHECK(make_extractor({.kind = "raw"}, *env)->space().size == 32 * 32 * 3);
    CHECK_THROWS_AS(make_extractor({.kind = "neural"}, *env), std::invalid_argument);
    CHECK_THROWS_AS(make_extractor({.kind = "sift"}, *env), std::invalid_argument);
    auto w = std::make_shared<const neural::EncoderWeights>(neural::fixtures::grid_detector(8, 4));
    CHECK(make_extractor({.kind = "neural"}, *env, w)->space().size == 128);
    CHECK(planner_for_backend({.kind = "random"}, {}).algorithm == Algorithm::random);
}

TEST_CASE("benchmarks are deterministic under a node budget") {
    const RunConfig cfg = small_grid();
    const auto a = run_benchmark({cfg.env}, {.kind = "bprost"}, cfg.planner, 2, 9, 1);
    const auto b = run_benchmark({cfg.env}, {.kind = "bprost"}, cfg.planner, 2, 9, 2);
    CHECK(report_to_csv(a) == report_to_csv(b));
    for (std::size_t i = 0; i < a.entries[0].runs.size(); ++i) {
        auto x = a.entries[0].runs[i], y = b.entries[0].runs[i];
        x.wall_seconds = y.wall_seconds = 0;
        CHECK(x == y);
    }
    CHECK(a.entries[0].runs[0].seed == derive_seed(9, 0));
    CHECK(a.entries[0].runs[1].seed == derive_seed(9, 1));
    CHECK_THROWS_AS(run_benchmark({cfg.env}, {.kind = "bprost"}, cfg.planner, 0, 9), std::invalid_argument);
}

TEST_CASE("aggregation equals recomputation from per-run records") {
    RunConfig cfg = small_grid();
    const auto r = run_benchmark({cfg.env, {"avoid_game", {{"seed", 2}, {"max_steps", 30}}}}, {.kind = "random"},
                                 cfg.planner, 5, 3, 3);
    REQUIRE(r.entries.size() == 2);
    for (const auto& e : r.entries) {
        double sum = 0;
        for (const auto& run : e.runs) {
            sum += run.score;
            CHECK(run.actions <= cfg.planner.action_cap);
        }
        CHECK(e.mean_score == doctest::Approx(sum / 5));
    }
}

TEST_CASE("exhaustive budget collects every gem") {
    RunConfig cfg;
    cfg.env = {"grid_collect", {{"size", 5}, {"gems", 2}, {"cell_pixels", 2}, {"seed", 6}}};
    cfg.planner.node_budget = 3000;
    const auto r = run_benchmark({cfg.env}, {.kind = "raw"}, cfg.planner, 3, 1);
    CHECK(r.entries[0].mean_score == 2.0);
}

TEST_CASE("reports round trip through JSON and write CSV rows") {
    RunConfig cfg = small_grid();
    cfg.planner.node_budget = 20;
    ScoreReport r = run_benchmark({cfg.env}, {.kind = "bprost"}, cfg.planner, 2, 4);
    r.entries[0].normalized = 12.5;
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK(report_from_json(json::parse(report_to_json(r).dump())) == r);

    const std::string csv = report_to_csv(r);
    CHECK(csv.starts_with("env,backend,seed,score,actions,mean_expanded,mean_depth\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    TempDir dir("vaeiw_report");
    write_report(r, dir.path / "out");
    CHECK(fs::exists(dir.path / "out.csv"));
    const json back = json::parse(std::ifstream(dir.path / "out.json"));
    CHECK(report_from_json(back) == r);
}
