// Command-line front end: collect, plan, report, inspect-weights, make-fixture.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "vaeiw/bprost.hpp"
#include "vaeiw/harness.hpp"
#include "vaeiw/neural.hpp"

using namespace vaeiw;
using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::vector<std::string> envs;
    std::vector<std::string> env_params;
    std::string backend;
    std::string weights;
    std::optional<std::int64_t> budget_ms;
    std::optional<std::int64_t> node_budget;
    std::optional<int> runs;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<double> gamma;
    std::optional<double> lambda;
    std::optional<int> frame_skip;
    std::optional<std::int64_t> action_cap;
    std::optional<int> jobs;
    std::string out;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config, "JSON config file");
    app->add_option("--env", o.envs, "environment name (repeatable)");
    app->add_option("--env-param", o.env_params, "environment parameter key=value (JSON value)");
    auto* budget = app->add_option("--budget-ms", o.budget_ms, "wall-clock planning budget per decision");
    auto* nodes = app->add_option("--node-budget", o.node_budget, "max new nodes per decision");
    budget->excludes(nodes);
    app->add_option("--seed", o.seed, "master seed");
    app->add_option("--alpha", o.alpha, "risk aversion factor (1 disables)");
    app->add_option("--gamma", o.gamma, "discount");
    app->add_option("--frame-skip", o.frame_skip, "frames per action (default: the environment's)");
    app->add_option("--action-cap", o.action_cap, "max executed actions per episode");
    app->add_option("--out", o.out, "output path");
}

harness::RunConfig resolve(const Overrides& o) {
    harness::RunConfig cfg = o.config.empty() ? harness::RunConfig{} : harness::load_config(o.config);
    if (!o.envs.empty()) cfg.env.name = o.envs.front();
    for (const std::string& kv : o.env_params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--env-param", "expected key=value");
        const std::string value = kv.substr(eq + 1);
        json parsed = json::parse(value, nullptr, false);
        cfg.env.params[kv.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
    }
    if (!o.backend.empty()) cfg.backend.kind = o.backend;
    if (!o.weights.empty()) cfg.backend.weights = o.weights;
    if (o.budget_ms) {
        cfg.planner.time_budget = std::chrono::milliseconds(*o.budget_ms);
        cfg.planner.node_budget.reset();
    }
    if (o.node_budget) cfg.planner.node_budget = *o.node_budget;
    if (o.runs) cfg.runs = *o.runs;
    if (o.seed) cfg.seed = *o.seed;
    if (o.alpha) cfg.planner.risk_aversion = *o.alpha;
    if (o.gamma) cfg.planner.gamma = *o.gamma;
    if (o.lambda) cfg.backend.lambda = *o.lambda;
    if (o.frame_skip) cfg.planner.frame_skip = FrameSkipConfig{*o.frame_skip};
    if (o.action_cap) cfg.planner.action_cap = *o.action_cap;
    if (o.jobs) cfg.jobs = *o.jobs;
    return cfg;
}

int cmd_collect(const Overrides& o, std::size_t frames, std::optional<int> frame_size) {
    harness::RunConfig cfg = resolve(o);
    if (frame_size) cfg.frame_size = *frame_size;
    if (o.out.empty()) throw CLI::ValidationError("--out", "collect needs an output directory");
    const auto ds = harness::collect_frames(cfg, frames, o.out);
    std::cout << "collected " << ds.count() << " frames from " << ds.env << " into " << o.out << " (train "
              << ds.train << ", validation " << ds.validation << ")\n";
    return 0;
}

int cmd_plan(const Overrides& o) {
    const harness::RunConfig cfg = resolve(o);
    std::vector<EnvConfig> envs;
    if (o.envs.size() > 1) {
        for (const std::string& name : o.envs) envs.push_back({name, cfg.env.params});
    } else {
        envs.push_back(cfg.env);
    }
    const auto report = harness::run_benchmark(envs, cfg.backend, cfg.planner, cfg.runs, cfg.seed, cfg.jobs);
    for (const auto& e : report.entries)
        std::printf("%-28s %-12s mean %.4f over %zu runs\n", e.env.c_str(), e.backend.c_str(), e.mean_score,
                    e.runs.size());
    if (!o.out.empty()) {
        harness::write_report(report, o.out);
        std::cout << "wrote " << o.out << ".csv and " << o.out << ".json\n";
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, std::optional<double> random_score,
               std::optional<double> human_score, const std::string& out) {
    harness::ScoreReport merged;
    for (const std::string& path : inputs) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open report " + path);
        auto r = harness::report_from_json(json::parse(f));
        for (auto& e : r.entries) merged.entries.push_back(std::move(e));
    }
    if (random_score.has_value() != human_score.has_value())
        throw CLI::ValidationError("--random-score/--human-score", "normalization needs both");
    std::printf("%-28s %-12s %10s %6s %12s\n", "env", "backend", "mean", "runs", "normalized");
    for (auto& e : merged.entries) {
        e.mean_score = harness::mean_score(e.runs);
        if (random_score) e.normalized = harness::normalize_score(e.mean_score, *random_score, *human_score);
        std::printf("%-28s %-12s %10.4f %6zu", e.env.c_str(), e.backend.c_str(), e.mean_score, e.runs.size());
        if (e.normalized)
            std::printf(" %11.2f%%\n", *e.normalized);
        else
            std::printf(" %12s\n", "-");
    }
    if (!out.empty()) harness::write_report(merged, out);
    return 0;
}

int cmd_inspect(const std::string& path) {
    const auto w = neural::load_weights(path);
    std::cout << "input        " << w.input.channels << "x" << w.input.height << "x" << w.input.width << "\n"
              << "model kind   " << (w.model_kind == neural::ModelKind::bernoulli ? "bernoulli" : "gaussian") << "\n"
              << "latent spec  (" << w.latent.height << ", " << w.latent.width << ", " << w.latent.channels << ")\n"
              << "features     " << w.latent.size() << " (" << w.feature_layout << " layout)\n"
              << "lambda       " << w.lambda << "\n"
              << "layers       " << w.layers.size() << "\n";
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const auto& l = w.layers[i];
        const auto& s = w.shapes[i];
        std::printf("  %3zu %-15s %-14s -> %dx%dx%d\n", i, neural::to_string(l.kind).c_str(), l.name.c_str(),
                    s.channels, s.height, s.width);
    }
    std::size_t params = 0;
    for (const auto& t : w.tensors) params += t.data.size();
    std::cout << "parameters   " << params << " in " << w.tensors.size() << " tensors\n";
    return 0;
}

int cmd_fixture(const std::string& kind, int board, int cell, const std::string& out) {
    neural::EncoderWeights w;
    if (kind == "grid")
        w = neural::fixtures::grid_detector(board, cell);
    else if (kind == "identity")
        w = neural::fixtures::identity(board * cell, board * cell);
    else if (kind == "gaussian")
        w = neural::fixtures::gaussian_passthrough(board * cell, board * cell, 1, 1.0f);
    else
        throw CLI::ValidationError("--kind", "expected grid, identity or gaussian");
    neural::save_weights(w, out);
    std::cout << "wrote " << kind << " fixture to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Width-based planning over pixel screens with B-PROST or learned features"};
    app.require_subcommand(1);

    Overrides collect_o;
    std::size_t frames = 15000;
    std::optional<int> frame_size;
    auto* collect = app.add_subcommand("collect", "collect training frames with RolloutIW(1) + B-PROST");
    add_common(collect, collect_o);
    collect->add_option("--frames", frames, "number of frames")->check(CLI::Range(2, 100000000));
    collect->add_option("--frame-size", frame_size, "stored frame height/width");

    Overrides plan_o;
    auto* plan = app.add_subcommand("plan", "run seeded planning episodes and report scores");
    add_common(plan, plan_o);
    plan->add_option("--backend", plan_o.backend, "bprost|neural|neural-quant|random|raw")
        ->check(CLI::IsMember({"bprost", "neural", "neural-quant", "random", "raw"}));
    plan->add_option("--weights", plan_o.weights, "encoder weight file");
    plan->add_option("--runs", plan_o.runs, "episodes per environment");
    plan->add_option("--lambda", plan_o.lambda, "feature threshold");
    plan->add_option("--jobs", plan_o.jobs, "parallel episodes");

    std::vector<std::string> report_in;
    std::optional<double> random_score, human_score;
    std::string report_out;
    auto* report = app.add_subcommand("report", "aggregate and normalize JSON reports");
    report->add_option("--in", report_in, "JSON report(s)")->required();
    report->add_option("--random-score", random_score, "random-play score (0%)");
    report->add_option("--human-score", human_score, "human score (100%)");
    report->add_option("--out", report_out, "write merged report to PREFIX.csv/.json");

    std::string weights_path;
    auto* inspect = app.add_subcommand("inspect-weights", "validate and describe an encoder weight file");
    inspect->add_option("path", weights_path, "weight file")->required();

    std::string fixture_kind = "grid", fixture_out;
    int board = 8, cell = 4;
    auto* fixture = app.add_subcommand("make-fixture", "write a hand-built encoder weight file");
    fixture->add_option("--kind", fixture_kind, "grid|identity|gaussian");
    fixture->add_option("--board", board, "board cells per side");
    fixture->add_option("--cell", cell, "pixels per cell");
    fixture->add_option("--out", fixture_out, "output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*collect) return cmd_collect(collect_o, frames, frame_size);
        if (*plan) return cmd_plan(plan_o);
        if (*report) return cmd_report(report_in, random_score, human_score, report_out);
        if (*inspect) return cmd_inspect(weights_path);
        if (*fixture) return cmd_fixture(fixture_kind, board, cell, fixture_out);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
