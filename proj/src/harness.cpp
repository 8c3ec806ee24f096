#include "vaeiw/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "vaeiw/bprost.hpp"
#include "vaeiw/random.hpp"

namespace vaeiw::harness {

using nlohmann::json;

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("environment")) {
        json env = j.at("environment");
        cfg.env.name = env.value("name", cfg.env.name);
        env.erase("name");
        cfg.env.params = env;
    }
    if (j.contains("backend")) {
        const json& b = j.at("backend");
        cfg.backend.kind = b.value("kind", cfg.backend.kind);
        if (b.contains("weights") && !b.at("weights").is_null())
            cfg.backend.weights = b.at("weights").get<std::string>();
    }
    if (j.contains("extractor")) {
        const json& e = j.at("extractor");
        cfg.backend.lambda = e.value("lambda", cfg.backend.lambda);
        cfg.backend.quant_bits = e.value("quant_bits", cfg.backend.quant_bits);
        cfg.backend.tile_w = e.value("tile_w", cfg.backend.tile_w);
        cfg.backend.tile_h = e.value("tile_h", cfg.backend.tile_h);
    }
    if (j.contains("planner")) {
        const json& p = j.at("planner");
        PlannerConfig& pc = cfg.planner;
        if (p.contains("algorithm")) pc.algorithm = algorithm_from_string(p.at("algorithm").get<std::string>());
        pc.width = p.value("width", pc.width);
        if (p.contains("budget_ms")) pc.time_budget = std::chrono::milliseconds(p.at("budget_ms").get<std::int64_t>());
        if (p.contains("node_budget") && !p.at("node_budget").is_null())
            pc.node_budget = p.at("node_budget").get<std::int64_t>();
        pc.gamma = p.value("gamma", pc.gamma);
        pc.risk_aversion = p.value("alpha", pc.risk_aversion);
        pc.action_cap = p.value("action_cap", pc.action_cap);
        pc.cache_subtree = p.value("cache_subtree", pc.cache_subtree);
        if (p.contains("frame_skip") && !p.at("frame_skip").is_null())
            pc.frame_skip = FrameSkipConfig{p.at("frame_skip").get<int>()};
    }
    cfg.runs = j.value("runs", cfg.runs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.frame_size = j.value("frame_size", cfg.frame_size);
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json env = cfg.env.params;
    env["name"] = cfg.env.name;
    const PlannerConfig& p = cfg.planner;
    json planner{{"algorithm", to_string(p.algorithm)},
                 {"width", p.width},
                 {"budget_ms", p.time_budget.count()},
                 {"node_budget", p.node_budget ? json(*p.node_budget) : json(nullptr)},
                 {"gamma", p.gamma},
                 {"alpha", p.risk_aversion},
                 {"action_cap", p.action_cap},
                 {"cache_subtree", p.cache_subtree},
                 {"frame_skip", p.frame_skip ? json(p.frame_skip->skip) : json(nullptr)}};
    json backend{{"kind", cfg.backend.kind}};
    if (cfg.backend.weights) backend["weights"] = cfg.backend.weights->string();
    return {{"environment", env},
            {"backend", backend},
            {"planner", planner},
            {"extractor",
             {{"lambda", cfg.backend.lambda},
              {"quant_bits", cfg.backend.quant_bits},
              {"tile_w", cfg.backend.tile_w},
              {"tile_h", cfg.backend.tile_h}}},
            {"runs", cfg.runs},
            {"seed", cfg.seed},
            {"jobs", cfg.jobs},
            {"frame_size", cfg.frame_size}};
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    return config_from_json(json::parse(f));
}

std::unique_ptr<FeatureExtractor> make_extractor(const BackendConfig& backend, const Environment& env,
                                                 std::shared_ptr<const neural::EncoderWeights> weights) {
    const std::string& kind = backend.kind;
    if (kind == "random") return nullptr;
    const Screen screen = env.render(env.initial_state());
    if (kind == "raw") return std::make_unique<RawPixelExtractor>(screen.width, screen.height, screen.palette_size);
    if (kind == "bprost") {
        const int tw = backend.tile_w > 0 ? backend.tile_w : env.cell_pixels();
        const int th = backend.tile_h > 0 ? backend.tile_h : env.cell_pixels();
        return std::make_unique<bprost::Extractor>(bprost::Config::for_screen(screen, tw, th));
    }
    if (kind == "neural" || kind == "neural-quant") {
        if (!weights) {
            if (!backend.weights) throw std::invalid_argument("backend " + kind + " needs --weights");
            weights = std::make_shared<const neural::EncoderWeights>(neural::load_weights(*backend.weights));
        }
        if (kind == "neural") return std::make_unique<neural::ThresholdExtractor>(weights, backend.lambda);
        return std::make_unique<neural::QuantizedExtractor>(weights, backend.quant_bits);
    }
    throw std::invalid_argument("unknown backend: " + kind);
}

PlannerConfig planner_for_backend(const BackendConfig& backend, PlannerConfig planner) {
    if (backend.kind == "random") planner.algorithm = Algorithm::random;
    return planner;
}

std::string env_label(const EnvConfig& env) {
    if (env.params.contains("label")) return env.params.at("label").get<std::string>();
    if (env.params.contains("seed")) return env.name + "/seed=" + env.params.at("seed").dump();
    return env.name;
}

// ---------------------------------------------------------------------------
// Frame datasets

std::pair<std::size_t, std::size_t> split_sizes(std::size_t n) {
    if (n < 2) throw std::invalid_argument("a dataset needs at least 2 frames to split");
    const std::size_t validation = std::max<std::size_t>(1, (n * 5 + 50) / 100);
    return {n - validation, validation};
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("frame file truncated");
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06zu.f32", i);
    return buf;
}

bool is_frame_file(const std::filesystem::path& p) {
    const std::string name = p.filename().string();
    return name.starts_with("frame_") && p.extension() == ".f32";
}

}  // namespace

void write_frame(const std::filesystem::path& path, const GrayImage& image) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write frame " + path.string());
    put_u32(f, static_cast<std::uint32_t>(image.height));
    put_u32(f, static_cast<std::uint32_t>(image.width));
    for (float v : image.data) put_u32(f, std::bit_cast<std::uint32_t>(v));
    if (!f) throw std::runtime_error("failed writing frame " + path.string());
}

GrayImage read_frame(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open frame " + path.string());
    GrayImage img;
    img.height = static_cast<int>(get_u32(f));
    img.width = static_cast<int>(get_u32(f));
    img.data.resize(static_cast<std::size_t>(img.height) * img.width);
    for (float& v : img.data) v = std::bit_cast<float>(get_u32(f));
    if (f.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in frame " + path.string());
    return img;
}

FrameDataset collect_frames(const RunConfig& cfg, std::size_t n_frames, const std::filesystem::path& out_dir) {
    const auto [train, validation] = split_sizes(n_frames);
    std::filesystem::create_directories(out_dir);

    auto env = make_environment(cfg.env);
    BackendConfig bprost_backend = cfg.backend;
    bprost_backend.kind = "bprost";
    auto extractor = make_extractor(bprost_backend, *env);
    PlannerConfig planner = cfg.planner;
    planner.algorithm = Algorithm::rollout_iw;
    planner.width = 1;

    FrameDataset ds;
    ds.dir = out_dir;
    ds.env = env_label(cfg.env);
    ds.height = ds.width = cfg.frame_size;
    ds.train = train;
    ds.validation = validation;

    for (int episode = 0; ds.frames.size() < n_frames; ++episode) {
        RolloutIW rollout(*env, *extractor, planner, derive_seed(cfg.seed, static_cast<std::uint64_t>(episode)));
        SimState state = env->initial_state();
        std::unique_ptr<SearchNode> cache;
        FeatureSet carry;
        std::int64_t actions = 0;
        while (!state.terminal && actions < planner.action_cap && ds.frames.size() < n_frames) {
            PlanResult r = rollout.plan(state, std::move(cache), carry);
            const std::string name = frame_name(ds.frames.size());
            write_frame(out_dir / name, preprocess(env->render(state), cfg.frame_size, cfg.frame_size));
            ds.frames.push_back({name, episode, r.tree->features.size()});

            carry = r.tree->carry;
            if (planner.cache_subtree && r.tree->children[r.action])
                cache = partial_cache_advance(std::move(r.tree), r.action);
            state = env->step(state, r.action, planner.skip_for(*env)).first;
            ++actions;
        }
    }

    json frames = json::array();
    for (const FrameEntry& e : ds.frames)
        frames.push_back({{"file", e.file}, {"episode", e.episode}, {"features", e.features}});
    json index{{"count", ds.count()},
               {"height", ds.height},
               {"width", ds.width},
               {"env", ds.env},
               {"split", {{"train", ds.train}, {"validation", ds.validation}}},
               {"frames", frames}};
    std::ofstream f(out_dir / "index.json");
    if (!f) throw std::runtime_error("cannot write dataset index in " + out_dir.string());
    f << index.dump(2) << '\n';
    return ds;
}

FrameDataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "index.json");
    if (!f) throw std::runtime_error("no index.json in " + dir.string());
    const json index = json::parse(f);

    FrameDataset ds;
    ds.dir = dir;
    ds.env = index.at("env").get<std::string>();
    ds.height = index.at("height").get<int>();
    ds.width = index.at("width").get<int>();
    ds.train = index.at("split").at("train").get<std::size_t>();
    ds.validation = index.at("split").at("validation").get<std::size_t>();
    for (const json& e : index.at("frames"))
        ds.frames.push_back({e.at("file").get<std::string>(), e.value("episode", 0), e.value("features", std::size_t{0})});

    if (index.at("count").get<std::size_t>() != ds.count())
        throw std::runtime_error("dataset index count does not match its frame list");
    if (ds.train + ds.validation != ds.count()) throw std::runtime_error("dataset split does not cover all frames");
    std::size_t present = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && is_frame_file(entry.path())) ++present;
    if (present != ds.count())
        throw std::runtime_error("dataset index lists " + std::to_string(ds.count()) + " frames but " +
                                 std::to_string(present) + " are present");
    for (const FrameEntry& e : ds.frames)
        if (!std::filesystem::exists(dir / e.file)) throw std::runtime_error("missing frame file " + e.file);
    return ds;
}

// ---------------------------------------------------------------------------
// Benchmarks

ScoreReport run_benchmark(const std::vector<EnvConfig>& envs, const BackendConfig& backend,
                          const PlannerConfig& planner_in, int runs, std::uint64_t seed, int jobs) {
    if (runs < 1) throw std::invalid_argument("benchmark needs at least one run");
    const PlannerConfig planner = planner_for_backend(backend, planner_in);
    planner.validate();

    std::shared_ptr<const neural::EncoderWeights> weights;
    if ((backend.kind == "neural" || backend.kind == "neural-quant") && backend.weights)
        weights = std::make_shared<const neural::EncoderWeights>(neural::load_weights(*backend.weights));

    struct Job {
        std::size_t env;
        int run;
    };
    std::vector<Job> queue;
    for (std::size_t e = 0; e < envs.size(); ++e)
        for (int r = 0; r < runs; ++r) queue.push_back({e, r});

    ScoreReport report;
    for (const EnvConfig& env : envs) {
        EnvScore s;
        s.env = env_label(env);
        s.backend = backend.kind;
        s.runs.resize(static_cast<std::size_t>(runs));
        report.entries.push_back(std::move(s));
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < queue.size(); i = next++) {
            try {
                const Job job = queue[i];
                auto env = make_environment(envs[job.env]);
                auto extractor = make_extractor(backend, *env, weights);
                EpisodeRecord rec = run_episode(*env, extractor.get(), planner,
                                                derive_seed(seed, static_cast<std::uint64_t>(job.run)), backend.kind);
                rec.env = report.entries[job.env].env;
                report.entries[job.env].runs[static_cast<std::size_t>(job.run)] = std::move(rec);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int threads = std::clamp(jobs, 1, static_cast<int>(queue.size()));
    {
        std::vector<std::jthread> pool;
        for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    for (EnvScore& s : report.entries) s.mean_score = mean_score(s.runs);
    return report;
}

}  // namespace vaeiw::harness
