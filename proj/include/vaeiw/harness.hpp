#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vaeiw/features.hpp"
#include "vaeiw/image.hpp"
#include "vaeiw/neural.hpp"
#include "vaeiw/planner.hpp"
#include "vaeiw/sim.hpp"

namespace vaeiw::harness {

/// Feature backend selection. kind is one of bprost, neural, neural-quant,
/// raw, random.
struct BackendConfig {
    std::string kind = "bprost";
    std::optional<std::filesystem::path> weights;
    int tile_w = 0;  ///< 0: the environment's cell size
    int tile_h = 0;
    double lambda = 0.9;
    int quant_bits = 4;
};

struct RunConfig {
    EnvConfig env{"grid_collect", nlohmann::json::object()};
    BackendConfig backend;
    PlannerConfig planner;
    int runs = 10;
    std::uint64_t seed = 0;
    int jobs = 1;
    int frame_size = 32;  ///< stored frame height and width
};

/// Reads the sections environment / backend / planner / extractor plus the
/// top-level runs, seed, jobs and frame_size keys. Missing keys keep defaults.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

/// Builds the extractor for `backend` on `env`'s screens. Returns nullptr for
/// the random backend. Neural kinds use `weights` when given, else load the
/// configured file.
std::unique_ptr<FeatureExtractor> make_extractor(const BackendConfig& backend, const Environment& env,
                                                 std::shared_ptr<const neural::EncoderWeights> weights = nullptr);

/// Planner settings with the algorithm implied by the backend (random backend
/// plays uniformly at random).
PlannerConfig planner_for_backend(const BackendConfig& backend, PlannerConfig planner);

/// Human-readable env label: params.label if present, else the name with the
/// layout seed appended when one is configured.
std::string env_label(const EnvConfig& env);

// ---------------------------------------------------------------------------
// Frame datasets

/// (train, validation) with validation = max(1, round(5% of n)).
std::pair<std::size_t, std::size_t> split_sizes(std::size_t n);

struct FrameEntry {
    std::string file;
    int episode = 0;
    std::size_t features = 0;  ///< B-PROST feature count the planner saw at this decision point
};

struct FrameDataset {
    std::filesystem::path dir;
    std::string env;
    int height = 0;
    int width = 0;
    std::size_t train = 0;
    std::size_t validation = 0;
    std::vector<FrameEntry> frames;

    std::size_t count() const { return frames.size(); }
};

/// Frame file: u32 height, u32 width, then height*width float32, little-endian.
void write_frame(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_frame(const std::filesystem::path& path);

/// Runs RolloutIW(1) with B-PROST features (whatever cfg.backend says) and
/// stores the preprocessed screen at every executed decision point until
/// n_frames are saved, then writes index.json with the 95/5 split.
FrameDataset collect_frames(const RunConfig& cfg, std::size_t n_frames, const std::filesystem::path& out_dir);

/// Loads index.json and checks that the indexed frame files are exactly the
/// ones present.
FrameDataset read_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Benchmarks and reports

struct EnvScore {
    std::string env;
    std::string backend;
    double mean_score = 0.0;
    std::vector<EpisodeRecord> runs;
    std::optional<double> normalized;

    bool operator==(const EnvScore&) const = default;
};

struct ScoreReport {
    std::vector<EnvScore> entries;
    bool operator==(const ScoreReport&) const = default;
};

/// R seeded episodes per environment; run i uses derive_seed(seed, i).
/// Deterministic given the seed when the planner uses a node budget.
ScoreReport run_benchmark(const std::vector<EnvConfig>& envs, const BackendConfig& backend,
                          const PlannerConfig& planner, int runs, std::uint64_t seed, int jobs = 1);

double mean_score(const std::vector<EpisodeRecord>& runs);

/// 100 * (score - random) / (human - random).
double normalize_score(double score, double random_score, double human_score);

nlohmann::json report_to_json(const ScoreReport& report);
ScoreReport report_from_json(const nlohmann::json& j);
/// Columns env,backend,seed,score,actions,mean_expanded,mean_depth; one row per run.
std::string report_to_csv(const ScoreReport& report);
nlohmann::json episode_to_json(const EpisodeRecord& rec);
EpisodeRecord episode_from_json(const nlohmann::json& j);

void write_report(const ScoreReport& report, const std::filesystem::path& prefix);

}  // namespace vaeiw::harness
