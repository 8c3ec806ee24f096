#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vaeiw/features.hpp"
#include "vaeiw/novelty.hpp"
#include "vaeiw/random.hpp"
#include "vaeiw/sim.hpp"

namespace vaeiw {

enum class Algorithm { rollout_iw, iw, random };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct PlannerConfig {
    Algorithm algorithm = Algorithm::rollout_iw;
    int width = 1;
    /// Wall-clock budget per decision point. Ignored when node_budget is set.
    std::chrono::milliseconds time_budget{500};
    /// Maximum simulator steps (new nodes) per decision point.
    std::optional<std::int64_t> node_budget;
    double gamma = 0.99;
    double risk_aversion = 50000.0;  ///< 1 disables
    std::int64_t action_cap = 15000;
    bool cache_subtree = true;
    std::optional<FrameSkipConfig> frame_skip;  ///< unset: the environment's default

    FrameSkipConfig skip_for(const Environment& env) const {
        return frame_skip ? *frame_skip : FrameSkipConfig{env.default_frame_skip()};
    }
    void validate() const;
};

/// Rollout tree node. `reward` is the raw reward of the edge entering the
/// node; risk aversion is applied during backup.
struct SearchNode {
    SimState sim;
    FeatureSet features;
    FeatureSet carry;
    int depth = 0;
    double reward = 0.0;
    double value = 0.0;
    std::vector<std::unique_ptr<SearchNode>> children;  ///< one slot per action
    bool solved = false;
    bool pruned = false;  ///< failed a novelty check

    bool terminal() const { return sim.terminal; }
    std::size_t subtree_size() const;
};

/// Risk-adjusted reward: alpha * r for r < 0, r otherwise.
double adjusted_reward(double reward, const PlannerConfig& cfg);

/// value = adj(reward) + gamma * max over present children, bottom-up over
/// the whole subtree. Returns node.value.
double backup(SearchNode& node, const PlannerConfig& cfg);

/// Keeps the subtree under `chosen`, one level shallower, with solved flags
/// cleared (terminal nodes stay solved). Throws std::invalid_argument if the
/// child is absent.
std::unique_ptr<SearchNode> partial_cache_advance(std::unique_ptr<SearchNode> tree, Action chosen);

struct PlanStats {
    std::int64_t expanded = 0;   ///< simulator steps taken this decision point
    int max_depth = 0;           ///< deepest node reached
    std::int64_t accepted = 0;   ///< new nodes that passed the novelty check
    std::int64_t rollouts = 0;
    bool root_solved = false;
};

struct PlanResult {
    Action action = 0;
    std::unique_ptr<SearchNode> tree;  ///< whole tree, values backed up
    PlanStats stats;
};

/// Anytime RolloutIW(1): random rollouts pruned by depth-indexed novelty.
class RolloutIW {
public:
    RolloutIW(const Environment& env, const FeatureExtractor& extractor, PlannerConfig cfg, std::uint64_t seed);

    /// Plans from `root`. When `cached` is given and holds the same snapshot
    /// it seeds the tree; its nodes are re-registered breadth-first in a fresh
    /// novelty table. `root_carry` is threaded into a fresh root's extraction.
    PlanResult plan(const SimState& root, std::unique_ptr<SearchNode> cached = nullptr,
                    const FeatureSet& root_carry = {});

    Rng& rng() { return rng_; }

private:
    struct Budget;
    bool rollout(SearchNode& root, NoveltyTable& table, Budget& budget, PlanStats& stats);
    std::unique_ptr<SearchNode> make_child(const SearchNode& parent, Action a);
    Action select_root_action(const SearchNode& root);

    const Environment& env_;
    const FeatureExtractor& extractor_;
    PlannerConfig cfg_;
    Rng rng_;
};

/// One generated state in breadth-first IW, identified by its action path.
struct GeneratedState {
    std::vector<Action> path;
    bool novel = false;
};

struct IwResult {
    Action action = 0;
    std::unique_ptr<SearchNode> tree;
    std::vector<GeneratedState> generated;
    PlanStats stats;
};

/// Breadth-first IW(k). Non-novel successors stay in the tree as leaves (their
/// reward counts) but are not expanded. Ties go to the lowest action id.
IwResult plan_iw(const Environment& env, const SimState& root, const FeatureExtractor& extractor,
                 const PlannerConfig& cfg);

struct StepStats {
    std::int64_t expanded = 0;
    int max_depth = 0;
};

struct EpisodeRecord {
    std::string env;
    std::string backend;
    std::uint64_t seed = 0;
    double score = 0.0;
    std::int64_t actions = 0;
    std::vector<std::int64_t> expanded;
    std::vector<int> depth;
    double wall_seconds = 0.0;

    double mean_expanded() const;
    double mean_depth() const;
    bool operator==(const EpisodeRecord&) const = default;
};

/// plan -> execute -> cache-advance until terminal or the action cap. With
/// Algorithm::random the extractor is unused and actions are uniform.
EpisodeRecord run_episode(const Environment& env, const FeatureExtractor* extractor, const PlannerConfig& cfg,
                          std::uint64_t seed, const std::string& backend_tag = "");

}  // namespace vaeiw
