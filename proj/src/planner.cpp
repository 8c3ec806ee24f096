#include "vaeiw/planner.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace vaeiw {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::rollout_iw: return "rollout_iw";
        case Algorithm::iw: return "iw";
        case Algorithm::random: return "random";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "rollout_iw" || s == "rollout") return Algorithm::rollout_iw;
    if (s == "iw" || s == "bfs") return Algorithm::iw;
    if (s == "random") return Algorithm::random;
    throw std::invalid_argument("unknown planning algorithm: " + s);
}

void PlannerConfig::validate() const {
    if (width < 1) throw std::invalid_argument("planner: width must be >= 1");
    if (algorithm == Algorithm::rollout_iw && width != 1)
        throw std::invalid_argument("planner: rollout IW supports width 1 only");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("planner: gamma must be in (0, 1]");
    if (!(risk_aversion >= 1.0)) throw std::invalid_argument("planner: risk aversion must be >= 1");
    if (node_budget ? *node_budget < 0 : time_budget.count() <= 0)
        throw std::invalid_argument("planner: budget must be positive");
    if (action_cap < 0) throw std::invalid_argument("planner: action cap must be non-negative");
    if (frame_skip && frame_skip->skip < 1) throw std::invalid_argument("planner: frame skip must be >= 1");
}

std::size_t SearchNode::subtree_size() const {
    std::size_t n = 0;
    std::vector<const SearchNode*> stack{this};
    while (!stack.empty()) {
        const SearchNode* s = stack.back();
        stack.pop_back();
        ++n;
        for (const auto& c : s->children)
            if (c) stack.push_back(c.get());
    }
    return n;
}

double adjusted_reward(double reward, const PlannerConfig& cfg) {
    return reward < 0.0 ? cfg.risk_aversion * reward : reward;
}

double backup(SearchNode& node, const PlannerConfig& cfg) {
    std::vector<std::pair<SearchNode*, bool>> stack{{&node, false}};
    while (!stack.empty()) {
        auto [n, children_done] = stack.back();
        stack.pop_back();
        if (!children_done) {
            stack.emplace_back(n, true);
            for (auto& c : n->children)
                if (c) stack.emplace_back(c.get(), false);
            continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (const auto& c : n->children) {
            if (!c) continue;
            best = std::max(best, c->value);
            any = true;
        }
        n->value = adjusted_reward(n->reward, cfg) + (any ? cfg.gamma * best : 0.0);
    }
    return node.value;
}

std::unique_ptr<SearchNode> partial_cache_advance(std::unique_ptr<SearchNode> tree, Action chosen) {
    if (!tree) throw std::invalid_argument("partial_cache_advance: empty tree");
    if (chosen < 0 || chosen >= static_cast<int>(tree->children.size()) || !tree->children[chosen])
        throw std::invalid_argument("partial_cache_advance: chosen child is absent");
    std::unique_ptr<SearchNode> kept = std::move(tree->children[chosen]);
    tree.reset();

    std::vector<SearchNode*> stack{kept.get()};
    while (!stack.empty()) {
        SearchNode* n = stack.back();
        stack.pop_back();
        n->depth -= 1;
        n->solved = n->terminal();
        n->pruned = false;
        for (auto& c : n->children)
            if (c) stack.push_back(c.get());
    }
    return kept;
}

// ---------------------------------------------------------------------------
// RolloutIW

struct RolloutIW::Budget {
    std::optional<std::int64_t> nodes_left;
    std::chrono::steady_clock::time_point deadline;

    bool exhausted() const {
        if (nodes_left) return *nodes_left <= 0;
        return std::chrono::steady_clock::now() >= deadline;
    }
    void consume() {
        if (nodes_left) --*nodes_left;
    }
};

RolloutIW::RolloutIW(const Environment& env, const FeatureExtractor& extractor, PlannerConfig cfg,
                     std::uint64_t seed)
    : env_(env), extractor_(extractor), cfg_(cfg), rng_(seed) {
    cfg_.validate();
}

std::unique_ptr<SearchNode> RolloutIW::make_child(const SearchNode& parent, Action a) {
    auto [sim, step] = env_.step(parent.sim, a, cfg_.skip_for(env_));
    auto child = std::make_unique<SearchNode>();
    Extraction ex = extractor_.extract(step.screen, parent.carry);
    child->sim = std::move(sim);
    child->features = std::move(ex.features);
    child->carry = std::move(ex.carry);
    child->depth = parent.depth + 1;
    child->reward = step.reward;
    child->children.resize(static_cast<std::size_t>(env_.action_count()));
    return child;
}

bool RolloutIW::rollout(SearchNode& root, NoveltyTable& table, Budget& budget, PlanStats& stats) {
    std::vector<SearchNode*> path{&root};
    std::vector<Action> candidates;
    SearchNode* node = &root;
    ++stats.rollouts;

    while (true) {
        if (node->terminal()) {
            node->solved = true;
            break;
        }
        candidates.clear();
        for (Action a = 0; a < static_cast<Action>(node->children.size()); ++a)
            if (!node->children[a] || !node->children[a]->solved) candidates.push_back(a);
        if (candidates.empty()) {
            node->solved = true;
            break;
        }
        const Action a = candidates[uniform_index(rng_, candidates.size())];

        if (!node->children[a]) {
            if (budget.exhausted()) return false;
            budget.consume();
            ++stats.expanded;
            node->children[a] = make_child(*node, a);
            SearchNode* child = node->children[a].get();
            path.push_back(child);
            stats.max_depth = std::max(stats.max_depth, child->depth);
            if (!table.novel_new(child->features, child->depth)) {
                child->pruned = child->solved = true;
                break;
            }
            table.update(child->features, child->depth);
            ++stats.accepted;
            if (child->terminal()) {
                child->solved = true;
                break;
            }
            node = child;
        } else {
            SearchNode* child = node->children[a].get();
            path.push_back(child);
            stats.max_depth = std::max(stats.max_depth, child->depth);
            if (child->terminal()) {
                child->solved = true;
                break;
            }
            if (!table.novel_cached(child->features, child->depth)) {
                child->pruned = child->solved = true;
                break;
            }
            table.update(child->features, child->depth);
            node = child;
        }
    }

    // A node is solved once every action slot holds a solved child.
    for (auto it = path.rbegin() + 1; it != path.rend(); ++it) {
        SearchNode* n = *it;
        const bool all = std::all_of(n->children.begin(), n->children.end(),
                                     [](const auto& c) { return c && c->solved; });
        if (!all) break;
        n->solved = true;
    }
    return true;
}

Action RolloutIW::select_root_action(const SearchNode& root) {
    std::vector<Action> best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (Action a = 0; a < static_cast<Action>(root.children.size()); ++a) {
        const auto& c = root.children[a];
        if (!c) continue;
        if (c->value > best_value) {
            best_value = c->value;
            best.assign(1, a);
        } else if (c->value == best_value) {
            best.push_back(a);
        }
    }
    if (best.empty()) return static_cast<Action>(uniform_index(rng_, static_cast<std::uint64_t>(env_.action_count())));
    return best[uniform_index(rng_, best.size())];
}

PlanResult RolloutIW::plan(const SimState& root, std::unique_ptr<SearchNode> cached, const FeatureSet& root_carry) {
    if (root.terminal) throw std::invalid_argument("cannot plan from a terminal state");

    std::unique_ptr<SearchNode> tree;
    if (cached && cached->sim == root && cached->depth == 0) {
        tree = std::move(cached);
    } else {
        tree = std::make_unique<SearchNode>();
        Extraction ex = extractor_.extract(env_.render(root), root_carry);
        tree->sim = root;
        tree->features = std::move(ex.features);
        tree->carry = std::move(ex.carry);
        tree->children.resize(static_cast<std::size_t>(env_.action_count()));
    }

    NoveltyTable table(extractor_.space());
    std::deque<const SearchNode*> queue{tree.get()};
    while (!queue.empty()) {
        const SearchNode* n = queue.front();
        queue.pop_front();
        table.update(n->features, n->depth);
        for (const auto& c : n->children)
            if (c) queue.push_back(c.get());
    }

    Budget budget;
    if (cfg_.node_budget)
        budget.nodes_left = *cfg_.node_budget;
    else
        budget.deadline = std::chrono::steady_clock::now() + cfg_.time_budget;

    PlanStats stats;
    while (!tree->solved)
        if (!rollout(*tree, table, budget, stats)) break;
    stats.root_solved = tree->solved;

    backup(*tree, cfg_);
    PlanResult result;
    result.action = select_root_action(*tree);
    result.tree = std::move(tree);
    result.stats = stats;
    return result;
}

// ---------------------------------------------------------------------------
// Breadth-first IW(k)

IwResult plan_iw(const Environment& env, const SimState& root, const FeatureExtractor& extractor,
                 const PlannerConfig& cfg) {
    cfg.validate();
    if (root.terminal) throw std::invalid_argument("cannot plan from a terminal state");

    const auto deadline = std::chrono::steady_clock::now() + cfg.time_budget;
    std::int64_t nodes_left = cfg.node_budget.value_or(0);
    auto exhausted = [&] {
        return cfg.node_budget ? nodes_left <= 0 : std::chrono::steady_clock::now() >= deadline;
    };
    const auto actions = static_cast<std::size_t>(env.action_count());

    IwResult result;
    result.tree = std::make_unique<SearchNode>();
    SearchNode& top = *result.tree;
    top.sim = root;
    Extraction ex = extractor.extract(env.render(root), {});
    top.features = std::move(ex.features);
    top.carry = std::move(ex.carry);
    top.children.resize(actions);

    TupleTable seen(extractor.space(), cfg.width);
    seen.insert(top.features);

    std::unordered_map<const SearchNode*, std::vector<Action>> paths{{&top, {}}};
    std::deque<SearchNode*> queue{&top};
    bool stop = false;
    while (!queue.empty() && !stop) {
        SearchNode* n = queue.front();
        queue.pop_front();
        if (n->terminal()) continue;
        for (std::size_t a = 0; a < actions; ++a) {
            if (exhausted()) {
                stop = true;
                break;
            }
            --nodes_left;
            auto [sim, step] = env.step(n->sim, static_cast<Action>(a), cfg.skip_for(env));
            auto child = std::make_unique<SearchNode>();
            Extraction cx = extractor.extract(step.screen, n->carry);
            child->sim = std::move(sim);
            child->features = std::move(cx.features);
            child->carry = std::move(cx.carry);
            child->depth = n->depth + 1;
            child->reward = step.reward;
            child->children.resize(actions);
            ++result.stats.expanded;
            result.stats.max_depth = std::max(result.stats.max_depth, child->depth);

            std::vector<Action> path = paths.at(n);
            path.push_back(static_cast<Action>(a));
            const bool novel = seen.novel(child->features);
            if (novel) {
                seen.insert(child->features);
                ++result.stats.accepted;
                paths.emplace(child.get(), path);
                if (!child->terminal()) queue.push_back(child.get());
            } else {
                child->pruned = true;
            }
            result.generated.push_back({std::move(path), novel});
            n->children[a] = std::move(child);
        }
    }
    result.stats.root_solved = queue.empty() && !stop;

    backup(top, cfg);
    result.action = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < actions; ++a)
        if (top.children[a] && top.children[a]->value > best) {
            best = top.children[a]->value;
            result.action = static_cast<Action>(a);
        }
    return result;
}

// ---------------------------------------------------------------------------
// Episodes

double EpisodeRecord::mean_expanded() const {
    if (expanded.empty()) return 0.0;
    return static_cast<double>(std::accumulate(expanded.begin(), expanded.end(), std::int64_t{0})) /
           static_cast<double>(expanded.size());
}

double EpisodeRecord::mean_depth() const {
    if (depth.empty()) return 0.0;
    return static_cast<double>(std::accumulate(depth.begin(), depth.end(), std::int64_t{0})) /
           static_cast<double>(depth.size());
}

EpisodeRecord run_episode(const Environment& env, const FeatureExtractor* extractor, const PlannerConfig& cfg,
                          std::uint64_t seed, const std::string& backend_tag) {
    cfg.validate();
    if (cfg.algorithm != Algorithm::random && !extractor)
        throw std::invalid_argument("run_episode: planning needs a feature extractor");
    const auto start = std::chrono::steady_clock::now();

    EpisodeRecord rec;
    rec.env = env.name();
    rec.backend = backend_tag.empty() ? to_string(cfg.algorithm) : backend_tag;
    rec.seed = seed;

    SimState state = env.initial_state();
    Rng rng(seed);
    std::optional<RolloutIW> rollout;
    if (cfg.algorithm == Algorithm::rollout_iw) rollout.emplace(env, *extractor, cfg, seed);
    std::unique_ptr<SearchNode> cache;
    FeatureSet carry;

    while (!state.terminal && rec.actions < cfg.action_cap) {
        Action action = 0;
        StepStats step_stats;
        switch (cfg.algorithm) {
            case Algorithm::rollout_iw: {
                PlanResult r = rollout->plan(state, std::move(cache), carry);
                action = r.action;
                step_stats = {r.stats.expanded, r.stats.max_depth};
                carry = r.tree->carry;
                if (cfg.cache_subtree && r.tree->children[action])
                    cache = partial_cache_advance(std::move(r.tree), action);
                break;
            }
            case Algorithm::iw: {
                IwResult r = plan_iw(env, state, *extractor, cfg);
                action = r.action;
                step_stats = {r.stats.expanded, r.stats.max_depth};
                break;
            }
            case Algorithm::random:
                action = static_cast<Action>(uniform_index(rng, static_cast<std::uint64_t>(env.action_count())));
                break;
        }
        auto [next, step] = env.step(state, action, cfg.skip_for(env));
        state = std::move(next);
        ++rec.actions;
        rec.expanded.push_back(step_stats.expanded);
        rec.depth.push_back(step_stats.max_depth);
    }
    rec.score = state.episode_score;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace vaeiw
