#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace vaeiw {

using Action = int;

/// Rectangular grid of palette-indexed pixels, stored row-major.
struct Screen {
    int width = 0;
    int height = 0;
    int palette_size = 1;
    std::vector<std::uint8_t> pixels;

    Screen() = default;
    Screen(int w, int h, int palette, std::uint8_t fill = 0);

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t c) { pixels[static_cast<std::size_t>(y) * width + x] = c; }

    /// Throws std::invalid_argument if the size or palette invariants are broken.
    void validate() const;

    bool operator==(const Screen&) const = default;
};

/// Snapshot of an environment. The payload is environment-defined; copying a
/// SimState is a clone and the copy is fully independent.
struct SimState {
    std::vector<std::int32_t> payload;
    bool terminal = false;
    double episode_score = 0.0;

    bool operator==(const SimState&) const = default;
};

struct StepResult {
    Screen screen;
    double reward = 0.0;
    bool terminal = false;
};

struct FrameSkipConfig {
    int skip = 15;
};

/// Name plus environment-specific parameters (as found in the harness config).
struct EnvConfig {
    std::string name;
    nlohmann::json params = nlohmann::json::object();
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual int action_count() const = 0;
    virtual SimState initial_state() const = 0;
    virtual Screen render(const SimState& state) const = 0;

    /// Natural tile edge in pixels (one board cell); used as the default
    /// B-PROST tiling.
    virtual int cell_pixels() const = 0;

    /// Frames per decision when the planner does not set one. Desk
    /// environments move one cell per frame and use 1.
    virtual int default_frame_skip() const { return FrameSkipConfig{}.skip; }

    /// Reward for one frame. Must not be called on a terminal state.
    virtual double advance_frame(SimState& state, Action action) const = 0;

    std::pair<SimState, Screen> reset() const;

    /// Repeats `action` for `cfg.skip` frames (stopping early on terminal)
    /// and sums the rewards. The input snapshot is left untouched.
    std::pair<SimState, StepResult> step(const SimState& state, Action action,
                                         FrameSkipConfig cfg = {}) const;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

/// Names accepted by make_environment.
std::vector<std::string> environment_names();

// Concrete environments. Parameters are documented on each config struct.

struct GridCollectConfig {
    int size = 8;          ///< board is size x size cells
    int gems = 3;
    int cell_pixels = 4;
    int move_cap = 0;      ///< frames before the episode ends; 0 means 4*size*size
    std::uint32_t layout_seed = 0;
    std::vector<std::pair<int, int>> gem_cells;  ///< explicit (x, y); overrides layout_seed

    static GridCollectConfig from_json(const nlohmann::json& params);
};

/// Agent starts in the top-left cell and collects gems (+1 each). Actions are
/// UP, DOWN, LEFT, RIGHT; walking into a wall leaves the agent in place.
/// Colors: 0 floor, 1 agent, 2 gem.
class GridCollect final : public Environment {
public:
    enum : Action { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

    explicit GridCollect(GridCollectConfig config);

    std::string name() const override { return "grid_collect"; }
    int action_count() const override { return 4; }
    SimState initial_state() const override;
    Screen render(const SimState& state) const override;
    int cell_pixels() const override { return config_.cell_pixels; }
    int default_frame_skip() const override { return 1; }
    double advance_frame(SimState& state, Action action) const override;

    const GridCollectConfig& config() const { return config_; }
    const std::vector<std::pair<int, int>>& gem_cells() const { return gems_; }

private:
    GridCollectConfig config_;
    std::vector<std::pair<int, int>> gems_;
};

struct AvoidGameConfig {
    int width = 8;
    int height = 8;
    int cell_pixels = 4;
    int max_steps = 100;
    double hazard_density = 0.25;
    std::uint64_t seed = 0;

    static AvoidGameConfig from_json(const nlohmann::json& params);
};

/// Hazards scroll down one row per frame; the agent lives on the bottom row.
/// Actions are LEFT, STAY, RIGHT. Each survived frame pays +0.1, a collision
/// pays -1 and ends the episode. Colors: 0 floor, 1 agent, 2 hazard.
class AvoidGame final : public Environment {
public:
    enum : Action { kLeft = 0, kStay = 1, kRight = 2 };

    explicit AvoidGame(AvoidGameConfig config);

    std::string name() const override { return "avoid_game"; }
    int action_count() const override { return 3; }
    SimState initial_state() const override;
    Screen render(const SimState& state) const override;
    int cell_pixels() const override { return config_.cell_pixels; }
    int default_frame_skip() const override { return 1; }
    double advance_frame(SimState& state, Action action) const override;

    /// Hazard bitmask of the row spawned at frame t (bit x = column x).
    std::uint32_t spawn_row(std::int64_t t) const;

private:
    AvoidGameConfig config_;
};

struct ChainConfig {
    int length = 5;
    int actions = 4;
    int reward_position = 3;
    int cell_pixels = 2;
    int max_steps = 50;
    std::uint32_t seed = 0;

    static ChainConfig from_json(const nlohmann::json& params);
};

/// A corridor where exactly one action per position moves forward; any other
/// action sends the agent back to the start. Reaching `reward_position` pays
/// +1, reaching the end is terminal. Colors: 0 floor, 1 agent.
class Chain final : public Environment {
public:
    explicit Chain(ChainConfig config);

    std::string name() const override { return "chain"; }
    int action_count() const override { return config_.actions; }
    SimState initial_state() const override;
    Screen render(const SimState& state) const override;
    int cell_pixels() const override { return config_.cell_pixels; }
    int default_frame_skip() const override { return 1; }
    double advance_frame(SimState& state, Action action) const override;

    /// The forward action at each position.
    const std::vector<Action>& solution() const { return solution_; }

private:
    ChainConfig config_;
    std::vector<Action> solution_;
};

}  // namespace vaeiw
