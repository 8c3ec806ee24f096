#include <random>
#include <stdexcept>

#include "vaeiw/sim.hpp"

namespace vaeiw {

namespace {
// payload layout: [position, frames]
constexpr std::size_t kPos = 0;
constexpr std::size_t kFrames = 1;
}  // namespace

ChainConfig ChainConfig::from_json(const nlohmann::json& params) {
    ChainConfig c;
    c.length = params.value("length", c.length);
    c.actions = params.value("actions", c.actions);
    c.reward_position = params.value("reward_position", c.reward_position);
    c.cell_pixels = params.value("cell_pixels", c.cell_pixels);
    c.max_steps = params.value("max_steps", c.max_steps);
    c.seed = params.value("seed", c.seed);
    return c;
}

Chain::Chain(ChainConfig config) : config_(config) {
    if (config_.length < 1) throw std::invalid_argument("chain: length must be >= 1");
    if (config_.actions < 1) throw std::invalid_argument("chain: actions must be >= 1");
    if (config_.reward_position < 1 || config_.reward_position > config_.length)
        throw std::invalid_argument("chain: reward_position must be in [1, length]");
    if (config_.cell_pixels < 1) throw std::invalid_argument("chain: cell_pixels must be >= 1");
    if (config_.max_steps < 1) throw std::invalid_argument("chain: max_steps must be >= 1");
    std::mt19937 gen(config_.seed);
    for (int i = 0; i < config_.length; ++i)
        solution_.push_back(static_cast<Action>(gen() % static_cast<std::uint32_t>(config_.actions)));
}

SimState Chain::initial_state() const {
    SimState s;
    s.payload = {0, 0};
    return s;
}

Screen Chain::render(const SimState& state) const {
    const int px = config_.cell_pixels;
    Screen screen((config_.length + 1) * px, px, 2);
    const int pos = state.payload[kPos];
    for (int y = 0; y < px; ++y)
        for (int x = pos * px; x < (pos + 1) * px; ++x) screen.set(x, y, 1);
    return screen;
}

double Chain::advance_frame(SimState& state, Action action) const {
    if (action < 0 || action >= config_.actions) throw std::out_of_range("chain: action out of range");
    auto& p = state.payload;
    p[kFrames] += 1;
    double reward = 0.0;
    if (action == solution_[p[kPos]]) {
        p[kPos] += 1;
        if (p[kPos] == config_.reward_position) reward = 1.0;
    } else {
        p[kPos] = 0;
    }
    state.terminal = p[kPos] == config_.length || p[kFrames] >= config_.max_steps;
    return reward;
}

}  // namespace vaeiw
