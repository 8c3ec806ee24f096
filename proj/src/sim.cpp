#include "vaeiw/sim.hpp"

#include <stdexcept>

namespace vaeiw {

Screen::Screen(int w, int h, int palette, std::uint8_t fill)
    : width(w), height(h), palette_size(palette) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("screen dimensions must be positive");
    if (palette < 1 || palette > 256) throw std::invalid_argument("palette size must be in [1, 256]");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

void Screen::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("screen dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("screen pixel count does not match width x height");
    for (auto p : pixels)
        if (p >= palette_size) throw std::invalid_argument("pixel value outside palette");
}

std::pair<SimState, Screen> Environment::reset() const {
    SimState s = initial_state();
    Screen screen = render(s);
    return {std::move(s), std::move(screen)};
}

std::pair<SimState, StepResult> Environment::step(const SimState& state, Action action,
                                                  FrameSkipConfig cfg) const {
    if (state.terminal) throw std::logic_error("cannot step a terminal state");
    if (action < 0 || action >= action_count()) throw std::out_of_range("action out of range");
    if (cfg.skip < 1) throw std::invalid_argument("frame skip must be >= 1");

    SimState next = state;
    double reward = 0.0;
    for (int f = 0; f < cfg.skip && !next.terminal; ++f) reward += advance_frame(next, action);
    next.episode_score += reward;

    StepResult result{render(next), reward, next.terminal};
    return {std::move(next), std::move(result)};
}

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
    if (config.name == "grid_collect")
        return std::make_unique<GridCollect>(GridCollectConfig::from_json(config.params));
    if (config.name == "avoid_game")
        return std::make_unique<AvoidGame>(AvoidGameConfig::from_json(config.params));
    if (config.name == "chain") return std::make_unique<Chain>(ChainConfig::from_json(config.params));
    throw std::invalid_argument("unknown environment: " + config.name);
}

std::vector<std::string> environment_names() { return {"grid_collect", "avoid_game", "chain"}; }

}  // namespace vaeiw
