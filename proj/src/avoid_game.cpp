#include <stdexcept>

#include "vaeiw/random.hpp"
#include "vaeiw/sim.hpp"

namespace vaeiw {

namespace {
// payload layout: [agent_x, frame, row_0 (top) .. row_{height-1} (bottom)]
constexpr std::size_t kAgent = 0;
constexpr std::size_t kFrame = 1;
constexpr std::size_t kRows = 2;
}  // namespace

AvoidGameConfig AvoidGameConfig::from_json(const nlohmann::json& params) {
    AvoidGameConfig c;
    c.width = params.value("width", c.width);
    c.height = params.value("height", c.height);
    c.cell_pixels = params.value("cell_pixels", c.cell_pixels);
    c.max_steps = params.value("max_steps", c.max_steps);
    c.hazard_density = params.value("hazard_density", c.hazard_density);
    c.seed = params.value("seed", c.seed);
    return c;
}

AvoidGame::AvoidGame(AvoidGameConfig config) : config_(config) {
    if (config_.width < 2 || config_.width > 31) throw std::invalid_argument("avoid_game: width must be in [2, 31]");
    if (config_.height < 2) throw std::invalid_argument("avoid_game: height must be >= 2");
    if (config_.cell_pixels < 1) throw std::invalid_argument("avoid_game: cell_pixels must be >= 1");
    if (config_.max_steps < 1) throw std::invalid_argument("avoid_game: max_steps must be >= 1");
    if (config_.hazard_density < 0.0 || config_.hazard_density > 1.0)
        throw std::invalid_argument("avoid_game: hazard_density must be in [0, 1]");
}

std::uint32_t AvoidGame::spawn_row(std::int64_t t) const {
    const auto threshold = static_cast<std::uint64_t>(config_.hazard_density * 256.0);
    std::uint32_t row = 0;
    std::uint64_t h = 0;
    for (int x = 0; x < config_.width; ++x) {
        if (x % 8 == 0) h = splitmix64(splitmix64(config_.seed) ^ static_cast<std::uint64_t>(t * 64 + x));
        if (((h >> (8 * (x % 8))) & 0xFF) < threshold) row |= 1u << x;
    }
    const std::uint32_t full = (1u << config_.width) - 1;
    if (row == full) row &= ~(1u << (splitmix64(static_cast<std::uint64_t>(t)) % config_.width));
    return row;
}

SimState AvoidGame::initial_state() const {
    SimState s;
    s.payload.assign(kRows + config_.height, 0);
    s.payload[kAgent] = config_.width / 2;
    return s;
}

Screen AvoidGame::render(const SimState& state) const {
    const int px = config_.cell_pixels;
    Screen screen(config_.width * px, config_.height * px, 3);
    auto fill_cell = [&](int cx, int cy, std::uint8_t color) {
        for (int y = cy * px; y < (cy + 1) * px; ++y)
            for (int x = cx * px; x < (cx + 1) * px; ++x) screen.set(x, y, color);
    };
    for (int r = 0; r < config_.height; ++r) {
        const auto row = static_cast<std::uint32_t>(state.payload[kRows + r]);
        for (int x = 0; x < config_.width; ++x)
            if (row & (1u << x)) fill_cell(x, r, 2);
    }
    fill_cell(state.payload[kAgent], config_.height - 1, 1);
    return screen;
}

double AvoidGame::advance_frame(SimState& state, Action action) const {
    auto& p = state.payload;
    int x = p[kAgent];
    switch (action) {
        case kLeft: x = x > 0 ? x - 1 : x; break;
        case kStay: break;
        case kRight: x = x < config_.width - 1 ? x + 1 : x; break;
        default: throw std::out_of_range("avoid_game: action out of range");
    }
    p[kAgent] = x;
    const std::size_t bottom = kRows + config_.height - 1;
    const auto bit = std::int32_t{1} << x;

    // Moving into a hazard already on the bottom row is a collision as well.
    bool hit = (p[bottom] & bit) != 0;
    for (std::size_t r = bottom; r > kRows; --r) p[r] = p[r - 1];
    p[kRows] = static_cast<std::int32_t>(spawn_row(p[kFrame]));
    p[kFrame] += 1;
    hit = hit || (p[bottom] & bit) != 0;

    if (hit) {
        state.terminal = true;
        return -1.0;
    }
    state.terminal = p[kFrame] >= config_.max_steps;
    return 0.1;
}

}  // namespace vaeiw
