#include <algorithm>
#include <random>
#include <stdexcept>

#include "vaeiw/sim.hpp"

namespace vaeiw {

namespace {
// payload layout: [agent_x, agent_y, frames, alive_0 .. alive_{gems-1}]
constexpr std::size_t kAgentX = 0;
constexpr std::size_t kAgentY = 1;
constexpr std::size_t kFrames = 2;
constexpr std::size_t kGems = 3;
}  // namespace

GridCollectConfig GridCollectConfig::from_json(const nlohmann::json& params) {
    GridCollectConfig c;
    c.size = params.value("size", c.size);
    c.gems = params.value("gems", c.gems);
    c.cell_pixels = params.value("cell_pixels", c.cell_pixels);
    c.move_cap = params.value("move_cap", c.move_cap);
    c.layout_seed = params.value("seed", c.layout_seed);
    if (params.contains("gem_cells")) {
        for (const auto& cell : params.at("gem_cells")) c.gem_cells.emplace_back(cell.at(0), cell.at(1));
        c.gems = static_cast<int>(c.gem_cells.size());
    }
    return c;
}

GridCollect::GridCollect(GridCollectConfig config) : config_(std::move(config)) {
    const int n = config_.size;
    if (n < 1 || n > 64) throw std::invalid_argument("grid_collect: size must be in [1, 64]");
    if (config_.cell_pixels < 1) throw std::invalid_argument("grid_collect: cell_pixels must be >= 1");
    if (config_.gems < 0 || config_.gems > n * n - 1)
        throw std::invalid_argument("grid_collect: gem count does not fit on the board");
    if (config_.move_cap <= 0) config_.move_cap = 4 * n * n;

    if (!config_.gem_cells.empty()) {
        for (auto [x, y] : config_.gem_cells) {
            if (x < 0 || y < 0 || x >= n || y >= n || (x == 0 && y == 0))
                throw std::invalid_argument("grid_collect: invalid gem cell");
            if (std::find(gems_.begin(), gems_.end(), std::pair{x, y}) != gems_.end())
                throw std::invalid_argument("grid_collect: duplicate gem cell");
            gems_.emplace_back(x, y);
        }
        return;
    }
    // Layout rule: draw cell indices from mt19937(seed) modulo n*n, skipping
    // the start cell (0, 0) and cells already holding a gem.
    std::mt19937 gen(config_.layout_seed);
    while (static_cast<int>(gems_.size()) < config_.gems) {
        const int cell = static_cast<int>(gen() % static_cast<std::uint32_t>(n * n));
        std::pair<int, int> xy{cell % n, cell / n};
        if (cell == 0 || std::find(gems_.begin(), gems_.end(), xy) != gems_.end()) continue;
        gems_.push_back(xy);
    }
}

SimState GridCollect::initial_state() const {
    SimState s;
    s.payload.assign(kGems + gems_.size(), 1);
    s.payload[kAgentX] = 0;
    s.payload[kAgentY] = 0;
    s.payload[kFrames] = 0;
    s.terminal = gems_.empty();
    return s;
}

Screen GridCollect::render(const SimState& state) const {
    const int px = config_.cell_pixels;
    Screen screen(config_.size * px, config_.size * px, 3);
    auto fill_cell = [&](int cx, int cy, std::uint8_t color) {
        for (int y = cy * px; y < (cy + 1) * px; ++y)
            for (int x = cx * px; x < (cx + 1) * px; ++x) screen.set(x, y, color);
    };
    for (std::size_t g = 0; g < gems_.size(); ++g)
        if (state.payload[kGems + g]) fill_cell(gems_[g].first, gems_[g].second, 2);
    fill_cell(state.payload[kAgentX], state.payload[kAgentY], 1);
    return screen;
}

double GridCollect::advance_frame(SimState& state, Action action) const {
    auto& p = state.payload;
    const int n = config_.size;
    int x = p[kAgentX], y = p[kAgentY];
    switch (action) {
        case kUp: y = std::max(0, y - 1); break;
        case kDown: y = std::min(n - 1, y + 1); break;
        case kLeft: x = std::max(0, x - 1); break;
        case kRight: x = std::min(n - 1, x + 1); break;
        default: throw std::out_of_range("grid_collect: action out of range");
    }
    p[kAgentX] = x;
    p[kAgentY] = y;
    p[kFrames] += 1;

    double reward = 0.0;
    bool remaining = false;
    for (std::size_t g = 0; g < gems_.size(); ++g) {
        if (!p[kGems + g]) continue;
        if (gems_[g] == std::pair{x, y}) {
            p[kGems + g] = 0;
            reward += 1.0;
        } else {
            remaining = true;
        }
    }
    state.terminal = !remaining || p[kFrames] >= config_.move_cap;
    return reward;
}

}  // namespace vaeiw
