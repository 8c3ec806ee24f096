#include "vaeiw/features.hpp"

#include <algorithm>
#include <stdexcept>

namespace vaeiw {

std::string to_string(FeatureBackend backend) {
    switch (backend) {
        case FeatureBackend::bprost: return "bprost";
        case FeatureBackend::neural: return "neural";
        case FeatureBackend::raw: return "raw";
    }
    return "unknown";
}

FeatureSpace::FeatureSpace(std::uint64_t size_, FeatureBackend backend_) : size(size_), backend(backend_) {
    if (size < 1) throw std::invalid_argument("feature space must contain at least one feature");
}

FeatureSet::FeatureSet(std::initializer_list<FeatureId> ids) : ids_(ids) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

FeatureSet FeatureSet::from_unsorted(std::vector<FeatureId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    FeatureSet s;
    s.ids_ = std::move(ids);
    return s;
}

FeatureSet FeatureSet::from_sorted(std::vector<FeatureId> ids) {
    if (std::adjacent_find(ids.begin(), ids.end(), std::greater_equal<>{}) != ids.end())
        throw std::invalid_argument("feature ids must be strictly increasing");
    FeatureSet s;
    s.ids_ = std::move(ids);
    return s;
}

bool FeatureSet::contains(FeatureId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

FeatureId FeatureSet::max_id() const {
    if (ids_.empty()) throw std::logic_error("max_id of an empty feature set");
    return ids_.back();
}

RawPixelExtractor::RawPixelExtractor(int width, int height, int palette_size)
    : width_(width), height_(height), palette_(palette_size) {
    if (width <= 0 || height <= 0 || palette_size <= 0)
        throw std::invalid_argument("raw extractor: dimensions must be positive");
}

FeatureSpace RawPixelExtractor::space() const {
    return {static_cast<std::uint64_t>(width_) * height_ * palette_, FeatureBackend::raw};
}

Extraction RawPixelExtractor::extract(const Screen& screen, const FeatureSet&) const {
    if (screen.width != width_ || screen.height != height_ || screen.palette_size > palette_)
        throw std::invalid_argument("raw extractor: screen geometry mismatch");
    std::vector<FeatureId> ids;
    ids.reserve(screen.pixels.size());
    for (std::size_t i = 0; i < screen.pixels.size(); ++i)
        ids.push_back(static_cast<FeatureId>(i * palette_ + screen.pixels[i]));
    return {FeatureSet::from_sorted(std::move(ids)), {}};
}

}  // namespace vaeiw
