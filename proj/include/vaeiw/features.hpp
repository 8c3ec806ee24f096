#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vaeiw/sim.hpp"

namespace vaeiw {

using FeatureId = std::uint32_t;

enum class FeatureBackend { bprost, neural, raw };

std::string to_string(FeatureBackend backend);

/// The declared universe of boolean features for one backend.
struct FeatureSpace {
    std::uint64_t size = 1;
    FeatureBackend backend = FeatureBackend::raw;

    FeatureSpace() = default;
    FeatureSpace(std::uint64_t size_, FeatureBackend backend_);

    bool operator==(const FeatureSpace&) const = default;
};

/// Sparse set of feature ids kept strictly increasing.
class FeatureSet {
public:
    FeatureSet() = default;
    FeatureSet(std::initializer_list<FeatureId> ids);

    /// Sorts and removes duplicates.
    static FeatureSet from_unsorted(std::vector<FeatureId> ids);
    /// Throws std::invalid_argument unless `ids` is strictly increasing.
    static FeatureSet from_sorted(std::vector<FeatureId> ids);

    bool contains(FeatureId id) const;
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    std::span<const FeatureId> ids() const { return ids_; }
    auto begin() const { return ids_.begin(); }
    auto end() const { return ids_.end(); }

    /// Largest id, or throws on an empty set.
    FeatureId max_id() const;

    bool operator==(const FeatureSet&) const = default;

private:
    std::vector<FeatureId> ids_;
};

/// Features of a screen plus whatever state the extractor wants threaded into
/// the extraction of the successor screen (B-PROST's previous basic set).
struct Extraction {
    FeatureSet features;
    FeatureSet carry;
};

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeatureSpace space() const = 0;
    virtual Extraction extract(const Screen& screen, const FeatureSet& prev_carry) const = 0;
};

/// One feature per (pixel, color): id = (y * width + x) * palette + color.
class RawPixelExtractor final : public FeatureExtractor {
public:
    RawPixelExtractor(int width, int height, int palette_size);

    FeatureSpace space() const override;
    Extraction extract(const Screen& screen, const FeatureSet& prev_carry) const override;

private:
    int width_;
    int height_;
    int palette_;
};

}  // namespace vaeiw
