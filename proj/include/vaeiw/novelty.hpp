#pragma once

#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vaeiw/features.hpp"

namespace vaeiw {

/// Width-1 novelty bookkeeping for rollout search: the smallest tree depth at
/// which each feature has been observed in the current planning step.
/// Features never observed have no entry (depth +infinity).
class NoveltyTable {
public:
    explicit NoveltyTable(FeatureSpace space);

    /// A new node at `depth` is novel iff it holds a feature whose recorded
    /// depth is strictly greater (or absent).
    bool novel_new(const FeatureSet& feats, int depth) const;

    /// An existing node at `depth` is novel iff it holds a feature whose
    /// recorded depth is >= depth, i.e. no strictly shallower node owns it.
    bool novel_cached(const FeatureSet& feats, int depth) const;

    /// depth_of[f] = min(depth_of[f], depth) for every f in feats. Returns
    /// the number of entries that strictly decreased.
    std::size_t update(const FeatureSet& feats, int depth);

    std::optional<int> depth_of(FeatureId f) const;

    void clear() { depth_.clear(); }
    std::size_t size() const { return depth_.size(); }
    const FeatureSpace& space() const { return space_; }

private:
    void check(const FeatureSet& feats, int depth) const;

    FeatureSpace space_;
    std::unordered_map<FeatureId, int> depth_;
};

/// Set of feature k-tuples already made true, for breadth-first IW(k).
/// k = 1 and k = 2 use flat hash sets; larger k (up to the cap) fall back to
/// an ordered set of sorted tuples.
class TupleTable {
public:
    static constexpr int kDefaultCap = 2;

    TupleTable(FeatureSpace space, int k, int cap = kDefaultCap);

    /// True iff some k-subset of feats has not been inserted yet.
    bool novel(const FeatureSet& feats) const;
    /// Inserts every k-subset of feats.
    void insert(const FeatureSet& feats);
    bool contains(std::span<const FeatureId> tuple) const;

    int width() const { return k_; }
    std::size_t size() const;

private:
    void check(const FeatureSet& feats) const;

    FeatureSpace space_;
    int k_;
    std::unordered_set<FeatureId> singles_;
    std::unordered_set<std::uint64_t> pairs_;
    std::set<std::vector<FeatureId>> tuples_;
};

/// Convenience form: novelty of feats against `seen` for width seen.width().
inline bool iw_novel(const TupleTable& seen, const FeatureSet& feats) { return seen.novel(feats); }

}  // namespace vaeiw
