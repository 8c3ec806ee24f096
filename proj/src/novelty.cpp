#include "vaeiw/novelty.hpp"

#include <stdexcept>
#include <string>

namespace vaeiw {

NoveltyTable::NoveltyTable(FeatureSpace space) : space_(space) {}

void NoveltyTable::check(const FeatureSet& feats, int depth) const {
    if (depth < 0) throw std::invalid_argument("novelty depth must be non-negative");
    if (!feats.empty() && feats.max_id() >= space_.size)
        throw std::out_of_range("feature id " + std::to_string(feats.max_id()) + " outside feature space of size " +
                                std::to_string(space_.size));
}

bool NoveltyTable::novel_new(const FeatureSet& feats, int depth) const {
    check(feats, depth);
    for (FeatureId f : feats) {
        auto it = depth_.find(f);
        if (it == depth_.end() || it->second > depth) return true;
    }
    return false;
}

bool NoveltyTable::novel_cached(const FeatureSet& feats, int depth) const {
    check(feats, depth);
    for (FeatureId f : feats) {
        auto it = depth_.find(f);
        if (it == depth_.end() || it->second >= depth) return true;
    }
    return false;
}

std::size_t NoveltyTable::update(const FeatureSet& feats, int depth) {
    check(feats, depth);
    std::size_t lowered = 0;
    for (FeatureId f : feats) {
        auto [it, inserted] = depth_.try_emplace(f, depth);
        if (inserted) {
            ++lowered;
        } else if (depth < it->second) {
            it->second = depth;
            ++lowered;
        }
    }
    return lowered;
}

std::optional<int> NoveltyTable::depth_of(FeatureId f) const {
    auto it = depth_.find(f);
    if (it == depth_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::uint64_t pair_key(FeatureId a, FeatureId b) { return (std::uint64_t{a} << 32) | b; }

// Calls fn(tuple) for every k-subset of ids (ids sorted, so tuples are sorted).
// Stops early and returns true as soon as fn returns true.
template <typename Fn>
bool for_each_subset(std::span<const FeatureId> ids, int k, Fn&& fn) {
    const int n = static_cast<int>(ids.size());
    if (k > n) return false;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    std::vector<FeatureId> tuple(k);
    while (true) {
        for (int i = 0; i < k; ++i) tuple[i] = ids[idx[i]];
        if (fn(tuple)) return true;
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) --i;
        if (i < 0) return false;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace

TupleTable::TupleTable(FeatureSpace space, int k, int cap) : space_(space), k_(k) {
    if (k < 1) throw std::invalid_argument("width must be >= 1");
    if (k > cap) throw std::invalid_argument("width " + std::to_string(k) + " exceeds the configured cap " +
                                             std::to_string(cap));
}

void TupleTable::check(const FeatureSet& feats) const {
    if (!feats.empty() && feats.max_id() >= space_.size)
        throw std::out_of_range("feature id outside feature space");
}

bool TupleTable::contains(std::span<const FeatureId> tuple) const {
    if (static_cast<int>(tuple.size()) != k_) return false;
    if (k_ == 1) return singles_.contains(tuple[0]);
    if (k_ == 2) return pairs_.contains(pair_key(tuple[0], tuple[1]));
    return tuples_.contains(std::vector<FeatureId>(tuple.begin(), tuple.end()));
}

bool TupleTable::novel(const FeatureSet& feats) const {
    check(feats);
    if (k_ == 1) {
        for (FeatureId f : feats)
            if (!singles_.contains(f)) return true;
        return false;
    }
    return for_each_subset(feats.ids(), k_, [&](const std::vector<FeatureId>& t) { return !contains(t); });
}

void TupleTable::insert(const FeatureSet& feats) {
    check(feats);
    if (k_ == 1) {
        singles_.insert(feats.begin(), feats.end());
        return;
    }
    for_each_subset(feats.ids(), k_, [&](const std::vector<FeatureId>& t) {
        if (k_ == 2)
            pairs_.insert(pair_key(t[0], t[1]));
        else
            tuples_.insert(t);
        return false;
    });
}

std::size_t TupleTable::size() const {
    if (k_ == 1) return singles_.size();
    if (k_ == 2) return pairs_.size();
    return tuples_.size();
}

}  // namespace vaeiw
