#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace clg {

/// Subset of [0, capacity) with O(1) insert, erase, membership and access by
/// dense position. Element order is arbitrary but deterministic given the
/// sequence of operations, which keeps uniform sampling reproducible.
class IndexableSet {
public:
    explicit IndexableSet(std::size_t capacity = 0) : pos_(capacity, kAbsent) {}

    std::size_t capacity() const { return pos_.size(); }
    std::size_t size() const { return dense_.size(); }
    bool empty() const { return dense_.empty(); }

    bool contains(std::uint32_t x) const { return pos_[x] != kAbsent; }

    /// Returns true if the set changed.
    bool insert(std::uint32_t x) {
        if (pos_[x] != kAbsent) return false;
        pos_[x] = static_cast<std::uint32_t>(dense_.size());
        dense_.push_back(x);
        return true;
    }

    bool erase(std::uint32_t x) {
        const std::uint32_t p = pos_[x];
        if (p == kAbsent) return false;
        const std::uint32_t last = dense_.back();
        dense_[p] = last;
        pos_[last] = p;
        dense_.pop_back();
        pos_[x] = kAbsent;
        return true;
    }

    void assign(std::uint32_t x, bool member) {
        if (member)
            insert(x);
        else
            erase(x);
    }

    std::uint32_t at(std::size_t denseIndex) const { return dense_[denseIndex]; }

    void clear() {
        for (auto x : dense_) pos_[x] = kAbsent;
        dense_.clear();
    }

    auto begin() const { return dense_.begin(); }
    auto end() const { return dense_.end(); }

private:
    static constexpr std::uint32_t kAbsent = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> pos_;
    std::vector<std::uint32_t> dense_;
};

}  // namespace clg
