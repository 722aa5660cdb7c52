#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "colf/error.hpp"
#include "colf/sample.hpp"

namespace colf {

// Date-partitioned exemplar memory. Keys are collection days; every exemplar
// in a partition carries that day.
struct MemoryStore {
    std::map<int, std::vector<ClickSample>> partitions;

    bool empty() const { return partitions.empty(); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [day, samples] : partitions) n += samples.size();
        return n;
    }

    std::vector<int> days() const {
        std::vector<int> d;
        for (const auto& [day, samples] : partitions) d.push_back(day);
        return d;
    }

    // Exemplars in day order, then insertion order.
    std::vector<ClickSample> flatten() const {
        std::vector<ClickSample> out;
        out.reserve(total_size());
        for (const auto& [day, samples] : partitions) out.insert(out.end(), samples.begin(), samples.end());
        return out;
    }

    // Throws StateError when an exemplar sits in the wrong partition or a
    // partition is empty.
    void check_invariants() const {
        for (const auto& [day, samples] : partitions) {
            if (samples.empty()) throw StateError("memory partition " + std::to_string(day) + " is empty");
            for (const auto& s : samples) {
                if (s.day != day) {
                    throw StateError("exemplar from day " + std::to_string(s.day) + " stored in partition " +
                                     std::to_string(day));
                }
            }
        }
    }

    bool operator==(const MemoryStore&) const = default;
};

} // namespace colf
