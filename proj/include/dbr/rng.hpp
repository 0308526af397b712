#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dbr {

// One root seed per run, split into named streams so changing how one
// component consumes randomness does not perturb the others.
class RngStreams {
public:
    explicit RngStreams(uint64_t root_seed) : root_(root_seed) {}

    std::mt19937_64 stream(const std::string& name) const {
        uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ull;
        }
        std::seed_seq seq{static_cast<uint32_t>(root_), static_cast<uint32_t>(root_ >> 32),
                          static_cast<uint32_t>(h), static_cast<uint32_t>(h >> 32)};
        return std::mt19937_64(seq);
    }

    uint64_t root() const { return root_; }

private:
    uint64_t root_;
};

}  // namespace dbr
