// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic RNG. Every random decision in the project is a
// pure function of (seed, stream label, counter) so generated corpora, model
// initialization, and training runs are reproducible bit-for-bit and the
// algorithm is portable across implementations.
//
// Algorithm (documented so test vectors can be reproduced elsewhere):
//   mix64(x)   = splitmix64 finalizer of (x + 0x9E3779B97F4A7C15):
//                z = x + 0x9E3779B97F4A7C15
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                return z ^ (z >> 31)
//   draw i     = mix64(key ^ mix64(i)) with i = 0, 1, 2, ...
//   derive     = child key mix64(key ^ fnv1a64(label)) (string) or
//                mix64(key ^ mix64(salt ^ 0xD1B54A32D192ED03)) (integer)
//   uniform    = (draw >> 11) * 2^-53 in [0, 1)
//   normal     = Box-Muller: sqrt(-2 ln(1-u1)) * cos(2*pi*u2)
//   uniform_int= rejection sampling on draw % n (unbiased)

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "himap/util.hpp"

namespace himap {

inline std::uint64_t mix64(std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix64(seed)) {}

    Rng derive(std::string_view label) const {
        Rng child(0);
        child.key_ = mix64(key_ ^ fnv1a64(label));
        return child;
    }
    Rng derive(std::uint64_t salt) const {
        Rng child(0);
        child.key_ = mix64(key_ ^ mix64(salt ^ 0xD1B54A32D192ED03ull));
        return child;
    }

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t bound = ~0ull - ~0ull % n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= bound);
        return r % n;
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    // Knuth's product method; fine for the small rates used here.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double limit = std::exp(-lambda);
        double prod = 1.0;
        int k = -1;
        do {
            ++k;
            prod *= uniform();
        } while (prod > limit);
        return k;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace himap
