#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qrl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based sub-seed: the same (master, replication, purpose) always maps to the
/// same seed, and distinct purposes give unrelated streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication, std::string_view purpose);

/// Named sub-stream of a master seed.
Rng make_stream(std::uint64_t master, std::uint64_t replication, std::string_view purpose);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);

}  // namespace qrl
