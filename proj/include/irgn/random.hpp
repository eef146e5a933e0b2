#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "irgn/hilbert.hpp"

namespace irgn {

/// SplitMix64 finalizer; decorrelates per-sample seeds derived from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Vector of iid standard normal values (not normalized).
GridFunction gaussian_vector(std::size_t n, double weight, std::uint64_t seed);

/// Gaussian direction normalized to unit weighted norm.
GridFunction random_unit(std::size_t n, double weight, std::uint64_t seed);

}  // namespace irgn
