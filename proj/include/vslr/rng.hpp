#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "vslr/tensor.hpp"

namespace vslr {

using Rng = std::mt19937_64;

// Independent stream seeds: hash(seed, key). Stable across runs and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
bool coin_flip(Rng& rng);
// Fisher-Yates permutation of 0..n-1 driven by uniform_index.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

// Normal(0, stddev) resampled until within two standard deviations.
template <typename T>
Tensor<T> truncated_normal(const Shape& shape, double stddev, Rng& rng, bool requires_grad = true);

}  // namespace vslr
