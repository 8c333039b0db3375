#include "vslr/rng.hpp"

#include <cmath>

namespace vslr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool coin_flip(Rng& rng) { return (rng() >> 63) != 0; }

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

template <typename T>
Tensor<T> truncated_normal(const Shape& shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> values(numel(shape));
  for (auto& v : values) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<T>(z * stddev);
  }
  return Tensor<T>(shape, std::move(values), requires_grad);
}

template Tensor<float> truncated_normal<float>(const Shape&, double, Rng&, bool);
template Tensor<double> truncated_normal<double>(const Shape&, double, Rng&, bool);

}  // namespace vslr
