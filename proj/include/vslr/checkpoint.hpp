#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vslr/tensor.hpp"

namespace vslr {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Checkpoint byte layout (all integers little-endian):
//
//   "VSLR"            4 bytes magic
//   version           u32 (currently 1)
//   scalar_bytes      u32 (4 = float32, 8 = float64)
//   count             u64
//   count x entry:
//     name_length     u32
//     name            name_length bytes, UTF-8
//     rank            u32
//     extents         rank x u64
//     payload         product(extents) scalars, IEEE-754 little-endian
//
// Loading converts between scalar widths; a same-width round trip is
// bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor<T>>& tensors);
template <typename T>
std::vector<NamedTensor<T>> read_checkpoint(std::istream& in);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors);
template <typename T>
std::vector<NamedTensor<T>> load_checkpoint(const std::filesystem::path& path);

// Copies values from `source` into same-named, same-shaped entries of
// `target`. Returns the number of tensors copied. Shape disagreement on a
// shared name is an error; names present on only one side are skipped.
template <typename T>
std::size_t assign_by_name(std::vector<NamedTensor<T>>& target,
                           const std::vector<NamedTensor<T>>& source);

}  // namespace vslr
