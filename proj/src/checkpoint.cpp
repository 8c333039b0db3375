#include "vslr/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "vslr/error.hpp"

namespace vslr {

namespace {

constexpr std::array<char, 4> kMagic = {'V', 'S', 'L', 'R'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) fail(errc::kIo, "checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename T>
void put_scalar(std::ostream& out, T v) {
  if constexpr (sizeof(T) == 4) {
    put_le(out, std::bit_cast<std::uint32_t>(v));
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(v));
  }
}

}  // namespace

template <typename T>
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor<T>>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, sizeof(T));
  put_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
    for (T v : t.data()) put_scalar(out, v);
  }
  if (!out) fail(errc::kIo, "checkpoint write failed");
}

template <typename T>
std::vector<NamedTensor<T>> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) fail(errc::kIo, "not a checkpoint (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) fail(errc::kIo, "unsupported checkpoint version " + std::to_string(version));
  const auto width = get_le<std::uint32_t>(in);
  if (width != 4 && width != 8) fail(errc::kIo, "unsupported scalar width " + std::to_string(width));
  const auto count = get_le<std::uint64_t>(in);
  std::vector<NamedTensor<T>> result;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    std::vector<T> values(numel(shape));
    for (auto& v : values) {
      if (width == 4) {
        v = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
      } else {
        v = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(in)));
      }
    }
    result.push_back({std::move(name), Tensor<T>(std::move(shape), std::move(values))});
  }
  return result;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  write_checkpoint(out, tensors);
}

template <typename T>
std::vector<NamedTensor<T>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot read " + path.string());
  return read_checkpoint<T>(in);
}

template <typename T>
std::size_t assign_by_name(std::vector<NamedTensor<T>>& target,
                           const std::vector<NamedTensor<T>>& source) {
  std::unordered_map<std::string, const Tensor<T>*> lookup;
  for (const auto& nt : source) lookup[nt.name] = &nt.tensor;
  std::size_t copied = 0;
  for (auto& nt : target) {
    auto it = lookup.find(nt.name);
    if (it == lookup.end()) continue;
    if (it->second->shape() != nt.tensor.shape()) {
      fail(errc::kShape, "checkpoint entry " + nt.name + " has shape " +
                             shape_str(it->second->shape()) + ", model expects " +
                             shape_str(nt.tensor.shape()));
    }
    auto dst = nt.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
    ++copied;
  }
  return copied;
}

#define VSLR_INSTANTIATE(T)                                                                    \
  template void write_checkpoint<T>(std::ostream&, const std::vector<NamedTensor<T>>&);        \
  template std::vector<NamedTensor<T>> read_checkpoint<T>(std::istream&);                      \
  template void save_checkpoint<T>(const std::filesystem::path&,                               \
                                   const std::vector<NamedTensor<T>>&);                        \
  template std::vector<NamedTensor<T>> load_checkpoint<T>(const std::filesystem::path&);       \
  template std::size_t assign_by_name<T>(std::vector<NamedTensor<T>>&,                         \
                                         const std::vector<NamedTensor<T>>&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
