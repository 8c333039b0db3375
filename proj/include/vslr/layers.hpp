#pragma once

#include <string>
#include <vector>

#include "vslr/checkpoint.hpp"
#include "vslr/ops.hpp"
#include "vslr/rng.hpp"

namespace vslr {

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

inline constexpr double kInitStddev = 0.02;

template <typename T>
struct LinearWeights {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out]
};

template <typename T>
struct NormWeights {
  Tensor<T> gain;
  Tensor<T> bias;
};

template <typename T>
LinearWeights<T> init_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {truncated_normal<T>({in, out}, kInitStddev, rng), Tensor<T>::zeros({out}, true)};
}

template <typename T>
NormWeights<T> init_norm(std::size_t dim) {
  return {Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true)};
}

template <typename T>
Tensor<T> apply(const LinearWeights<T>& l, const Tensor<T>& x) {
  return linear(x, l.w, l.b);
}

template <typename T>
Tensor<T> apply(const NormWeights<T>& n, const Tensor<T>& x) {
  return layer_norm(x, n.gain, n.bias);
}

template <typename T>
void append_params(ParamList<T>& out, const std::string& prefix, const LinearWeights<T>& l) {
  out.push_back({prefix + ".w", l.w});
  out.push_back({prefix + ".b", l.b});
}

template <typename T>
void append_params(ParamList<T>& out, const std::string& prefix, const NormWeights<T>& n) {
  out.push_back({prefix + ".w", n.gain});
  out.push_back({prefix + ".b", n.bias});
}

}  // namespace vslr
