#pragma once

#include <cstddef>
#include <vector>

#include "vslr/tensor.hpp"

namespace vslr {

// Differentiable primitives. Broadcasting is limited to leading batch axes:
// matmul broadcasts batch extents (numpy rules, size-1 or missing axes), and
// add/sub accept a right operand whose shape is a suffix of the left's.
// Every other shape mismatch throws an Error of kind "shape".

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
// Elementwise product; shapes must match exactly.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// Mean over one axis; the axis is removed from the result.
template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

// Normalizes over the last axis, then applies gain and bias of extent D.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// x[..., in] * w[in, out] + b[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length);

// Picks entries `indices` along `axis` (repeats allowed).
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, const std::vector<std::size_t>& indices);
// Rows of table[V, D] for each id.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::size_t>& ids);
// x[B, N, D] -> [B, k, D] with a separate index list per batch row.
template <typename T>
Tensor<T> gather_tokens(const Tensor<T>& x, const std::vector<std::vector<std::size_t>>& indices);
// Tiles a unit-extent axis `n` times.
template <typename T>
Tensor<T> repeat(const Tensor<T>& x, int axis, std::size_t n);

// Resolves a possibly negative axis against `rank`.
std::size_t normalize_axis(int axis, std::size_t rank);

}  // namespace vslr
