#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "vslr/layers.hpp"

namespace vslr {

// Divided space-time attention with a CLS token, or joint attention over
// tube-embedded cubes with mean pooling.
enum class Variant { Divided, Joint };

std::string_view variant_name(Variant v);
Variant parse_variant(const std::string& s);

// Token grid: t temporal slices of h x w spatial positions.
struct Grid {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t tokens() const { return t * h * w; }
  std::size_t spatial() const { return h * w; }
  bool operator==(const Grid&) const = default;
};

// Grid for F frames of H x W pixels; throws naming the dimension that does not
// divide.
Grid token_grid(std::size_t frames, std::size_t height, std::size_t width, std::size_t patch,
                std::size_t tube_depth = 1);

struct EmbeddingConfig {
  Variant variant = Variant::Divided;
  std::size_t patch = 16;
  std::size_t tube_depth = 1;
  std::size_t dim = 768;
  std::size_t frames = 16;
  std::size_t height = 224;
  std::size_t width = 224;

  bool use_cls() const { return variant == Variant::Divided; }
  Grid grid() const { return token_grid(frames, height, width, patch, tube_depth); }
  std::size_t patch_dim() const { return 3 * tube_depth * patch * patch; }
  std::size_t positions() const { return grid().tokens() + (use_cls() ? 1 : 0); }
};

template <typename T>
struct TokenBatch {
  Tensor<T> tokens;  // [B, N (+1), D]
  Grid grid;
  bool has_cls = false;

  std::size_t batch() const { return tokens.dim(0); }
};

template <typename T>
struct EmbeddingWeights {
  LinearWeights<T> proj;  // [3 t p p, D]
  Tensor<T> pos;          // [positions, D]
  Tensor<T> cls;          // [D]; rank 0 for the joint variant
};

template <typename T>
EmbeddingWeights<T> init_embedding(const EmbeddingConfig& cfg, Rng& rng);

// [B, F, 3, H, W] (or [F, 3, H, W]) -> [B, N, 3 t p p]. Tokens are ordered
// (slice, row, column); each cube is flattened channel-major as (3, t, p, p).
template <typename T>
Tensor<T> flatten_cubes(const Tensor<T>& x, std::size_t tube_depth, std::size_t patch);
// Inverse of flatten_cubes.
template <typename T>
Tensor<T> unflatten_cubes(const Tensor<T>& cubes, const Grid& grid, std::size_t tube_depth, std::size_t patch);

template <typename T>
TokenBatch<T> patch_embed_2d(const Tensor<T>& x, const LinearWeights<T>& proj, std::size_t patch);
template <typename T>
TokenBatch<T> cube_embed_3d(const Tensor<T>& x, const LinearWeights<T>& proj, std::size_t tube_depth,
                            std::size_t patch);

template <typename T>
TokenBatch<T> add_positional(const TokenBatch<T>& tb, const Tensor<T>& table);
template <typename T>
TokenBatch<T> prepend_cls(const TokenBatch<T>& tb, const Tensor<T>& cls);

// Patch or cube embedding, CLS (divided only), then positions.
template <typename T>
TokenBatch<T> embed(const Tensor<T>& x, const EmbeddingConfig& cfg, const EmbeddingWeights<T>& w);

// embed.proj.{w,b}, embed.pos, embed.cls
template <typename T>
void append_params(ParamList<T>& out, const EmbeddingWeights<T>& w);

}  // namespace vslr
