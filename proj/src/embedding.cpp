#include "vslr/embedding.hpp"

#include "vslr/error.hpp"

namespace vslr {

std::string_view variant_name(Variant v) { return v == Variant::Divided ? "divided" : "joint"; }

Variant parse_variant(const std::string& s) {
  if (s == "divided" || s == "timesformer") return Variant::Divided;
  if (s == "joint" || s == "videomae") return Variant::Joint;
  fail(errc::kConfig, "variant must be 'divided' or 'joint', got '" + s + "'");
}

Grid token_grid(std::size_t frames, std::size_t height, std::size_t width, std::size_t patch,
                std::size_t tube_depth) {
  if (patch == 0 || tube_depth == 0) fail(errc::kConfig, "patch and tube depth must be positive");
  auto check = [](std::size_t extent, std::size_t by, const char* what) {
    if (extent == 0 || extent % by != 0) {
      fail(errc::kShape, std::string(what) + " " + std::to_string(extent) + " is not divisible by " +
                             std::to_string(by));
    }
  };
  check(frames, tube_depth, "frame count");
  check(height, patch, "height");
  check(width, patch, "width");
  return {frames / tube_depth, height / patch, width / patch};
}

template <typename T>
EmbeddingWeights<T> init_embedding(const EmbeddingConfig& cfg, Rng& rng) {
  EmbeddingWeights<T> w;
  w.proj = init_linear<T>(cfg.patch_dim(), cfg.dim, rng);
  w.pos = truncated_normal<T>({cfg.positions(), cfg.dim}, kInitStddev, rng);
  if (cfg.use_cls()) w.cls = Tensor<T>::zeros({cfg.dim}, true);
  return w;
}

namespace {

template <typename T>
Tensor<T> batched(const Tensor<T>& x) {
  if (x.rank() == 4) return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2), x.dim(3)});
  if (x.rank() != 5 || x.dim(2) != 3) {
    fail(errc::kShape, "expected pixels [F,3,H,W] or [B,F,3,H,W], got " + shape_str(x.shape()));
  }
  return x;
}

}  // namespace

template <typename T>
Tensor<T> flatten_cubes(const Tensor<T>& x, std::size_t tube_depth, std::size_t patch) {
  const Tensor<T> v = batched(x);
  const std::size_t b = v.dim(0);
  const Grid g = token_grid(v.dim(1), v.dim(3), v.dim(4), patch, tube_depth);
  const Tensor<T> split = reshape(v, {b, g.t, tube_depth, 3, g.h, patch, g.w, patch});
  const Tensor<T> cubes = permute(split, {0, 1, 4, 6, 3, 2, 5, 7});
  return reshape(cubes, {b, g.tokens(), 3 * tube_depth * patch * patch});
}

template <typename T>
Tensor<T> unflatten_cubes(const Tensor<T>& cubes, const Grid& grid, std::size_t tube_depth, std::size_t patch) {
  if (cubes.rank() != 3 || cubes.dim(1) != grid.tokens() || cubes.dim(2) != 3 * tube_depth * patch * patch) {
    fail(errc::kShape, "unflatten_cubes: " + shape_str(cubes.shape()) + " does not match the grid");
  }
  const std::size_t b = cubes.dim(0);
  const Tensor<T> split = reshape(cubes, {b, grid.t, grid.h, grid.w, 3, tube_depth, patch, patch});
  const Tensor<T> frames = permute(split, {0, 1, 5, 4, 2, 6, 3, 7});
  return reshape(frames, {b, grid.t * tube_depth, 3, grid.h * patch, grid.w * patch});
}

template <typename T>
TokenBatch<T> cube_embed_3d(const Tensor<T>& x, const LinearWeights<T>& proj, std::size_t tube_depth,
                            std::size_t patch) {
  const Tensor<T> v = batched(x);
  const Grid g = token_grid(v.dim(1), v.dim(3), v.dim(4), patch, tube_depth);
  return {apply(proj, flatten_cubes(v, tube_depth, patch)), g, false};
}

template <typename T>
TokenBatch<T> patch_embed_2d(const Tensor<T>& x, const LinearWeights<T>& proj, std::size_t patch) {
  return cube_embed_3d(x, proj, 1, patch);
}

template <typename T>
TokenBatch<T> add_positional(const TokenBatch<T>& tb, const Tensor<T>& table) {
  const std::size_t n = tb.tokens.dim(1);
  if (table.rank() != 2 || table.dim(0) != n || table.dim(1) != tb.tokens.dim(2)) {
    fail(errc::kShape, "positional table " + shape_str(table.shape()) + " does not fit tokens " +
                           shape_str(tb.tokens.shape()));
  }
  return {add(tb.tokens, table), tb.grid, tb.has_cls};
}

template <typename T>
TokenBatch<T> prepend_cls(const TokenBatch<T>& tb, const Tensor<T>& cls) {
  if (tb.has_cls) fail(errc::kPrecondition, "tokens already carry a CLS token");
  const std::size_t b = tb.batch(), d = tb.tokens.dim(2);
  if (cls.numel() != d) fail(errc::kShape, "CLS vector " + shape_str(cls.shape()) + " does not match D=" + std::to_string(d));
  const Tensor<T> row = repeat(reshape(cls, {1, 1, d}), 0, b);
  return {concat<T>({row, tb.tokens}, 1), tb.grid, true};
}

template <typename T>
TokenBatch<T> embed(const Tensor<T>& x, const EmbeddingConfig& cfg, const EmbeddingWeights<T>& w) {
  TokenBatch<T> tb = cube_embed_3d(x, w.proj, cfg.tube_depth, cfg.patch);
  if (cfg.use_cls()) tb = prepend_cls(tb, w.cls);
  return add_positional(tb, w.pos);
}

template <typename T>
void append_params(ParamList<T>& out, const EmbeddingWeights<T>& w) {
  append_params(out, "embed.proj", w.proj);
  out.push_back({"embed.pos", w.pos});
  if (w.cls.rank() > 0) out.push_back({"embed.cls", w.cls});
}

#define VSLR_INSTANTIATE(T)                                                                         \
  template EmbeddingWeights<T> init_embedding<T>(const EmbeddingConfig&, Rng&);                    \
  template Tensor<T> flatten_cubes(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> unflatten_cubes(const Tensor<T>&, const Grid&, std::size_t, std::size_t);     \
  template TokenBatch<T> patch_embed_2d(const Tensor<T>&, const LinearWeights<T>&, std::size_t);   \
  template TokenBatch<T> cube_embed_3d(const Tensor<T>&, const LinearWeights<T>&, std::size_t,     \
                                       std::size_t);                                               \
  template TokenBatch<T> add_positional(const TokenBatch<T>&, const Tensor<T>&);                   \
  template TokenBatch<T> prepend_cls(const TokenBatch<T>&, const Tensor<T>&);                      \
  template TokenBatch<T> embed(const Tensor<T>&, const EmbeddingConfig&, const EmbeddingWeights<T>&); \
  template void append_params(ParamList<T>&, const EmbeddingWeights<T>&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
