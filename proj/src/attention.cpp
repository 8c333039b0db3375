#include "vslr/attention.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vslr/error.hpp"
#include "vslr/op_counter.hpp"

namespace vslr {

void EncoderConfig::validate() const {
  if (depth == 0) fail(errc::kConfig, "encoder depth must be at least 1");
  if (dim == 0 || heads == 0) fail(errc::kConfig, "dim and heads must be positive");
  if (dim % heads != 0) {
    fail(errc::kConfig, "heads (" + std::to_string(heads) + ") must divide dim (" + std::to_string(dim) + ")");
  }
  if (mlp_ratio == 0) fail(errc::kConfig, "mlp_ratio must be positive");
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& k_in, const Tensor<T>& v_in,
                               const AttentionWeights<T>& w, std::size_t heads, Tensor<T>* trace) {
  if (q_in.rank() != 3) fail(errc::kShape, "attention expects [G,n,D], got " + shape_str(q_in.shape()));
  const std::size_t g = q_in.dim(0), n = q_in.dim(1), d = q_in.dim(2), m = k_in.dim(1);
  if (heads == 0 || d % heads != 0) {
    fail(errc::kConfig, "heads (" + std::to_string(heads) + ") must divide dim (" + std::to_string(d) + ")");
  }
  const std::size_t dh = d / heads;
  auto split_heads = [&](const Tensor<T>& x, std::size_t len) {
    return permute(reshape(x, {g, len, heads, dh}), {0, 2, 1, 3});
  };
  const Tensor<T> q = split_heads(apply(w.q, q_in), n);
  const Tensor<T> k = split_heads(apply(w.k, k_in), m);
  const Tensor<T> v = split_heads(apply(w.v, v_in), m);
  Tensor<T> mixed;
  {
    AttentionCoreScope core;
    const Tensor<T> scores = scale(matmul(q, transpose(k, 2, 3)), T(1.0 / std::sqrt(double(dh))));
    const Tensor<T> weights = softmax(scores, -1);
    if (trace) *trace = weights.detach();
    mixed = matmul(weights, v);
  }
  return apply(w.o, reshape(permute(mixed, {0, 2, 1, 3}), {g, n, d}));
}

namespace {

template <typename T>
Tensor<T> mlp(const BlockWeights<T>& w, const Tensor<T>& x) {
  return apply(w.mlp1, gelu(apply(w.mlp0, x)));
}

// One divided pass over already-normalized tokens; returns the update only.
template <typename T>
Tensor<T> divided_pass(const Tensor<T>& xn, const Grid& grid, bool has_cls, bool temporal,
                       const AttentionWeights<T>& w, std::size_t heads, Tensor<T>* trace) {
  const std::size_t b = xn.dim(0), d = xn.dim(2);
  const std::size_t f = grid.t, s = grid.spatial(), n = grid.tokens();
  const std::size_t c = has_cls ? 1 : 0;
  const Tensor<T> patches = reshape(slice(xn, 1, c, n), {b, f, s, d});
  const std::size_t per_batch = temporal ? s : f;
  const std::size_t len = temporal ? f : s;
  Tensor<T> seq = temporal ? reshape(permute(patches, {0, 2, 1, 3}), {b * s, f, d}) : reshape(patches, {b * f, s, d});
  if (has_cls) {
    const Tensor<T> cls = repeat(reshape(slice(xn, 1, 0, 1), {b, 1, 1, d}), 1, per_batch);
    seq = concat<T>({reshape(cls, {b * per_batch, 1, d}), seq}, 1);
  }
  const Tensor<T> out = multi_head_attention(seq, seq, seq, w, heads, trace);
  Tensor<T> body = reshape(slice(out, 1, c, len), {b, per_batch, len, d});
  body = temporal ? reshape(permute(body, {0, 2, 1, 3}), {b, n, d}) : reshape(body, {b, n, d});
  if (!has_cls) return body;
  const Tensor<T> cls_update = reshape(mean(reshape(slice(out, 1, 0, 1), {b, per_batch, d}), 1), {b, 1, d});
  return concat<T>({cls_update, body}, 1);
}

}  // namespace

template <typename T>
TokenBatch<T> divided_block(const TokenBatch<T>& tb, const BlockWeights<T>& w, std::size_t heads,
                            BlockTrace<T>* trace) {
  if (tb.grid.tokens() == 0) fail(errc::kPrecondition, "divided attention needs the token grid");
  if (tb.tokens.rank() != 3 || tb.tokens.dim(1) != tb.grid.tokens() + (tb.has_cls ? 1 : 0)) {
    fail(errc::kShape, "tokens " + shape_str(tb.tokens.shape()) + " do not match the grid");
  }
  Tensor<T> x = tb.tokens;
  x = add(x, divided_pass(apply(w.ln1, x), tb.grid, tb.has_cls, true, w.temporal, heads,
                          trace ? &trace->temporal : nullptr));
  x = add(x, divided_pass(apply(w.ln2, x), tb.grid, tb.has_cls, false, w.spatial, heads,
                          trace ? &trace->spatial : nullptr));
  x = add(x, mlp(w, apply(w.ln3, x)));
  return {x, tb.grid, tb.has_cls};
}

template <typename T>
TokenBatch<T> joint_block(const TokenBatch<T>& tb, const BlockWeights<T>& w, std::size_t heads,
                          BlockTrace<T>* trace) {
  if (tb.tokens.rank() != 3) fail(errc::kShape, "tokens must be [B,N,D], got " + shape_str(tb.tokens.shape()));
  Tensor<T> x = tb.tokens;
  const Tensor<T> xn = apply(w.ln1, x);
  x = add(x, multi_head_attention(xn, xn, xn, w.joint, heads, trace ? &trace->joint : nullptr));
  x = add(x, mlp(w, apply(w.ln2, x)));
  return {x, tb.grid, tb.has_cls};
}

template <typename T>
TokenBatch<T> encoder_forward(const TokenBatch<T>& tb, const EncoderWeights<T>& w, std::size_t heads,
                              AttentionTrace<T>* trace) {
  if (w.blocks.empty()) fail(errc::kConfig, "encoder needs at least one block");
  if (trace) *trace = AttentionTrace<T>{{}, tb.grid, tb.has_cls, tb.batch()};
  TokenBatch<T> x = tb;
  for (const auto& block : w.blocks) {
    BlockTrace<T> bt;
    BlockTrace<T>* slot = trace ? &bt : nullptr;
    x = block.variant == Variant::Divided ? divided_block(x, block, heads, slot) : joint_block(x, block, heads, slot);
    if (trace) trace->blocks.push_back(std::move(bt));
  }
  return {apply(w.norm, x.tokens), x.grid, x.has_cls};
}

template <typename T>
BlockWeights<T> init_block(Variant variant, std::size_t dim, std::size_t hidden, Rng& rng) {
  auto attn = [&] {
    AttentionWeights<T> a;
    a.q = init_linear<T>(dim, dim, rng);
    a.k = init_linear<T>(dim, dim, rng);
    a.v = init_linear<T>(dim, dim, rng);
    a.o = init_linear<T>(dim, dim, rng);
    return a;
  };
  BlockWeights<T> b;
  b.variant = variant;
  if (variant == Variant::Divided) {
    b.temporal = attn();
    b.spatial = attn();
    b.ln3 = init_norm<T>(dim);
  } else {
    b.joint = attn();
  }
  b.mlp0 = init_linear<T>(dim, hidden, rng);
  b.mlp1 = init_linear<T>(hidden, dim, rng);
  b.ln1 = init_norm<T>(dim);
  b.ln2 = init_norm<T>(dim);
  return b;
}

template <typename T>
EncoderWeights<T> init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderWeights<T> w;
  for (std::size_t i = 0; i < cfg.depth; ++i)
    w.blocks.push_back(init_block<T>(cfg.variant, cfg.dim, cfg.dim * cfg.mlp_ratio, rng));
  w.norm = init_norm<T>(cfg.dim);
  return w;
}

template <typename T>
void append_params(ParamList<T>& out, const EncoderWeights<T>& w, const std::string& prefix) {
  auto attn = [&](const std::string& p, const AttentionWeights<T>& a) {
    append_params(out, p + ".q", a.q);
    append_params(out, p + ".k", a.k);
    append_params(out, p + ".v", a.v);
    append_params(out, p + ".o", a.o);
  };
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const auto& b = w.blocks[i];
    const std::string p = prefix + "." + std::to_string(i);
    if (b.variant == Variant::Divided) {
      attn(p + ".temporal", b.temporal);
      attn(p + ".spatial", b.spatial);
    } else {
      attn(p + ".joint", b.joint);
    }
    append_params(out, p + ".mlp.0", b.mlp0);
    append_params(out, p + ".mlp.1", b.mlp1);
    append_params(out, p + ".ln1", b.ln1);
    append_params(out, p + ".ln2", b.ln2);
    if (b.variant == Variant::Divided) append_params(out, p + ".ln3", b.ln3);
  }
  append_params(out, prefix + ".norm", w.norm);
}

namespace {

using Matrix = Eigen::MatrixXd;

// Head-averaged weights of group `group`: [n, n].
template <typename T>
Matrix head_mean(const Tensor<T>& weights, std::size_t group) {
  const std::size_t h = weights.dim(1), n = weights.dim(2);
  Matrix m = Matrix::Zero(Eigen::Index(n), Eigen::Index(n));
  const std::size_t base = group * h * n * n;
  for (std::size_t head = 0; head < h; ++head)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(Eigen::Index(i), Eigen::Index(j)) += weights[base + (head * n + i) * n + j];
  return m / double(h);
}

Matrix mix_identity(Matrix a) {
  a = 0.5 * a + 0.5 * Matrix::Identity(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double s = a.row(r).sum();
    if (s > 0) a.row(r) /= s;
  }
  return a;
}

// Full token-to-token matrix of one divided pass for batch item `b`.
template <typename T>
Matrix divided_matrix(const Tensor<T>& weights, const Grid& grid, bool has_cls, bool temporal, std::size_t b) {
  const std::size_t c = has_cls ? 1 : 0, f = grid.t, s = grid.spatial();
  const std::size_t total = c + grid.tokens();
  const std::size_t groups = temporal ? s : f, len = temporal ? f : s;
  if (weights.rank() != 4 || weights.dim(2) != c + len) fail(errc::kShape, "trace does not match the token grid");
  Matrix a = Matrix::Zero(Eigen::Index(total), Eigen::Index(total));
  auto global = [&](std::size_t group, std::size_t local) -> Eigen::Index {
    if (local < c) return 0;
    const std::size_t k = local - c;
    return Eigen::Index(c + (temporal ? k * s + group : group * s + k));
  };
  for (std::size_t g = 0; g < groups; ++g) {
    const Matrix m = head_mean(weights, b * groups + g);
    for (std::size_t i = 0; i < c + len; ++i)
      for (std::size_t j = 0; j < c + len; ++j) {
        const double v = m(Eigen::Index(i), Eigen::Index(j));
        if (i < c) {
          a(0, global(g, j)) += v / double(groups);
        } else {
          a(global(g, i), global(g, j)) += v;
        }
      }
  }
  return a;
}

}  // namespace

template <typename T>
Tensor<T> attention_rollout(const AttentionTrace<T>& trace, std::size_t batch_index) {
  if (trace.blocks.empty()) fail(errc::kPrecondition, "no attention trace recorded");
  if (batch_index >= trace.batch) fail(errc::kPrecondition, "batch index outside the trace");
  const std::size_t c = trace.has_cls ? 1 : 0, n = trace.grid.tokens();
  Matrix rollout = Matrix::Identity(Eigen::Index(c + n), Eigen::Index(c + n));
  for (const auto& bt : trace.blocks) {
    if (bt.joint.rank() > 0) {
      if (bt.joint.dim(2) != c + n) fail(errc::kShape, "trace does not match the token grid");
      rollout = mix_identity(head_mean(bt.joint, batch_index)) * rollout;
      continue;
    }
    if (bt.temporal.rank() == 0 || bt.spatial.rank() == 0) fail(errc::kPrecondition, "incomplete attention trace");
    rollout = mix_identity(divided_matrix(bt.temporal, trace.grid, trace.has_cls, true, batch_index)) * rollout;
    rollout = mix_identity(divided_matrix(bt.spatial, trace.grid, trace.has_cls, false, batch_index)) * rollout;
  }
  Eigen::VectorXd mass;
  if (trace.has_cls) {
    mass = rollout.row(0).segment(1, Eigen::Index(n)).transpose();
  } else {
    mass = rollout.colwise().mean().transpose();
  }
  const std::size_t per_slice = trace.grid.spatial();
  std::vector<T> out(n);
  for (std::size_t t = 0; t < trace.grid.t; ++t) {
    const auto slice_mass = mass.segment(Eigen::Index(t * per_slice), Eigen::Index(per_slice));
    const double peak = slice_mass.maxCoeff();
    for (std::size_t i = 0; i < per_slice; ++i)
      out[t * per_slice + i] = peak > 0 ? T(std::max(0.0, slice_mass(Eigen::Index(i))) / peak) : T(1);
  }
  return Tensor<T>({trace.grid.t, trace.grid.h, trace.grid.w}, std::move(out));
}

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != height * width) fail(errc::kPrecondition, "pgm pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(errc::kIo, "write failed for " + path.string());
}

template <typename T>
std::vector<std::filesystem::path> export_heatmaps(const Tensor<T>& heat, std::size_t tube_depth, std::size_t patch,
                                                   const std::filesystem::path& dir, const std::string& stem) {
  if (heat.rank() != 3) fail(errc::kShape, "heatmap must be [t,h,w], got " + shape_str(heat.shape()));
  std::filesystem::create_directories(dir);
  const std::size_t slices = heat.dim(0), gh = heat.dim(1), gw = heat.dim(2);
  const std::size_t ph = gh * patch, pw = gw * patch;
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < slices; ++t) {
    std::vector<std::uint8_t> pixels(ph * pw);
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x) {
        const double v = std::clamp(double(heat[(t * gh + y / patch) * gw + x / patch]), 0.0, 1.0);
        pixels[y * pw + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    for (std::size_t r = 0; r < tube_depth; ++r) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu.pgm", stem.c_str(), t * tube_depth + r);
      written.push_back(dir / name);
      write_pgm(written.back(), ph, pw, pixels);
    }
  }
  return written;
}

#define VSLR_INSTANTIATE(T)                                                                              \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                          const AttentionWeights<T>&, std::size_t, Tensor<T>*);           \
  template TokenBatch<T> divided_block(const TokenBatch<T>&, const BlockWeights<T>&, std::size_t,       \
                                       BlockTrace<T>*);                                                  \
  template TokenBatch<T> joint_block(const TokenBatch<T>&, const BlockWeights<T>&, std::size_t,         \
                                     BlockTrace<T>*);                                                    \
  template TokenBatch<T> encoder_forward(const TokenBatch<T>&, const EncoderWeights<T>&, std::size_t,   \
                                         AttentionTrace<T>*);                                            \
  template BlockWeights<T> init_block<T>(Variant, std::size_t, std::size_t, Rng&);                       \
  template EncoderWeights<T> init_encoder<T>(const EncoderConfig&, Rng&);                                \
  template void append_params(ParamList<T>&, const EncoderWeights<T>&, const std::string&);             \
  template Tensor<T> attention_rollout(const AttentionTrace<T>&, std::size_t);                           \
  template std::vector<std::filesystem::path> export_heatmaps(const Tensor<T>&, std::size_t, std::size_t, \
                                                              const std::filesystem::path&,              \
                                                              const std::string&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
