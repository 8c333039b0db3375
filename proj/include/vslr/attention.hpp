#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vslr/embedding.hpp"

namespace vslr {

template <typename T>
struct AttentionWeights {
  LinearWeights<T> q, k, v, o;
};

// Divided blocks use temporal, spatial and ln1..ln3; joint blocks use joint,
// ln1 and ln2.
template <typename T>
struct BlockWeights {
  Variant variant = Variant::Divided;
  AttentionWeights<T> temporal, spatial, joint;
  LinearWeights<T> mlp0, mlp1;
  NormWeights<T> ln1, ln2, ln3;
};

template <typename T>
struct EncoderWeights {
  std::vector<BlockWeights<T>> blocks;
  NormWeights<T> norm;
};

struct EncoderConfig {
  Variant variant = Variant::Divided;
  std::size_t depth = 12;
  std::size_t dim = 768;
  std::size_t heads = 12;
  std::size_t mlp_ratio = 4;

  void validate() const;
};

// Attention weights kept for visualization, detached from the graph. Shapes
// are [groups, heads, n, n]: temporal groups are (batch, spatial position),
// spatial groups are (batch, frame), joint groups are the batch.
template <typename T>
struct BlockTrace {
  Tensor<T> temporal, spatial, joint;
};

template <typename T>
struct AttentionTrace {
  std::vector<BlockTrace<T>> blocks;
  Grid grid;
  bool has_cls = false;
  std::size_t batch = 0;
};

// softmax(Q K^T / sqrt(D / heads)) V per head over [G, n, D] inputs, heads
// concatenated and output-projected. `trace` receives [G, heads, n, n].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& k_in, const Tensor<T>& v_in,
                               const AttentionWeights<T>& w, std::size_t heads, Tensor<T>* trace = nullptr);

// Pre-norm: temporal attention, spatial attention, MLP, each as x + f(LN(x)).
// A CLS token joins every temporal and spatial group; its updates are averaged
// over the groups of a pass.
template <typename T>
TokenBatch<T> divided_block(const TokenBatch<T>& tb, const BlockWeights<T>& w, std::size_t heads,
                            BlockTrace<T>* trace = nullptr);

template <typename T>
TokenBatch<T> joint_block(const TokenBatch<T>& tb, const BlockWeights<T>& w, std::size_t heads,
                          BlockTrace<T>* trace = nullptr);

// Blocks in order, then the final layer norm.
template <typename T>
TokenBatch<T> encoder_forward(const TokenBatch<T>& tb, const EncoderWeights<T>& w, std::size_t heads,
                              AttentionTrace<T>* trace = nullptr);

template <typename T>
BlockWeights<T> init_block(Variant variant, std::size_t dim, std::size_t hidden, Rng& rng);
template <typename T>
EncoderWeights<T> init_encoder(const EncoderConfig& cfg, Rng& rng);

// {prefix}.{i}.{temporal|spatial|joint}.{q,k,v,o}.{w,b}, {prefix}.{i}.mlp.{0,1}.{w,b},
// {prefix}.{i}.ln{1,2,3}.{w,b}, {prefix}.norm.{w,b}
template <typename T>
void append_params(ParamList<T>& out, const EncoderWeights<T>& w, const std::string& prefix = "enc");

// Head-averaged attention mixed with the identity (0.5 A + 0.5 I, rows
// renormalized) per pass, multiplied across depth. Reads the CLS row when
// present, otherwise the mean over rows, for one batch item. Result is
// [t, h, w] with every slice scaled to max 1.
template <typename T>
Tensor<T> attention_rollout(const AttentionTrace<T>& trace, std::size_t batch_index = 0);

// Binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels);

// One PGM per frame: every slice of `heat` covers `tube_depth` frames and each
// cell a patch x patch pixel block. Returns the written paths.
template <typename T>
std::vector<std::filesystem::path> export_heatmaps(const Tensor<T>& heat, std::size_t tube_depth, std::size_t patch,
                                                   const std::filesystem::path& dir,
                                                   const std::string& stem = "frame");

}  // namespace vslr
