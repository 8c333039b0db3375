#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vslr/attention.hpp"
#include "vslr/dataset.hpp"
#include "vslr/optim.hpp"

namespace vslr {

// The same spatial cells are masked in every temporal slice.
struct TubeMask {
  Grid grid;
  std::vector<bool> cells;  // [h * w], true = masked
  double ratio = 0;

  std::size_t masked_cells() const;
  std::size_t visible_cells() const { return grid.spatial() - masked_cells(); }
  bool masked(std::size_t token) const { return cells[token % grid.spatial()]; }
  // Token indices in grid order.
  std::vector<std::size_t> visible_tokens() const;
  std::vector<std::size_t> masked_tokens() const;
};

// Masks exactly round(ratio * h * w) cells chosen uniformly. Requires at least
// one masked and one visible cell.
TubeMask make_tube_mask(const Grid& grid, double ratio, Rng& rng);

struct MaeConfig {
  EmbeddingConfig embed{.variant = Variant::Joint, .tube_depth = 2};
  EncoderConfig encoder{.variant = Variant::Joint};
  std::size_t decoder_depth = 2;
  std::size_t decoder_dim = 0;  // 0 = half the encoder width
  std::size_t decoder_heads = 2;
  double mask_ratio = 0.9;

  std::size_t dec_dim() const { return decoder_dim ? decoder_dim : embed.dim / 2; }
  EncoderConfig decoder() const;
  void validate() const;
};

template <typename T>
struct MaeWeights {
  EmbeddingWeights<T> embed;
  EncoderWeights<T> encoder;
  LinearWeights<T> enc_to_dec;
  Tensor<T> mask_token;  // [D_dec]
  Tensor<T> dec_pos;     // [N, D_dec]
  EncoderWeights<T> decoder;
  LinearWeights<T> head;  // [D_dec, 3 t p p]
};

template <typename T>
MaeWeights<T> init_mae(const MaeConfig& cfg, Rng& rng);

// embed.*, enc.*, mae.enc_to_dec.*, mae.mask_token, mae.dec_pos, dec.*, mae.head.*
template <typename T>
ParamList<T> mae_params(const MaeWeights<T>& w);

// Per-cube normalization over the last axis: (x - mean) / (std + eps).
template <typename T>
Tensor<T> normalize_cubes(const Tensor<T>& cubes, double eps = 1e-6);

// Mean squared error; shapes must match.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
struct MaeOutput {
  Tensor<T> latent;  // encoder output [B, visible tokens, D]
  Tensor<T> pred;    // [B, masked tokens, 3 t p p]
  Tensor<T> target;  // normalized cubes at the masked positions
  Tensor<T> loss;
};

// x is [B, F, 3, H, W] with one mask per batch item; all masks share a ratio
// and grid. Only visible tokens enter the encoder.
template <typename T>
MaeOutput<T> mae_forward(const Tensor<T>& x, const std::vector<TubeMask>& masks, const MaeConfig& cfg,
                         const MaeWeights<T>& w);

struct PretrainOptions {
  std::size_t steps = 200;
  std::size_t batch = 4;
  AdamConfig adam{.lr = 1e-3};
  std::size_t threads = 1;
  // Random crop and flip per clip; off uses the center crop.
  bool augment = false;
  // When set, parameters are saved every `checkpoint_every` steps (0 = only at
  // the end) and after the last step.
  std::filesystem::path checkpoint;
  std::size_t checkpoint_every = 0;
};

// Clips are drawn from `ids` in a shuffled order per epoch and masked from each clip's own stream. Throws a
// divergence error on a non-finite loss.
template <typename T>
std::vector<StepLog> pretrain(MaeWeights<T>& w, const MaeConfig& cfg, VideoStore& store,
                              const std::vector<std::string>& ids, const PipelineConfig& pipeline,
                              const PretrainOptions& opt, const std::function<void(const StepLog&)>& on_step = {});

}  // namespace vslr
