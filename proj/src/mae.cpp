#include "vslr/mae.hpp"

#include <chrono>
#include <cmath>

#include "vslr/error.hpp"

namespace vslr {

std::size_t TubeMask::masked_cells() const {
  std::size_t n = 0;
  for (bool c : cells) n += c;
  return n;
}

std::vector<std::size_t> TubeMask::visible_tokens() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.tokens(); ++i)
    if (!masked(i)) out.push_back(i);
  return out;
}

std::vector<std::size_t> TubeMask::masked_tokens() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.tokens(); ++i)
    if (masked(i)) out.push_back(i);
  return out;
}

TubeMask make_tube_mask(const Grid& grid, double ratio, Rng& rng) {
  const std::size_t cells = grid.spatial();
  if (!(ratio > 0.0 && ratio < 1.0)) fail(errc::kConfig, "mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  const auto count = static_cast<std::size_t>(std::lround(ratio * double(cells)));
  if (count == 0) fail(errc::kConfig, "mask ratio " + std::to_string(ratio) + " masks no cell of " + std::to_string(cells));
  if (count >= cells) {
    fail(errc::kConfig, "mask ratio " + std::to_string(ratio) + " leaves no visible cell of " + std::to_string(cells));
  }
  TubeMask m{grid, std::vector<bool>(cells, false), ratio};
  const auto order = shuffled_indices(cells, rng);
  for (std::size_t i = 0; i < count; ++i) m.cells[order[i]] = true;
  return m;
}

EncoderConfig MaeConfig::decoder() const {
  return {Variant::Joint, decoder_depth, dec_dim(), decoder_heads, encoder.mlp_ratio};
}

void MaeConfig::validate() const {
  if (embed.variant != Variant::Joint || encoder.variant != Variant::Joint) {
    fail(errc::kConfig, "masked pretraining needs the joint variant");
  }
  if (embed.dim != encoder.dim) {
    fail(errc::kConfig, "embedding width " + std::to_string(embed.dim) + " differs from encoder width " +
                            std::to_string(encoder.dim));
  }
  encoder.validate();
  if (decoder_depth == 0 || decoder_depth >= encoder.depth) {
    fail(errc::kConfig, "decoder depth " + std::to_string(decoder_depth) + " must be in [1, encoder depth " +
                            std::to_string(encoder.depth) + ")");
  }
  decoder().validate();
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail(errc::kConfig, "mask ratio must lie in (0, 1)");
  (void)embed.grid();
}

template <typename T>
MaeWeights<T> init_mae(const MaeConfig& cfg, Rng& rng) {
  cfg.validate();
  MaeWeights<T> w;
  w.embed = init_embedding<T>(cfg.embed, rng);
  w.encoder = init_encoder<T>(cfg.encoder, rng);
  const std::size_t dd = cfg.dec_dim();
  w.enc_to_dec = init_linear<T>(cfg.embed.dim, dd, rng);
  w.mask_token = truncated_normal<T>({dd}, kInitStddev, rng);
  w.dec_pos = truncated_normal<T>({cfg.embed.grid().tokens(), dd}, kInitStddev, rng);
  w.decoder = init_encoder<T>(cfg.decoder(), rng);
  w.head = init_linear<T>(dd, cfg.embed.patch_dim(), rng);
  return w;
}

template <typename T>
ParamList<T> mae_params(const MaeWeights<T>& w) {
  ParamList<T> out;
  append_params(out, w.embed);
  append_params(out, w.encoder, "enc");
  append_params(out, "mae.enc_to_dec", w.enc_to_dec);
  out.push_back({"mae.mask_token", w.mask_token});
  out.push_back({"mae.dec_pos", w.dec_pos});
  append_params(out, w.decoder, "dec");
  append_params(out, "mae.head", w.head);
  return out;
}

template <typename T>
Tensor<T> normalize_cubes(const Tensor<T>& cubes, double eps) {
  if (cubes.rank() == 0) fail(errc::kShape, "normalize_cubes needs at least one axis");
  const std::size_t p = cubes.shape().back();
  std::vector<T> out(cubes.numel());
  const auto in = cubes.data();
  for (std::size_t r = 0; r * p < in.size(); ++r) {
    double mu = 0, var = 0;
    for (std::size_t k = 0; k < p; ++k) mu += in[r * p + k];
    mu /= double(p);
    for (std::size_t k = 0; k < p; ++k) var += (in[r * p + k] - mu) * (in[r * p + k] - mu);
    const double sd = std::sqrt(var / double(p));
    for (std::size_t k = 0; k < p; ++k) out[r * p + k] = static_cast<T>((in[r * p + k] - mu) / (sd + eps));
  }
  return Tensor<T>(cubes.shape(), std::move(out));
}

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    fail(errc::kShape, "prediction " + shape_str(pred.shape()) + " and target " + shape_str(target.shape()) +
                           " differ");
  }
  const Tensor<T> d = sub(pred, target);
  return mean(mul(d, d));
}

template <typename T>
MaeOutput<T> mae_forward(const Tensor<T>& x, const std::vector<TubeMask>& masks, const MaeConfig& cfg,
                         const MaeWeights<T>& w) {
  const Tensor<T> px = x.rank() == 4 ? reshape(x, {1, x.dim(0), x.dim(1), x.dim(2), x.dim(3)}) : x;
  TokenBatch<T> tb = cube_embed_3d(px, w.embed.proj, cfg.embed.tube_depth, cfg.embed.patch);
  tb = add_positional(tb, w.embed.pos);
  const std::size_t b = tb.batch(), n = tb.grid.tokens();
  if (masks.size() != b) {
    fail(errc::kShape, std::to_string(masks.size()) + " masks for a batch of " + std::to_string(b));
  }
  std::vector<std::vector<std::size_t>> visible(b), hidden(b), unshuffle(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (!(masks[i].grid == tb.grid)) fail(errc::kShape, "mask grid does not match the token grid");
    visible[i] = masks[i].visible_tokens();
    hidden[i] = masks[i].masked_tokens();
    if (visible[i].size() != visible[0].size()) fail(errc::kShape, "masks in a batch must hide the same count");
    unshuffle[i].resize(n);
    for (std::size_t j = 0; j < visible[i].size(); ++j) unshuffle[i][visible[i][j]] = j;
    for (std::size_t j = 0; j < hidden[i].size(); ++j) unshuffle[i][hidden[i][j]] = visible[i].size() + j;
  }

  MaeOutput<T> out;
  const TokenBatch<T> enc =
      encoder_forward(TokenBatch<T>{gather_tokens(tb.tokens, visible), tb.grid, false}, w.encoder, cfg.encoder.heads);
  out.latent = enc.tokens;

  const std::size_t dd = cfg.dec_dim(), nm = hidden[0].size();
  const Tensor<T> projected = apply(w.enc_to_dec, out.latent);
  const Tensor<T> fill = repeat(repeat(reshape(w.mask_token, {1, 1, dd}), 0, b), 1, nm);
  const Tensor<T> full = gather_tokens(concat<T>({projected, fill}, 1), unshuffle);
  const TokenBatch<T> dec =
      encoder_forward(TokenBatch<T>{add(full, w.dec_pos), tb.grid, false}, w.decoder, cfg.decoder_heads);
  out.pred = apply(w.head, gather_tokens(dec.tokens, hidden));

  {
    NoGradGuard guard;
    const Tensor<T> cubes = flatten_cubes(px.detach(), cfg.embed.tube_depth, cfg.embed.patch);
    out.target = normalize_cubes(gather_tokens(cubes, hidden));
  }
  out.loss = reconstruction_loss(out.pred, out.target);
  return out;
}

template <typename T>
std::vector<StepLog> pretrain(MaeWeights<T>& w, const MaeConfig& cfg, VideoStore& store,
                              const std::vector<std::string>& ids, const PipelineConfig& pipeline,
                              const PretrainOptions& opt, const std::function<void(const StepLog&)>& on_step) {
  cfg.validate();
  pipeline.validate();
  if (pipeline.target_frames != cfg.embed.frames || pipeline.crop != cfg.embed.height ||
      pipeline.crop != cfg.embed.width) {
    fail(errc::kConfig, "pipeline clips (" + std::to_string(pipeline.target_frames) + " frames, crop " +
                            std::to_string(pipeline.crop) + ") do not match the model input");
  }
  if (opt.batch == 0 || ids.size() < opt.batch) {
    fail(errc::kConfig, "batch " + std::to_string(opt.batch) + " needs at least that many videos, have " +
                            std::to_string(ids.size()));
  }
  const ParamList<T> params = mae_params(w);
  std::vector<Tensor<T>> tensors;
  for (const auto& p : params) tensors.push_back(p.tensor);
  Adam<T> adam(tensors, opt.adam);

  const Grid grid = cfg.embed.grid();
  Rng order_rng(derive_seed(pipeline.seed, "pretrain-order"));
  std::uint64_t epoch = 0;
  std::vector<std::size_t> order = shuffled_indices(ids.size(), order_rng);
  std::size_t pos = 0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<StepLog> log;
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    if (pos + opt.batch > ids.size()) {
      ++epoch;
      order = shuffled_indices(ids.size(), order_rng);
      pos = 0;
    }
    std::vector<std::string> batch_ids;
    for (std::size_t i = 0; i < opt.batch; ++i) batch_ids.push_back(ids[order[pos + i]]);
    pos += opt.batch;

    ClipBatch cb = load_clips(store, batch_ids, pipeline, opt.augment ? Phase::Train : Phase::Test, epoch, opt.threads);
    std::vector<TubeMask> masks;
    for (auto& r : cb.rngs) masks.push_back(make_tube_mask(grid, cfg.mask_ratio, r));
    const Tensor<T> x = stack_clips<T>(cb.clips);

    adam.zero_grad();
    const MaeOutput<T> out = mae_forward(x, masks, cfg, w);
    const double loss = out.loss.item();
    if (!std::isfinite(loss)) fail(errc::kDivergence, "loss became non-finite at step " + std::to_string(step));
    backward(out.loss);
    adam.step();

    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log.push_back({step, loss, opt.adam.lr, ms});
    if (on_step) on_step(log.back());
    if (!opt.checkpoint.empty() && opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0 && step < opt.steps) {
      save_checkpoint(opt.checkpoint, params);
    }
  }
  if (!opt.checkpoint.empty()) save_checkpoint(opt.checkpoint, params);
  return log;
}

#define VSLR_INSTANTIATE(T)                                                                                   \
  template MaeWeights<T> init_mae<T>(const MaeConfig&, Rng&);                                                 \
  template ParamList<T> mae_params(const MaeWeights<T>&);                                                     \
  template Tensor<T> normalize_cubes(const Tensor<T>&, double);                                               \
  template Tensor<T> reconstruction_loss(const Tensor<T>&, const Tensor<T>&);                                 \
  template MaeOutput<T> mae_forward(const Tensor<T>&, const std::vector<TubeMask>&, const MaeConfig&,         \
                                    const MaeWeights<T>&);                                                    \
  template std::vector<StepLog> pretrain(MaeWeights<T>&, const MaeConfig&, VideoStore&,                       \
                                         const std::vector<std::string>&, const PipelineConfig&,              \
                                         const PretrainOptions&, const std::function<void(const StepLog&)>&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
