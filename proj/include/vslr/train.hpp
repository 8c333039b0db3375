#pragma once

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "vslr/mae.hpp"

namespace vslr {

const char* build_id();

enum class Pooling { Cls, Mean };

// Everything needed to rebuild a model from a checkpoint. Saved next to each
// checkpoint as "<checkpoint>.json".
struct ModelConfig {
  Variant variant = Variant::Divided;
  std::size_t frames = 16;
  std::size_t size = 224;
  std::size_t patch = 16;
  std::size_t tube_depth = 0;  // 0 = 1 for divided, 2 for joint
  std::size_t dim = 768;
  std::size_t depth = 12;
  std::size_t heads = 12;
  std::size_t mlp_ratio = 4;
  std::size_t classes = 100;
  // Pretraining only.
  std::size_t decoder_depth = 2;
  std::size_t decoder_dim = 0;
  std::size_t decoder_heads = 2;
  double mask_ratio = 0.9;

  // 8 frames of 32x32, patch 8, width 32, depth 3, 4 heads, 4 classes.
  static ModelConfig desk(Variant v);

  std::size_t tube() const { return tube_depth ? tube_depth : (variant == Variant::Divided ? 1 : 2); }
  Pooling pooling() const { return variant == Variant::Divided ? Pooling::Cls : Pooling::Mean; }
  EmbeddingConfig embedding() const;
  EncoderConfig encoder() const;
  MaeConfig mae() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Keys: variant, frames, size, patch, tube_depth, dim, depth, heads,
  // mlp_ratio, classes, decoder_depth, decoder_dim, decoder_heads, ratio.
  static ModelConfig from_kv(const KeyValueConfig& kv, ModelConfig base);
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);
void save_model_config(const std::filesystem::path& checkpoint, const ModelConfig& cfg);
ModelConfig load_model_config(const std::filesystem::path& checkpoint);

template <typename T>
struct ClassifierModel {
  ModelConfig cfg;
  EmbeddingWeights<T> embed;
  EncoderWeights<T> encoder;
  LinearWeights<T> head;  // [D, classes]
};

template <typename T>
ClassifierModel<T> init_classifier(const ModelConfig& cfg, Rng& rng);

// embed.*, enc.*, head.{w,b}
template <typename T>
ParamList<T> classifier_params(const ClassifierModel<T>& m);

// [B, F, 3, H, W] -> logits [B, classes]; CLS pooling for divided, token mean
// for joint.
template <typename T>
Tensor<T> classifier_forward(const ClassifierModel<T>& m, const Tensor<T>& x, AttentionTrace<T>* trace = nullptr);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels);

// Trainable set for fine-tuning the top `count` blocks plus final norm and
// head; nullopt (or count == depth) trains everything including embeddings.
// Flips requires_grad on every parameter accordingly.
template <typename T>
std::vector<Tensor<T>> freeze_layers(ClassifierModel<T>& m, std::optional<std::size_t> count);

// Classes ranked strictly ahead of `label` in a row of scores; ties go to the
// lower class index.
template <typename T>
std::size_t label_rank(std::span<const T> scores, std::size_t label);

// Fraction of rows whose label is among the top k, for each k.
template <typename T>
std::vector<double> topk_accuracy(const Tensor<T>& logits, const std::vector<std::size_t>& labels,
                                  const std::vector<std::size_t>& ks);

struct EvalReport {
  std::string split;
  std::size_t epoch = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> ks;
  std::vector<double> topk;
  std::vector<double> per_class;                   // NaN-free: classes with no samples report 0
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double loss = 0;
  double wall_seconds = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;

  double top(std::size_t k) const;
  // Wall-clock time is left out unless asked for, so reports can be compared
  // byte for byte.
  nlohmann::json to_json(bool with_timing = false) const;
};

// Deterministic pass over one split: test-phase preprocessing with the
// pipeline's seed, no gradients. K values above the class count are skipped.
template <typename T>
EvalReport evaluate(const ClassifierModel<T>& m, const DatasetManifest& manifest, Split split, VideoStore& store,
                    const PipelineConfig& pipeline, const std::vector<std::size_t>& ks = {1, 5, 10},
                    std::size_t batch = 8, std::size_t threads = 1);

struct TrainConfig {
  std::size_t batch = 4;
  std::size_t epochs = 15;
  double lr = 1e-4;
  std::size_t frames = 16;
  Sampling sampling = Sampling::Even;
  std::optional<std::size_t> fine_tuned_layers;  // nullopt = all
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Keys: batch, epochs, lr, frames, sampling, fine_tuned_layers ("all" or a
  // count), seed, threads.
  static TrainConfig from_kv(const KeyValueConfig& kv, TrainConfig base);
  void validate(std::size_t depth) const;
  nlohmann::json to_json() const;
};

template <typename T>
struct FinetuneResult {
  std::vector<EvalReport> reports;  // epoch 0 is the initialization
  std::size_t best_epoch = 0;
  ParamList<T> best;  // detached copies
  std::vector<StepLog> log;
};

// Requires a manifest without val instances. Each epoch shuffles the train
// split, trains on augmented clips, then evaluates the test split; the best
// epoch by top-1 wins, ties going to the earlier one. `model` ends at the
// last epoch's weights.
template <typename T>
FinetuneResult<T> finetune(ClassifierModel<T>& model, const DatasetManifest& manifest, VideoStore& store,
                           const TrainConfig& cfg, const PipelineConfig& pipeline,
                           const std::function<void(const StepLog&)>& on_step = {},
                           const std::function<void(const EvalReport&)>& on_epoch = {});

struct AblationRow {
  Variant variant = Variant::Divided;
  TrainConfig train;
};

struct AblationResult {
  AblationRow row;
  std::uint64_t seed = 0;
  std::optional<double> top1;
  std::string error;
};

// JSON array of {"batch", "epochs", "frames", "lr", "model", "fine_tuned_layers", "sampling"}.
std::vector<AblationRow> parse_ablation_grid(const nlohmann::json& j, const TrainConfig& defaults);

// Runs rows in order, each with seed derive_seed(seed, row index) and a fresh
// model built from `base` with the row's variant and frame count. A failing
// row is reported, not thrown.
template <typename T>
std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid, const ModelConfig& base,
                                         const DatasetManifest& manifest, VideoStore& store,
                                         const PipelineConfig& pipeline, std::uint64_t seed,
                                         const std::function<void(const AblationResult&)>& on_row = {});

// Batch, Epochs, Frames, Init. LR, Model, Fine-Tuned Layers, Sampling, Top-1 Acc. (%)
std::string ablation_csv(const std::vector<AblationResult>& rows, std::size_t depth);

}  // namespace vslr
