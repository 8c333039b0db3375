#include "vslr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vslr/error.hpp"

namespace vslr {

const char* build_id() { return VSLR_BUILD_ID; }

namespace {

std::optional<std::size_t> get_count(const KeyValueConfig& kv, const std::string& key) {
  const auto v = kv.get_int(key);
  if (!v) return std::nullopt;
  if (*v < 0) fail(errc::kConfig, key + " must not be negative, got " + std::to_string(*v));
  return static_cast<std::size_t>(*v);
}

std::optional<std::size_t> parse_layers(const std::string& s) {
  if (s == "all") return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  fail(errc::kConfig, "fine_tuned_layers must be 'all' or a count, got '" + s + "'");
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

ModelConfig ModelConfig::desk(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.frames = 8;
  c.size = 32;
  c.patch = 8;
  c.dim = 32;
  c.depth = 3;
  c.heads = 4;
  c.classes = 4;
  c.mask_ratio = 0.75;
  return c;
}

EmbeddingConfig ModelConfig::embedding() const {
  return {variant, patch, tube(), dim, frames, size, size};
}

EncoderConfig ModelConfig::encoder() const { return {variant, depth, dim, heads, mlp_ratio}; }

MaeConfig ModelConfig::mae() const {
  MaeConfig m;
  m.embed = embedding();
  m.encoder = encoder();
  m.decoder_depth = decoder_depth;
  m.decoder_dim = decoder_dim;
  m.decoder_heads = decoder_heads;
  m.mask_ratio = mask_ratio;
  return m;
}

void ModelConfig::validate() const {
  if (classes == 0) fail(errc::kConfig, "classes must be at least 1");
  (void)embedding().grid();
  encoder().validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", std::string(variant_name(variant))},
          {"frames", frames},
          {"size", size},
          {"patch", patch},
          {"tube_depth", tube()},
          {"dim", dim},
          {"depth", depth},
          {"heads", heads},
          {"mlp_ratio", mlp_ratio},
          {"classes", classes},
          {"decoder_depth", decoder_depth},
          {"decoder_dim", decoder_dim},
          {"decoder_heads", decoder_heads},
          {"ratio", mask_ratio}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.frames = j.at("frames").get<std::size_t>();
    c.size = j.at("size").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.tube_depth = j.at("tube_depth").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
    c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
    c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
    c.mask_ratio = j.value("ratio", c.mask_ratio);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::kConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv, ModelConfig base) {
  if (auto v = kv.get("variant")) base.variant = parse_variant(*v);
  if (auto v = get_count(kv, "frames")) base.frames = *v;
  if (auto v = get_count(kv, "size")) base.size = *v;
  if (auto v = get_count(kv, "patch")) base.patch = *v;
  if (auto v = get_count(kv, "tube_depth")) base.tube_depth = *v;
  if (auto v = get_count(kv, "dim")) base.dim = *v;
  if (auto v = get_count(kv, "depth")) base.depth = *v;
  if (auto v = get_count(kv, "heads")) base.heads = *v;
  if (auto v = get_count(kv, "mlp_ratio")) base.mlp_ratio = *v;
  if (auto v = get_count(kv, "classes")) base.classes = *v;
  if (auto v = get_count(kv, "decoder_depth")) base.decoder_depth = *v;
  if (auto v = get_count(kv, "decoder_dim")) base.decoder_dim = *v;
  if (auto v = get_count(kv, "decoder_heads")) base.decoder_heads = *v;
  if (auto v = kv.get_double("ratio")) base.mask_ratio = *v;
  return base;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_model_config(const std::filesystem::path& checkpoint, const ModelConfig& cfg) {
  std::ofstream out(sidecar_path(checkpoint));
  if (!out) fail(errc::kIo, "cannot write " + sidecar_path(checkpoint).string());
  out << cfg.to_json().dump(2) << "\n";
}

ModelConfig load_model_config(const std::filesystem::path& checkpoint) {
  const auto path = sidecar_path(checkpoint);
  std::ifstream in(path);
  if (!in) fail(errc::kIo, "missing model config " + path.string());
  try {
    return ModelConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(errc::kConfig, path.string() + ": " + e.what());
  }
}

template <typename T>
ClassifierModel<T> init_classifier(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ClassifierModel<T> m;
  m.cfg = cfg;
  m.embed = init_embedding<T>(cfg.embedding(), rng);
  m.encoder = init_encoder<T>(cfg.encoder(), rng);
  m.head = init_linear<T>(cfg.dim, cfg.classes, rng);
  return m;
}

template <typename T>
ParamList<T> classifier_params(const ClassifierModel<T>& m) {
  ParamList<T> out;
  append_params(out, m.embed);
  append_params(out, m.encoder, "enc");
  append_params(out, "head", m.head);
  return out;
}

template <typename T>
Tensor<T> classifier_forward(const ClassifierModel<T>& m, const Tensor<T>& x, AttentionTrace<T>* trace) {
  const TokenBatch<T> tokens = embed(x, m.cfg.embedding(), m.embed);
  const TokenBatch<T> enc = encoder_forward(tokens, m.encoder, m.cfg.heads, trace);
  const std::size_t b = enc.batch(), d = m.cfg.dim;
  const Tensor<T> pooled =
      m.cfg.pooling() == Pooling::Cls ? reshape(slice(enc.tokens, 1, 0, 1), {b, d}) : mean(enc.tokens, 1);
  return apply(m.head, pooled);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) fail(errc::kShape, "cross_entropy: logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    fail(errc::kShape, "cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
  }
  std::vector<double> probs(b * c);
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      fail(errc::kShape, "label " + std::to_string(labels[i]) + " out of range for " + std::to_string(c) + " classes");
    }
    double mx = logits[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, double(logits[i * c + j]));
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(double(logits[i * c + j]) - mx);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(double(logits[i * c + j]) - mx) / z;
    total += std::log(z) + mx - double(logits[i * c + labels[i]]);
  }
  return make_result<T>("cross_entropy", {}, {static_cast<T>(total / double(b))}, {logits},
                        [logits, labels, probs = std::move(probs), b, c](std::span<const T> g) {
                          if (!logits.requires_grad()) return;
                          auto& gx = logits.grad_buffer();
                          const double s = double(g[0]) / double(b);
                          for (std::size_t i = 0; i < b; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                              const double p = probs[i * c + j] - (j == labels[i] ? 1.0 : 0.0);
                              gx[i * c + j] += static_cast<T>(s * p);
                            }
                        });
}

template <typename T>
std::vector<Tensor<T>> freeze_layers(ClassifierModel<T>& m, std::optional<std::size_t> count) {
  const std::size_t depth = m.encoder.blocks.size();
  if (count && *count == 0) fail(errc::kConfig, "fine_tuned_layers must be at least 1");
  if (count && *count > depth) {
    fail(errc::kConfig, "fine_tuned_layers " + std::to_string(*count) + " exceeds encoder depth " + std::to_string(depth));
  }
  const bool all = !count || *count == depth;
  const std::size_t first = all ? 0 : depth - *count;
  std::vector<Tensor<T>> trainable;
  for (auto& p : classifier_params(m)) {
    bool train = all;
    if (!all) {
      if (p.name.rfind("head.", 0) == 0 || p.name.rfind("enc.norm.", 0) == 0) {
        train = true;
      } else if (p.name.rfind("enc.", 0) == 0) {
        const std::size_t block = std::stoul(p.name.substr(4, p.name.find('.', 4) - 4));
        train = block >= first;
      }
    }
    p.tensor.set_requires_grad(train);
    if (!train) p.tensor.zero_grad();
    if (train) trainable.push_back(p.tensor);
  }
  return trainable;
}

template <typename T>
std::size_t label_rank(std::span<const T> scores, std::size_t label) {
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    ahead += scores[j] > scores[label] || (scores[j] == scores[label] && j < label);
  return ahead;
}

template <typename T>
std::vector<double> topk_accuracy(const Tensor<T>& logits, const std::vector<std::size_t>& labels,
                                  const std::vector<std::size_t>& ks) {
  if (logits.rank() != 2) fail(errc::kShape, "topk_accuracy: logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) fail(errc::kShape, "topk_accuracy: label count does not match the batch");
  if (b == 0) fail(errc::kPrecondition, "topk_accuracy: empty batch");
  for (auto k : ks)
    if (k == 0 || k > c) fail(errc::kConfig, "top-" + std::to_string(k) + " needs 1 <= K <= " + std::to_string(c));
  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) fail(errc::kShape, "label " + std::to_string(labels[i]) + " out of range");
    const std::size_t r = label_rank<T>(logits.data().subspan(i * c, c), labels[i]);
    for (std::size_t q = 0; q < ks.size(); ++q) hits[q] += r < ks[q];
  }
  std::vector<double> out;
  for (auto h : hits) out.push_back(double(h) / double(b));
  return out;
}

double EvalReport::top(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return topk[i];
  fail(errc::kPrecondition, "report has no top-" + std::to_string(k));
}

nlohmann::json EvalReport::to_json(bool with_timing) const {
  nlohmann::json j;
  j["split"] = split;
  j["epoch"] = epoch;
  j["samples"] = samples;
  nlohmann::json top = nlohmann::json::object();
  for (std::size_t i = 0; i < ks.size(); ++i) top["top" + std::to_string(ks[i])] = topk[i];
  j["accuracy"] = top;
  j["loss"] = loss;
  j["per_class"] = per_class;
  j["confusion"] = confusion;
  j["seed"] = seed;
  j["build_id"] = build_id();
  j["config"] = config;
  if (with_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

template <typename T>
EvalReport evaluate(const ClassifierModel<T>& m, const DatasetManifest& manifest, Split split, VideoStore& store,
                    const PipelineConfig& pipeline, const std::vector<std::size_t>& ks, std::size_t batch,
                    std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t c = manifest.num_classes();
  if (m.cfg.classes != c) {
    fail(errc::kHeadClassMismatch, "model head has " + std::to_string(m.cfg.classes) + " classes, manifest has " +
                                       std::to_string(c));
  }
  const auto items = manifest.split_instances(split);
  if (items.empty()) fail(errc::kPrecondition, std::string("split '") + std::string(split_name(split)) + "' is empty");
  if (batch == 0) fail(errc::kConfig, "evaluation batch must be at least 1");

  EvalReport r;
  r.split = split_name(split);
  r.samples = items.size();
  r.seed = pipeline.seed;
  for (auto k : ks)
    if (k >= 1 && k <= c) r.ks.push_back(k);
  std::vector<std::size_t> hits(r.ks.size(), 0), per_class_total(c, 0), per_class_hit(c, 0);
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  double loss_sum = 0;

  NoGradGuard no_grad;
  for (std::size_t pos = 0; pos < items.size(); pos += batch) {
    const std::size_t n = std::min(batch, items.size() - pos);
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back(items[pos + i].video_id);
      labels.push_back(static_cast<std::size_t>(items[pos + i].gloss));
    }
    const ClipBatch cb = load_clips(store, ids, pipeline, Phase::Test, 0, threads);
    const Tensor<T> logits = classifier_forward(m, stack_clips<T>(cb.clips));
    loss_sum += double(cross_entropy(logits, labels).item()) * double(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = logits.data().subspan(i * c, c);
      const std::size_t rank = label_rank<T>(row, labels[i]);
      for (std::size_t q = 0; q < r.ks.size(); ++q) hits[q] += rank < r.ks[q];
      std::size_t pred = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (row[j] > row[pred]) pred = j;
      ++r.confusion[labels[i]][pred];
      ++per_class_total[labels[i]];
      per_class_hit[labels[i]] += pred == labels[i];
    }
  }
  for (auto h : hits) r.topk.push_back(double(h) / double(items.size()));
  for (std::size_t k = 0; k < c; ++k)
    r.per_class.push_back(per_class_total[k] ? double(per_class_hit[k]) / double(per_class_total[k]) : 0.0);
  r.loss = loss_sum / double(items.size());
  r.config = {{"model", m.cfg.to_json()},
              {"target_frames", pipeline.target_frames},
              {"sampling", std::string(sampling_name(pipeline.sampling))},
              {"crop", pipeline.crop}};
  r.wall_seconds = elapsed_ms(start) / 1000.0;
  return r;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv, TrainConfig base) {
  if (auto v = get_count(kv, "batch")) base.batch = *v;
  if (auto v = get_count(kv, "epochs")) base.epochs = *v;
  if (auto v = kv.get_double("lr")) base.lr = *v;
  if (auto v = get_count(kv, "frames")) base.frames = *v;
  if (auto v = kv.get("sampling")) base.sampling = parse_sampling(*v);
  if (auto v = kv.get("fine_tuned_layers")) base.fine_tuned_layers = parse_layers(*v);
  if (auto v = get_count(kv, "seed")) base.seed = *v;
  if (auto v = get_count(kv, "threads")) base.threads = *v;
  return base;
}

void TrainConfig::validate(std::size_t depth) const {
  if (batch == 0) fail(errc::kConfig, "batch must be at least 1");
  if (frames == 0) fail(errc::kConfig, "frames must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(errc::kConfig, "lr must be positive");
  if (fine_tuned_layers && (*fine_tuned_layers == 0 || *fine_tuned_layers > depth)) {
    fail(errc::kConfig, "fine_tuned_layers " + std::to_string(*fine_tuned_layers) + " must be in [1, " +
                            std::to_string(depth) + "]");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch", batch},
          {"epochs", epochs},
          {"lr", lr},
          {"frames", frames},
          {"sampling", std::string(sampling_name(sampling))},
          {"fine_tuned_layers", fine_tuned_layers ? nlohmann::json(*fine_tuned_layers) : nlohmann::json("all")},
          {"seed", seed}};
}

namespace {

template <typename T>
ParamList<T> snapshot(const ParamList<T>& params) {
  ParamList<T> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.detach()});
  return out;
}

}  // namespace

template <typename T>
FinetuneResult<T> finetune(ClassifierModel<T>& model, const DatasetManifest& manifest, VideoStore& store,
                           const TrainConfig& cfg, const PipelineConfig& pipeline,
                           const std::function<void(const StepLog&)>& on_step,
                           const std::function<void(const EvalReport&)>& on_epoch) {
  cfg.validate(model.cfg.depth);
  if (manifest.count(Split::Val) != 0) {
    fail(errc::kPrecondition, "manifest still has val instances; merge them into train first");
  }
  const auto train = manifest.split_instances(Split::Train);
  if (train.empty()) fail(errc::kPrecondition, "split 'train' is empty");
  if (manifest.count(Split::Test) == 0) fail(errc::kPrecondition, "split 'test' is empty");
  PipelineConfig pipe = pipeline;
  pipe.target_frames = cfg.frames;
  pipe.sampling = cfg.sampling;
  pipe.seed = cfg.seed;
  if (pipe.sampling == Sampling::Even) pipe.start_frame.reset();
  pipe.validate();
  if (model.cfg.frames != cfg.frames || model.cfg.size != pipe.crop) {
    fail(errc::kConfig, "model expects " + std::to_string(model.cfg.frames) + " frames of " +
                            std::to_string(model.cfg.size) + " px, training feeds " + std::to_string(cfg.frames) +
                            " of " + std::to_string(pipe.crop));
  }

  const std::vector<Tensor<T>> trainable = freeze_layers(model, cfg.fine_tuned_layers);
  Adam<T> adam(trainable, AdamConfig{.lr = cfg.lr});
  const ParamList<T> params = classifier_params(model);

  FinetuneResult<T> result;
  auto report = [&](std::size_t epoch) {
    EvalReport r = evaluate(model, manifest, Split::Test, store, pipe, {1, 5, 10}, 8, cfg.threads);
    r.epoch = epoch;
    r.config["train"] = cfg.to_json();
    if (on_epoch) on_epoch(r);
    const bool better = result.reports.empty() || r.top(1) > result.reports[result.best_epoch].top(1);
    result.reports.push_back(std::move(r));
    if (better) {
      result.best_epoch = epoch;
      result.best = snapshot(params);
    }
  };
  report(0);

  const auto start = std::chrono::steady_clock::now();
  Rng order_rng(derive_seed(cfg.seed, "finetune-order"));
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), order_rng);
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - pos);
      std::vector<std::string> ids;
      std::vector<std::size_t> labels;
      for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(train[order[pos + i]].video_id);
        labels.push_back(static_cast<std::size_t>(train[order[pos + i]].gloss));
      }
      const ClipBatch cb = load_clips(store, ids, pipe, Phase::Train, epoch, cfg.threads);
      adam.zero_grad();
      const Tensor<T> loss = cross_entropy(classifier_forward(model, stack_clips<T>(cb.clips)), labels);
      const double value = loss.item();
      if (!std::isfinite(value)) fail(errc::kDivergence, "loss became non-finite at step " + std::to_string(step + 1));
      backward(loss);
      adam.step();
      result.log.push_back({++step, value, cfg.lr, elapsed_ms(start)});
      if (on_step) on_step(result.log.back());
    }
    report(epoch);
  }
  return result;
}

std::vector<AblationRow> parse_ablation_grid(const nlohmann::json& j, const TrainConfig& defaults) {
  if (!j.is_array() || j.empty()) fail(errc::kConfig, "ablation grid must be a non-empty JSON array");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string where = "grid row " + std::to_string(i) + ": ";
    if (!e.is_object()) fail(errc::kConfig, where + "expected an object");
    AblationRow row;
    row.train = defaults;
    try {
      for (const auto& [key, value] : e.items()) {
        if (key == "batch") row.train.batch = value.get<std::size_t>();
        else if (key == "epochs") row.train.epochs = value.get<std::size_t>();
        else if (key == "frames") row.train.frames = value.get<std::size_t>();
        else if (key == "lr") row.train.lr = value.get<double>();
        else if (key == "model") row.variant = parse_variant(value.get<std::string>());
        else if (key == "sampling") row.train.sampling = parse_sampling(value.get<std::string>());
        else if (key == "fine_tuned_layers")
          row.train.fine_tuned_layers = value.is_string() ? parse_layers(value.get<std::string>())
                                                          : std::optional<std::size_t>(value.get<std::size_t>());
        else fail(errc::kConfig, where + "unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& ex) {
      fail(errc::kConfig, where + ex.what());
    }
    rows.push_back(row);
  }
  return rows;
}

template <typename T>
std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid, const ModelConfig& base,
                                         const DatasetManifest& manifest, VideoStore& store,
                                         const PipelineConfig& pipeline, std::uint64_t seed,
                                         const std::function<void(const AblationResult&)>& on_row) {
  if (grid.empty()) fail(errc::kConfig, "ablation grid is empty");
  std::vector<AblationResult> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    AblationResult r{grid[i], derive_seed(seed, std::uint64_t(i)), std::nullopt, ""};
    try {
      ModelConfig mc = base;
      mc.variant = grid[i].variant;
      mc.frames = grid[i].train.frames;
      mc.tube_depth = 0;
      Rng init(derive_seed(r.seed, "init"));
      ClassifierModel<T> model = init_classifier<T>(mc, init);
      TrainConfig tc = grid[i].train;
      tc.seed = r.seed;
      const FinetuneResult<T> fr = finetune(model, manifest, store, tc, pipeline);
      r.top1 = fr.reports[fr.best_epoch].top(1);
    } catch (const Error& e) {
      r.error = e.kind() + ": " + e.what();
    }
    if (on_row) on_row(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationResult>& rows, std::size_t depth) {
  std::ostringstream out;
  out << "Batch,Epochs,Frames,Init. LR,Model,Fine-Tuned Layers,Sampling,Top-1 Acc. (%)\n";
  for (const auto& r : rows) {
    const TrainConfig& t = r.row.train;
    char lr[32], acc[32];
    std::snprintf(lr, sizeof lr, "%g", t.lr);
    out << t.batch << ',' << t.epochs << ',' << t.frames << ',' << lr << ',' << variant_name(r.row.variant) << ','
        << t.fine_tuned_layers.value_or(depth) << ',' << (t.sampling == Sampling::Even ? "Even" : "Consec.") << ',';
    if (r.top1) {
      std::snprintf(acc, sizeof acc, "%.2f", *r.top1 * 100.0);
      out << acc;
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << "\"error: " << msg << '"';
    }
    out << '\n';
  }
  return out.str();
}

#define VSLR_INSTANTIATE(T)                                                                                        \
  template ClassifierModel<T> init_classifier<T>(const ModelConfig&, Rng&);                                        \
  template ParamList<T> classifier_params(const ClassifierModel<T>&);                                              \
  template Tensor<T> classifier_forward(const ClassifierModel<T>&, const Tensor<T>&, AttentionTrace<T>*);          \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<std::size_t>&);                             \
  template std::vector<Tensor<T>> freeze_layers(ClassifierModel<T>&, std::optional<std::size_t>);                  \
  template std::size_t label_rank<T>(std::span<const T>, std::size_t);                                             \
  template std::vector<double> topk_accuracy(const Tensor<T>&, const std::vector<std::size_t>&,                    \
                                             const std::vector<std::size_t>&);                                     \
  template EvalReport evaluate(const ClassifierModel<T>&, const DatasetManifest&, Split, VideoStore&,              \
                               const PipelineConfig&, const std::vector<std::size_t>&, std::size_t, std::size_t);  \
  template FinetuneResult<T> finetune(ClassifierModel<T>&, const DatasetManifest&, VideoStore&, const TrainConfig&, \
                                      const PipelineConfig&, const std::function<void(const StepLog&)>&,           \
                                      const std::function<void(const EvalReport&)>&);                              \
  template std::vector<AblationResult> run_ablation<T>(const std::vector<AblationRow>&, const ModelConfig&,        \
                                                       const DatasetManifest&, VideoStore&, const PipelineConfig&, \
                                                       std::uint64_t,                                              \
                                                       const std::function<void(const AblationResult&)>&);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr
