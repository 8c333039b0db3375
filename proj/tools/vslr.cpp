#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "vslr/error.hpp"
#include "vslr/train.hpp"

namespace fs = std::filesystem;
using namespace vslr;

namespace {

struct Flag {
  std::string name;
  std::string fallback;  // empty = unset unless given
  std::string help;
  bool is_switch = false;
};

std::string key_of(const std::string& flag) {
  std::string k = flag;
  for (auto& c : k)
    if (c == '-') c = '_';
  return k;
}

std::string type_of(const Flag& f) {
  static const std::set<std::string> ints = {"crop", "start-frame"};
  if (ints.count(f.name)) return "INT";
  if (f.fallback.empty()) return f.name == "config" || f.name == "init" || f.name == "checkpoint" ||
                                         f.name == "grid" || f.name == "manifest" || f.name == "data"
                                     ? "PATH"
                                     : "TEXT";
  if (f.name == "out") return "PATH";
  if (f.fallback.find_first_not_of("0123456789") == std::string::npos) return "INT";
  if (f.fallback.find_first_not_of("0123456789.e-") == std::string::npos) return "NUM";
  return "TEXT";
}

// One subcommand: its flags, the values CLI11 parsed into, and the merged
// defaults -> config file -> command line result.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& about, std::vector<Flag> flags)
      : app_(parent.add_subcommand(name, about)), flags_(std::move(flags)) {
    std::vector<Flag> shared = {{"config", "", "key = value file applied before command-line flags"},
                                {"seed", "0", "seed for every random stream"},
                                {"out", "out", "output directory"},
                                {"precision", "32", "floating-point width: 32 or 64"},
                                {"threads", "1", "preprocessing workers"}};
    flags_.insert(flags_.end(), shared.begin(), shared.end());
    for (const auto& f : flags_) {
      if (f.is_switch) {
        switches_[f.name] = false;
        options_[f.name] = app_->add_flag("--" + f.name, switches_[f.name], f.help);
        continue;
      }
      auto* opt = app_->add_option("--" + f.name, values_[f.name], f.help)->type_name(type_of(f));
      if (!f.fallback.empty()) opt->default_val(f.fallback);
      options_[f.name] = opt;
    }
    options_["precision"]->check(CLI::IsMember({"32", "64"}));
  }

  CLI::App* app() const { return app_; }
  bool parsed() const { return app_->parsed(); }

  // Also writes the merge to <out>/resolved.cfg.
  KeyValueConfig resolve() const {
    KeyValueConfig kv;
    for (const auto& f : flags_)
      if (!f.fallback.empty()) kv.set(key_of(f.name), f.fallback);
      else if (f.is_switch) kv.set(key_of(f.name), "false");
    if (options_.at("config")->count()) {
      const KeyValueConfig file = KeyValueConfig::load(values_.at("config"));
      std::set<std::string> known;
      for (const auto& f : flags_)
        if (f.name != "config") known.insert(key_of(f.name));
      file.require_known(known);
      for (const auto& [k, v] : file.values()) kv.set(k, v);
    }
    for (const auto& f : flags_) {
      if (f.name == "config" || !options_.at(f.name)->count()) continue;
      kv.set(key_of(f.name), f.is_switch ? "true" : values_.at(f.name));
    }
    const fs::path out = *kv.get("out");
    fs::create_directories(out);
    std::ofstream echo(out / "resolved.cfg");
    if (!echo) fail(errc::kIo, "cannot write " + (out / "resolved.cfg").string());
    echo << kv.to_string();
    return kv;
  }

 private:
  CLI::App* app_;
  std::vector<Flag> flags_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> switches_;
  std::map<std::string, CLI::Option*> options_;
};

std::string need(const KeyValueConfig& kv, const std::string& key) {
  auto v = kv.get(key);
  if (!v || v->empty()) fail(errc::kConfig, "--" + key + " is required");
  return *v;
}

std::size_t count_of(const KeyValueConfig& kv, const std::string& key) {
  const auto v = kv.get_int(key);
  if (!v || *v < 0) fail(errc::kConfig, key + " must be a non-negative integer");
  return static_cast<std::size_t>(*v);
}

bool switch_of(const KeyValueConfig& kv, const std::string& key) {
  const auto v = kv.get(key).value_or("false");
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(errc::kConfig, key + " must be true or false, got '" + v + "'");
}

bool wide(const KeyValueConfig& kv) { return kv.get("precision") == "64"; }

fs::path out_dir(const KeyValueConfig& kv) { return *kv.get("out"); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  return out;
}

struct Data {
  DatasetManifest manifest;
  VideoStore store;
};

Data open_data(const KeyValueConfig& kv) {
  const fs::path dir = need(kv, "data");
  const auto m = kv.get("manifest");
  DatasetManifest manifest = load_manifest(m && !m->empty() ? fs::path(*m) : dir / "manifest.json");
  VideoStore store(dir, manifest);
  return {std::move(manifest), std::move(store)};
}

// Pipeline keys follow the model: frames -> target_frames, size -> crop.
PipelineConfig pipeline_of(const KeyValueConfig& kv, std::size_t frames, std::size_t size) {
  KeyValueConfig p = kv;
  p.set("target_frames", std::to_string(frames));
  p.set("crop", std::to_string(size));
  return PipelineConfig::from_kv(p, PipelineConfig());
}

std::vector<Flag> model_flags(bool with_variant) {
  std::vector<Flag> f;
  if (with_variant) f.push_back({"variant", "divided", "divided (CLS, temporal then spatial) or joint (mean pooled)"});
  for (Flag g : std::vector<Flag>{{"frames", "8", "frames per clip"},
                                  {"size", "32", "square crop in pixels"},
                                  {"patch", "8", "patch edge in pixels"},
                                  {"tube-depth", "0", "frames per token; 0 picks 1 (divided) or 2 (joint)"},
                                  {"dim", "32", "token width"},
                                  {"depth", "3", "encoder blocks"},
                                  {"heads", "4", "attention heads"},
                                  {"mlp-ratio", "4", "MLP hidden width over token width"}})
    f.push_back(g);
  return f;
}

std::vector<Flag> train_flags() {
  return {{"batch", "4", "clips per step"},
          {"epochs", "15", "passes over the train split"},
          {"lr", "1e-4", "Adam learning rate"},
          {"sampling", "even", "even or consecutive"},
          {"start-frame", "", "fixed start for consecutive sampling"},
          {"fine-tuned-layers", "all", "'all' or the number of top blocks to train"}};
}

ModelConfig model_of(const KeyValueConfig& kv, std::size_t classes) {
  ModelConfig base = ModelConfig::desk(Variant::Divided);
  base.classes = classes;
  ModelConfig c = ModelConfig::from_kv(kv, base);
  c.validate();
  return c;
}

TrainConfig train_of(const KeyValueConfig& kv) {
  TrainConfig t = TrainConfig::from_kv(kv, TrainConfig());
  return t;
}

template <typename T>
ClassifierModel<T> load_classifier(const fs::path& checkpoint) {
  const ModelConfig cfg = load_model_config(checkpoint);
  Rng unused(0);
  ClassifierModel<T> m = init_classifier<T>(cfg, unused);
  ParamList<T> params = classifier_params(m);
  const std::size_t copied = assign_by_name(params, load_checkpoint<T>(checkpoint));
  if (copied != params.size()) {
    fail(errc::kIo, checkpoint.string() + " holds " + std::to_string(copied) + " of the model's " +
                        std::to_string(params.size()) + " tensors");
  }
  return m;
}

void write_loss_csv(const fs::path& path, const std::vector<StepLog>& log) {
  auto out = open_out(path);
  out << "step,loss\n";
  char line[64];
  for (const auto& s : log) {
    std::snprintf(line, sizeof line, "%llu,%.9g\n", static_cast<unsigned long long>(s.step), s.loss);
    out << line;
  }
}

std::function<void(const StepLog&)> step_printer(std::ofstream& log) {
  return [&log](const StepLog& s) {
    const std::string line = format_step_log(s);
    log << line << '\n';
    std::cout << line << '\n';
  };
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(errc::kConfig, "k must be a comma-separated list of positive integers, got '" + s + "'");
    }
  }
  if (ks.empty()) fail(errc::kConfig, "k lists no values");
  return ks;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  fail(errc::kConfig, "split must be train, val or test, got '" + s + "'");
}

int gen_data(const KeyValueConfig& kv) {
  SyntheticSpec spec;
  spec.classes = count_of(kv, "classes");
  spec.per_class = count_of(kv, "per_class");
  spec.frames = count_of(kv, "frames");
  spec.size = count_of(kv, "size");
  spec.seed = count_of(kv, "seed");
  if (kv.get("crop")) spec.crop = count_of(kv, "crop");
  const DatasetManifest m = make_synthetic_dataset(spec, out_dir(kv));
  std::cout << "wrote " << m.instances.size() << " videos of " << m.num_classes() << " classes to "
            << out_dir(kv).string() << '\n';
  return 0;
}

int validate_manifest(const KeyValueConfig& kv) {
  const DatasetManifest m = load_manifest(need(kv, "manifest"));
  nlohmann::json summary = {{"classes", m.num_classes()},
                            {"train", m.count(Split::Train)},
                            {"val", m.count(Split::Val)},
                            {"test", m.count(Split::Test)}};
  std::vector<std::string> problems;
  if (switch_of(kv, "wlasl100")) problems = validate_wlasl100(m);
  if (const auto dir = kv.get("data"); dir && !dir->empty()) {
    VideoStore store(*dir, m);
    const PipelineConfig p = pipeline_of(kv, count_of(kv, "frames"), count_of(kv, "size"));
    std::size_t checked = 0;
    for (const auto& inst : m.instances) {
      try {
        Rng rng = clip_rng(p.seed, inst.video_id, 0);
        (void)preprocess(store.get(inst.video_id), p, Phase::Test, rng);
        ++checked;
      } catch (const Error& e) {
        problems.push_back(inst.video_id + ": " + e.kind() + ": " + e.what());
      }
    }
    summary["preprocessed"] = checked;
  }
  summary["problems"] = problems;
  open_out(out_dir(kv) / "validation.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  if (!problems.empty()) fail(errc::kManifest, std::to_string(problems.size()) + " problems, first: " + problems[0]);
  return 0;
}

template <typename T>
int pretrain_cmd(const KeyValueConfig& kv) {
  Data data = open_data(kv);
  KeyValueConfig mkv = kv;
  mkv.set("variant", "joint");
  const ModelConfig mc = model_of(mkv, data.manifest.num_classes());
  const MaeConfig cfg = mc.mae();
  const PipelineConfig pipe = pipeline_of(kv, mc.frames, mc.size);

  PretrainOptions opt;
  opt.steps = count_of(kv, "steps");
  opt.batch = count_of(kv, "batch");
  opt.adam.lr = *kv.get_double("lr");
  opt.threads = count_of(kv, "threads");
  opt.augment = switch_of(kv, "augment");
  opt.checkpoint = out_dir(kv) / "mae.ckpt";
  opt.checkpoint_every = count_of(kv, "checkpoint_every");

  std::vector<std::string> ids;
  for (const auto& inst : merge_train_val(data.manifest).split_instances(Split::Train)) ids.push_back(inst.video_id);
  Rng init(derive_seed(pipe.seed, "init"));
  MaeWeights<T> w = init_mae<T>(cfg, init);
  save_model_config(opt.checkpoint, mc);
  auto log = open_out(out_dir(kv) / "train.log");
  const auto steps = pretrain(w, cfg, data.store, ids, pipe, opt, step_printer(log));
  write_loss_csv(out_dir(kv) / "loss.csv", steps);
  return 0;
}

template <typename T>
int finetune_cmd(const KeyValueConfig& kv) {
  Data data = open_data(kv);
  const DatasetManifest manifest = merge_train_val(data.manifest);
  const ModelConfig mc = model_of(kv, manifest.num_classes());
  const TrainConfig tc = train_of(kv);
  tc.validate(mc.depth);
  const PipelineConfig pipe = pipeline_of(kv, mc.frames, mc.size);

  Rng init(derive_seed(tc.seed, "init"));
  ClassifierModel<T> model = init_classifier<T>(mc, init);
  if (const auto from = kv.get("init"); from && !from->empty()) {
    ParamList<T> params = classifier_params(model);
    const std::size_t copied = assign_by_name(params, load_checkpoint<T>(*from));
    if (copied == 0) fail(errc::kIo, *from + " shares no tensors with the model");
    std::cout << "initialized " << copied << " of " << params.size() << " tensors from " << *from << '\n';
  }
  auto log = open_out(out_dir(kv) / "train.log");
  nlohmann::json epochs = nlohmann::json::array();
  const auto r = finetune(model, manifest, data.store, tc, pipe, step_printer(log), [&](const EvalReport& e) {
    std::printf("epoch %zu test top-1 %.4f loss %.6f\n", e.epoch, e.top(1), e.loss);
    epochs.push_back(e.to_json());
  });
  const fs::path ckpt = out_dir(kv) / "model.ckpt";
  save_checkpoint(ckpt, r.best);
  save_model_config(ckpt, mc);
  write_loss_csv(out_dir(kv) / "loss.csv", r.log);
  open_out(out_dir(kv) / "report.json") << r.reports[r.best_epoch].to_json().dump(2) << '\n';
  open_out(out_dir(kv) / "epochs.json") << epochs.dump(2) << '\n';
  return 0;
}

template <typename T>
int evaluate_cmd(const KeyValueConfig& kv) {
  Data data = open_data(kv);
  const ClassifierModel<T> m = load_classifier<T>(need(kv, "checkpoint"));
  const PipelineConfig pipe = pipeline_of(kv, m.cfg.frames, m.cfg.size);
  const Split split = parse_split(*kv.get("split"));
  const DatasetManifest manifest = split == Split::Val ? data.manifest : merge_train_val(data.manifest);
  const EvalReport r = evaluate(m, manifest, split, data.store, pipe, parse_ks(*kv.get("k")), count_of(kv, "batch"),
                                count_of(kv, "threads"));
  const std::string text = r.to_json().dump(2);
  open_out(out_dir(kv) / "report.json") << text << '\n';
  std::cout << text << '\n';
  return 0;
}

template <typename T>
int ablate_cmd(const KeyValueConfig& kv) {
  Data data = open_data(kv);
  const DatasetManifest manifest = merge_train_val(data.manifest);
  const ModelConfig base = model_of(kv, manifest.num_classes());
  std::ifstream in(need(kv, "grid"));
  if (!in) fail(errc::kIo, "cannot read grid " + need(kv, "grid"));
  nlohmann::json grid;
  try {
    grid = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(errc::kConfig, need(kv, "grid") + ": " + e.what());
  }
  const auto rows = parse_ablation_grid(grid, train_of(kv));
  const PipelineConfig pipe = pipeline_of(kv, base.frames, base.size);
  const auto results = run_ablation<T>(rows, base, manifest, data.store, pipe, count_of(kv, "seed"),
                                       [](const AblationResult& r) {
                                         if (r.top1) std::printf("row seed %llu top-1 %.4f\n", (unsigned long long)r.seed, *r.top1);
                                         else std::printf("row seed %llu failed: %s\n", (unsigned long long)r.seed, r.error.c_str());
                                       });
  const std::string csv = ablation_csv(results, base.depth);
  open_out(out_dir(kv) / "ablation.csv") << csv;
  std::cout << csv;
  return 0;
}

template <typename T>
int attn_map_cmd(const KeyValueConfig& kv) {
  Data data = open_data(kv);
  const ClassifierModel<T> m = load_classifier<T>(need(kv, "checkpoint"));
  const PipelineConfig pipe = pipeline_of(kv, m.cfg.frames, m.cfg.size);
  const std::string id = need(kv, "video");
  Rng rng = clip_rng(pipe.seed, id, 0);
  const VideoClip clip = preprocess(data.store.get(id), pipe, Phase::Test, rng);
  AttentionTrace<T> trace;
  const Tensor<T> logits = [&] {
    NoGradGuard guard;
    return classifier_forward(m, stack_clips<T>(std::span<const VideoClip>(&clip, 1)), &trace);
  }();
  const Tensor<T> heat = attention_rollout(trace);
  const auto files = export_heatmaps(heat, m.cfg.tube(), m.cfg.patch, out_dir(kv));
  auto index = open_out(out_dir(kv) / "index.txt");
  std::size_t pred = 0;
  for (std::size_t j = 1; j < m.cfg.classes; ++j)
    if (logits[j] > logits[pred]) pred = j;
  index << "video " << id << "\npredicted " << pred << "\n";
  for (std::size_t f = 0; f < files.size(); ++f) index << f << ' ' << files[f].filename().string() << '\n';
  std::cout << "wrote " << files.size() << " heatmaps to " << out_dir(kv).string() << '\n';
  return 0;
}

template <template <typename> class Run>
int by_precision(const KeyValueConfig& kv) {
  return wide(kv) ? Run<double>{}(kv) : Run<float>{}(kv);
}

template <typename T> struct Pretrain { int operator()(const KeyValueConfig& kv) { return pretrain_cmd<T>(kv); } };
template <typename T> struct Finetune { int operator()(const KeyValueConfig& kv) { return finetune_cmd<T>(kv); } };
template <typename T> struct Evaluate { int operator()(const KeyValueConfig& kv) { return evaluate_cmd<T>(kv); } };
template <typename T> struct Ablate { int operator()(const KeyValueConfig& kv) { return ablate_cmd<T>(kv); } };
template <typename T> struct AttnMap { int operator()(const KeyValueConfig& kv) { return attn_map_cmd<T>(kv); } };

std::vector<Flag> join(std::vector<Flag> a, const std::vector<Flag>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video transformers for isolated sign recognition"};
  app.name("vslr");
  app.require_subcommand(1);
  app.get_formatter()->column_width(36);

  const Flag data{"data", "", "dataset directory holding manifest.json and videos/"};
  const Flag manifest{"manifest", "", "manifest path; defaults to <data>/manifest.json"};

  std::vector<std::pair<std::unique_ptr<Command>, std::function<int(const KeyValueConfig&)>>> commands;
  auto add = [&](const std::string& name, const std::string& about, std::vector<Flag> flags,
                 std::function<int(const KeyValueConfig&)> run) {
    commands.emplace_back(std::make_unique<Command>(app, name, about, std::move(flags)), std::move(run));
  };
  add("gen-data", "write a seeded synthetic dataset",
                                {{"classes", "4", "number of classes"},
                                 {"per-class", "6", "videos per class"},
                                 {"frames", "8", "frames per video"},
                                 {"size", "32", "frame edge in pixels"},
                                 {"crop", "", "refuse frames smaller than this crop"}},
      gen_data);
  add("validate-manifest", "check a manifest and optionally preprocess its videos",
                                {{"manifest", "", "manifest path (required)"},
                                 {"data", "", "dataset directory; when set every video is preprocessed"},
                                 {"frames", "16", "frames per clip"},
                                 {"size", "224", "crop edge in pixels"},
                                 {"sampling", "even", "even or consecutive"},
                                 {"start-frame", "", "fixed start for consecutive sampling"},
                                 {"wlasl100", "", "also check the 100-gloss subset bounds", true}},
      validate_manifest);
  add("pretrain", "masked-autoencoder pretraining of the joint model",
                                join({data, manifest}, join(model_flags(false),
                                                                {{"decoder-depth", "2", "decoder blocks"},
                                                                 {"decoder-dim", "0", "decoder width; 0 = half of dim"},
                                                                 {"decoder-heads", "2", "decoder heads"},
                                                                 {"ratio", "0.9", "masked fraction of spatial cells"},
                                                                 {"steps", "200", "optimizer steps"},
                                                                 {"batch", "4", "clips per step"},
                                                                 {"lr", "1e-3", "Adam learning rate"},
                                                                 {"sampling", "even", "even or consecutive"},
                                                                 {"start-frame", "", "fixed start for consecutive sampling"},
                                                                 {"augment", "", "random crop and flip per clip", true},
                                                                 {"checkpoint-every", "0", "also save every N steps"}})),
      by_precision<Pretrain>);
  add("finetune", "supervised fine-tuning; keeps the best epoch by test top-1",
                                join({data, manifest, {"init", "", "checkpoint to initialize matching tensors from"}},
                                       join(model_flags(true), train_flags())),
      by_precision<Finetune>);
  add("evaluate", "top-K report for one split",
                                {data,
                                 manifest,
                                 {"checkpoint", "", "model checkpoint; its .json sidecar holds the shape (required)"},
                                 {"split", "test", "train, val or test"},
                                 {"k", "1,5,10", "comma-separated K values"},
                                 {"batch", "8", "clips per forward pass"},
                                 {"sampling", "even", "even or consecutive"},
                                 {"start-frame", "", "fixed start for consecutive sampling"}},
      by_precision<Evaluate>);
  add("ablate", "run a JSON grid of fine-tuning configs into one CSV table",
                                join({data, manifest, {"grid", "", "JSON array of row overrides (required)"}},
                                       join(model_flags(true), train_flags())),
      by_precision<Ablate>);
  add("attn-map", "attention rollout heatmaps for one video",
                                {data,
                                 manifest,
                                 {"checkpoint", "", "model checkpoint (required)"},
                                 {"video", "", "video id (required)"},
                                 {"sampling", "even", "even or consecutive"},
                                 {"start-frame", "", "fixed start for consecutive sampling"}},
      by_precision<AttnMap>);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }
  try {
    for (auto& [cmd, run] : commands)
      if (cmd->parsed()) return run(cmd->resolve());
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << errc::kIo << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
