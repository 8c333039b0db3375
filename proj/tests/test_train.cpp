#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "oracles.hpp"
#include "vslr/error.hpp"
#include "vslr/grad_check.hpp"
#include "vslr/train.hpp"

using namespace vslr;
using TD = Tensor<double>;

namespace {

struct SyntheticData {
  SyntheticSpec spec;
  DatasetManifest manifest;

  SyntheticData() : manifest(merge_train_val(synthetic_manifest(spec))) {}

  VideoStore store() const {
    VideoStore s("", manifest);
    for (std::size_t c = 0; c < spec.classes; ++c)
      for (std::size_t i = 0; i < spec.per_class; ++i) s.put(synthesize_video(spec, c, i));
    return s;
  }
};

ModelConfig small_model(Variant v) {
  ModelConfig c = ModelConfig::desk(v);
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

PipelineConfig desk_pipeline() { return {.target_frames = 8, .sampling = Sampling::Even, .crop = 32}; }

TrainConfig short_run() {
  TrainConfig t;
  t.batch = 8;
  t.epochs = 1;
  t.lr = 1e-3;
  t.frames = 8;
  return t;
}

std::uint64_t checksum(const ParamList<float>& params, const std::string& prefix) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    for (float v : p.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits give log C") {
    const TD logits = TD::zeros({3, 100});
    CHECK(cross_entropy(logits, {0, 42, 99}).item() == doctest::Approx(std::log(100.0)).epsilon(1e-12));
  }
  SUBCASE("a dominant correct logit gives zero") {
    TD logits = TD::zeros({1, 5});
    logits.mutable_data()[3] = 1000;
    CHECK(cross_entropy(logits, {3}).item() == doctest::Approx(0.0));
    CHECK(std::isfinite(cross_entropy(logits, {0}).item()));
    CHECK(cross_entropy(logits, {0}).item() == doctest::Approx(1000.0));
  }
  SUBCASE("matches the brute-force row loss") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 120; ++trial) {
      const std::size_t b = 1 + rng() % 5, c = 2 + rng() % 30;
      const double scale = trial % 3 == 0 ? 50.0 : 3.0;
      const TD logits = oracle::random_tensor<double>(rng, {b, c}, -scale, scale);
      std::vector<std::size_t> labels(b);
      double expected = 0;
      for (std::size_t i = 0; i < b; ++i) {
        labels[i] = rng() % c;
        std::vector<double> row(logits.data().begin() + i * c, logits.data().begin() + (i + 1) * c);
        expected += oracle::cross_entropy_row(row, labels[i]);
      }
      CHECK(cross_entropy(logits, labels).item() == doctest::Approx(expected / double(b)).epsilon(1e-10));
    }
  }
  SUBCASE("gradient") {
    std::mt19937_64 rng(3);
    const TD logits = oracle::random_tensor<double>(rng, {4, 6}, -2, 2);
    CHECK(grad_check([](const TD& x) { return cross_entropy(x, {0, 5, 2, 2}); }, logits) < 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(cross_entropy(TD::zeros({2, 3}), {0, 3}), Error);
    CHECK_THROWS_AS(cross_entropy(TD::zeros({2, 3}), {0}), Error);
    CHECK_THROWS_AS(cross_entropy(TD::zeros({6}), {0}), Error);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves each coordinate by lr against the gradient sign") {
    std::vector<double> p = {1.0, -2.0, 0.5};
    const std::vector<double> g = {0.3, -4.0, 0.0};
    AdamState s;
    const AdamConfig cfg{.lr = 0.01};
    adam_step<double>(p, g, s, cfg);
    CHECK(s.step == 1);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
    CHECK(p[2] == 0.5);
  }
  SUBCASE("second step by hand") {
    std::vector<double> p = {0.0};
    AdamState s;
    const AdamConfig cfg{.lr = 0.1};
    adam_step<double>(p, std::vector<double>{1.0}, s, cfg);
    adam_step<double>(p, std::vector<double>{-1.0}, s, cfg);
    const double m = 0.9 * 0.1 - 0.1, v = 0.999 * 0.001 + 0.001;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    CHECK(p[0] == doctest::Approx(-0.1 / (1 + 1e-8) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("frozen and gradient-free parameters") {
    TD a({2}, {1.0, 2.0}, true), b({1}, {3.0}, true);
    b.set_requires_grad(false);
    Adam<double> opt({a, b}, {.lr = 0.5});
    opt.step();
    CHECK(a.data()[0] == 1.0);
    CHECK(b.data()[0] == 3.0);
    CHECK(opt.steps() == 1);
  }
  SUBCASE("size mismatch") {
    std::vector<double> p = {0.0, 1.0};
    AdamState s;
    CHECK_THROWS_AS(adam_step<double>(p, std::vector<double>{1.0}, s, AdamConfig{}), Error);
  }
  CHECK(format_step_log({12, 0.5, 1e-4, 3.25}) == "step 12 loss 0.500000 lr 0.0001 wall-ms 3.2");
}

TEST_CASE("top-k accuracy") {
  SUBCASE("three of four correct") {
    const TD logits({4, 3}, {0.9, 0.05, 0.05, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6, 0.7, 0.2, 0.1});
    CHECK(topk_accuracy(logits, {0, 1, 2, 1}, {1})[0] == 0.75);
  }
  SUBCASE("rank boundary at k") {
    std::vector<double> row(20);
    std::iota(row.rbegin(), row.rend(), 0.0);  // class j has score 19 - j
    const TD logits({1, 20}, row);
    CHECK(topk_accuracy(logits, {4}, {5})[0] == 1.0);
    CHECK(topk_accuracy(logits, {5}, {5})[0] == 0.0);
    CHECK(topk_accuracy(logits, {5}, {1, 5, 10}) == std::vector<double>{0.0, 0.0, 1.0});
  }
  SUBCASE("constant logits favour the lowest indices") {
    const TD logits = TD::full({3, 10}, 0.5);
    CHECK(topk_accuracy(logits, {0, 4, 5}, {1, 5}) == std::vector<double>{1.0 / 3, 2.0 / 3});
  }
  SUBCASE("matches a full sort") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 150; ++trial) {
      const std::size_t b = 1 + rng() % 8, c = 2 + rng() % 40;
      TD logits = oracle::random_tensor<double>(rng, {b, c});
      if (trial % 4 == 0)
        for (auto& v : logits.mutable_data()) v = std::round(v * 2);  // many ties
      std::vector<std::size_t> labels(b), ks;
      for (auto& l : labels) l = rng() % c;
      for (std::size_t k : {1, 5, 10})
        if (k <= c) ks.push_back(k);
      const auto acc = topk_accuracy(logits, labels, ks);
      for (std::size_t q = 0; q < ks.size(); ++q) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < b; ++i) {
          std::vector<double> row(logits.data().begin() + i * c, logits.data().begin() + (i + 1) * c);
          hits += oracle::in_top_k(row, labels[i], ks[q]);
        }
        CHECK(acc[q] == double(hits) / double(b));
      }
      for (std::size_t q = 1; q < acc.size(); ++q) CHECK(acc[q] >= acc[q - 1]);
    }
  }
  SUBCASE("oracle logits score 1 at every k") {
    TD logits = TD::zeros({5, 12});
    const std::vector<std::size_t> labels = {3, 0, 11, 7, 7};
    for (std::size_t i = 0; i < 5; ++i) logits.mutable_data()[i * 12 + labels[i]] = 1;
    CHECK(topk_accuracy(logits, labels, {1, 5, 10}) == std::vector<double>{1.0, 1.0, 1.0});
  }
  SUBCASE("invariant under strictly increasing maps") {
    std::mt19937_64 rng(23);
    const std::vector<std::function<double(double)>> maps = {
        [](double x) { return std::exp(x); }, [](double x) { return x * x * x + 2 * x; },
        [](double x) { return 5 * x - 100; }, [](double x) { return std::tanh(x / 4); }};
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t b = 1 + rng() % 6, c = 10 + rng() % 20;
      TD logits = oracle::random_tensor<double>(rng, {b, c}, -3, 3);
      if (trial % 2 == 0)
        for (auto& v : logits.mutable_data()) v = std::round(v);
      std::vector<std::size_t> labels(b);
      for (auto& l : labels) l = rng() % c;
      const auto base = topk_accuracy(logits, labels, {1, 5, 10});
      for (const auto& f : maps) {
        TD mapped = logits.detach();
        for (auto& v : mapped.mutable_data()) v = f(v);
        CHECK(topk_accuracy(mapped, labels, {1, 5, 10}) == base);
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(topk_accuracy(TD::zeros({2, 3}), {0, 1}, {4}), Error);
    CHECK_THROWS_AS(topk_accuracy(TD::zeros({2, 3}), {0, 1}, {0}), Error);
    CHECK_THROWS_AS(topk_accuracy(TD::zeros({2, 3}), {0, 3}, {1}), Error);
  }
}

TEST_CASE("freezing layers") {
  Rng rng(5);
  auto m = init_classifier<float>(small_model(Variant::Joint), rng);
  const std::size_t total = classifier_params(m).size();
  CHECK(freeze_layers(m, std::nullopt).size() == total);
  CHECK(freeze_layers(m, std::size_t{2}).size() == total);
  const auto top = freeze_layers(m, std::size_t{1});
  // one joint block, final norm, head
  CHECK(top.size() == 16 + 2 + 2);
  for (const auto& p : classifier_params(m)) {
    const bool trainable = p.name.rfind("enc.1.", 0) == 0 || p.name.rfind("enc.norm.", 0) == 0 ||
                           p.name.rfind("head.", 0) == 0;
    CHECK_MESSAGE(p.tensor.requires_grad() == trainable, p.name);
  }
  CHECK_THROWS_AS(freeze_layers(m, std::size_t{0}), Error);
  CHECK_THROWS_AS(freeze_layers(m, std::size_t{3}), Error);
}

TEST_CASE("classifier") {
  for (Variant v : {Variant::Divided, Variant::Joint}) {
    CAPTURE(variant_name(v));
    Rng rng(2);
    const ModelConfig cfg = small_model(v);
    auto m = init_classifier<double>(cfg, rng);
    std::mt19937_64 g(9);
    const TD x = oracle::random_tensor<double>(g, {2, 8, 3, 32, 32}, 0, 1);
    CHECK(classifier_forward(m, x).shape() == Shape{2, 4});
  }
  SUBCASE("model config round trip") {
    ModelConfig c = small_model(Variant::Joint);
    c.mask_ratio = 0.5;
    const ModelConfig back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.tube() == 2);
    CHECK(ModelConfig::desk(Variant::Divided).tube() == 1);
  }
}

TEST_CASE("evaluation") {
  const SyntheticData data;
  auto store = data.store();
  Rng rng(4);
  auto m = init_classifier<float>(small_model(Variant::Joint), rng);
  const EvalReport r = evaluate(m, data.manifest, Split::Test, store, desk_pipeline());
  CHECK(r.samples == 4);
  CHECK(r.ks == std::vector<std::size_t>{1});  // 5 and 10 exceed the class count
  std::size_t total = 0;
  for (const auto& row : r.confusion) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  CHECK(total == 4);

  const EvalReport again = evaluate(m, data.manifest, Split::Test, store, desk_pipeline(), {1, 4}, 3);
  CHECK(again.top(1) == r.top(1));
  CHECK(again.top(4) == 1.0);
  CHECK(again.to_json().dump() == evaluate(m, data.manifest, Split::Test, store, desk_pipeline(), {1, 4}, 3)
                                      .to_json()
                                      .dump());
  CHECK_FALSE(again.to_json().contains("wall_seconds"));

  SUBCASE("parallel loading") {
    const EvalReport par = evaluate(m, data.manifest, Split::Test, store, desk_pipeline(), {1, 4}, 3, 3);
    CHECK(par.top(1) == again.top(1));
    CHECK(par.loss == doctest::Approx(again.loss).epsilon(1e-5));
    CHECK(par.confusion == again.confusion);
  }
  SUBCASE("head and class count must agree") {
    ModelConfig c = small_model(Variant::Joint);
    c.classes = 5;
    Rng r5(1);
    auto wrong = init_classifier<float>(c, r5);
    try {
      evaluate(wrong, data.manifest, Split::Test, store, desk_pipeline());
      FAIL("expected a mismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == errc::kHeadClassMismatch);
    }
  }
}

TEST_CASE("fine-tuning") {
  const SyntheticData data;
  SUBCASE("zero epochs report the initialization") {
    auto store = data.store();
    Rng rng(8);
    auto m = init_classifier<float>(small_model(Variant::Divided), rng);
    TrainConfig t = short_run();
    t.epochs = 0;
    const auto r = finetune(m, data.manifest, store, t, desk_pipeline());
    CHECK(r.reports.size() == 1);
    CHECK(r.best_epoch == 0);
    CHECK(r.log.empty());
  }
  SUBCASE("same seed, same reports") {
    auto run = [&] {
      auto store = data.store();
      Rng rng(8);
      auto m = init_classifier<double>(small_model(Variant::Joint), rng);
      TrainConfig t = short_run();
      t.epochs = 2;
      t.seed = 17;
      return finetune(m, data.manifest, store, t, desk_pipeline());
    };
    const auto a = run(), b = run();
    REQUIRE(a.reports.size() == 3);
    CHECK(a.log.size() == 6);  // 20 training clips in batches of 8
    for (std::size_t i = 0; i < a.reports.size(); ++i) CHECK(a.reports[i].to_json() == b.reports[i].to_json());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
  }
  SUBCASE("frozen blocks stay bit-identical") {
    auto store = data.store();
    Rng rng(8);
    auto m = init_classifier<float>(small_model(Variant::Divided), rng);
    const auto before = checksum(classifier_params(m), "enc.0."), embed = checksum(classifier_params(m), "embed.");
    const auto head = checksum(classifier_params(m), "head.");
    TrainConfig t = short_run();
    t.fine_tuned_layers = 1;
    finetune(m, data.manifest, store, t, desk_pipeline());
    CHECK(checksum(classifier_params(m), "enc.0.") == before);
    CHECK(checksum(classifier_params(m), "embed.") == embed);
    CHECK(checksum(classifier_params(m), "head.") != head);
  }
  SUBCASE("preconditions") {
    auto store = data.store();
    Rng rng(8);
    auto m = init_classifier<float>(small_model(Variant::Joint), rng);
    CHECK_THROWS_AS(finetune(m, synthetic_manifest(data.spec), store, short_run(), desk_pipeline()), Error);
    TrainConfig t = short_run();
    t.frames = 4;
    CHECK_THROWS_AS(finetune(m, data.manifest, store, t, desk_pipeline()), Error);
    t = short_run();
    t.fine_tuned_layers = 3;
    CHECK_THROWS_AS(finetune(m, data.manifest, store, t, desk_pipeline()), Error);
  }
}

TEST_CASE("train config") {
  const KeyValueConfig kv = KeyValueConfig::parse("batch = 2\nfine_tuned_layers = all\nsampling = consecutive\n");
  const TrainConfig t = TrainConfig::from_kv(kv, TrainConfig());
  CHECK(t.batch == 2);
  CHECK_FALSE(t.fine_tuned_layers);
  CHECK(t.sampling == Sampling::Consecutive);
  CHECK(TrainConfig::from_kv(KeyValueConfig::parse("fine_tuned_layers = 3\n"), t).fine_tuned_layers == 3u);
  CHECK_THROWS_AS(TrainConfig::from_kv(KeyValueConfig::parse("fine_tuned_layers = most\n"), t), Error);
}

TEST_CASE("ablation") {
  const SyntheticData data;
  const nlohmann::json grid = nlohmann::json::parse(R"([
    {"model": "joint", "sampling": "even", "epochs": 1, "batch": 8},
    {"model": "joint", "sampling": "consecutive", "epochs": 1, "batch": 8},
    {"model": "divided", "frames": 6, "epochs": 1}
  ])");
  TrainConfig defaults = short_run();
  const auto rows = parse_ablation_grid(grid, defaults);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].train.sampling == Sampling::Consecutive);
  CHECK(rows[2].variant == Variant::Divided);

  auto store = data.store();
  const auto results = run_ablation<float>(rows, small_model(Variant::Joint), data.manifest, store, desk_pipeline(), 99);
  REQUIRE(results.size() == 3);
  CHECK(results[0].seed != results[1].seed);
  CHECK(results[0].top1);
  CHECK(results[1].top1);
  CHECK(results[2].top1);

  SUBCASE("one row equals a direct fine-tune") {
    auto s = data.store();
    ModelConfig mc = small_model(Variant::Joint);
    Rng init(derive_seed(results[0].seed, "init"));
    auto m = init_classifier<float>(mc, init);
    TrainConfig t = rows[0].train;
    t.seed = results[0].seed;
    const auto fr = finetune(m, data.manifest, s, t, desk_pipeline());
    CHECK(fr.reports[fr.best_epoch].top(1) == *results[0].top1);
  }
  SUBCASE("a failing row is reported, not thrown") {
    auto bad = rows;
    bad[1].train.frames = 3;  // joint tubes need an even frame count
    auto s = data.store();
    const auto out = run_ablation<float>(bad, small_model(Variant::Joint), data.manifest, s, desk_pipeline(), 99);
    REQUIRE(out.size() == 3);
    CHECK(out[0].top1 == results[0].top1);
    CHECK_FALSE(out[1].top1);
    CHECK_MESSAGE(out[1].error.rfind("shape", 0) == 0, out[1].error);
    CHECK(out[2].top1 == results[2].top1);
  }
  const std::string csv = ablation_csv(results, 2);
  CHECK(csv.substr(0, csv.find('\n')) == "Batch,Epochs,Frames,Init. LR,Model,Fine-Tuned Layers,Sampling,Top-1 Acc. (%)");
  CHECK(csv.find("\n8,1,8,0.001,joint,2,Consec.,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(parse_ablation_grid(nlohmann::json::array(), defaults), Error);
  CHECK_THROWS_AS(parse_ablation_grid(nlohmann::json::parse(R"([{"momentum": 1}])"), defaults), Error);
}
