#include <doctest.h>

#include "model_oracles.hpp"
#include "vslr/embedding.hpp"
#include "vslr/error.hpp"
#include "vslr/grad_check.hpp"

using namespace vslr;
using TD = Tensor<double>;

namespace {

LinearWeights<double> random_linear(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  return {oracle::random_tensor<double>(rng, {in, out}), oracle::random_tensor<double>(rng, {out})};
}

}  // namespace

TEST_CASE("token grid closed forms") {
  CHECK(token_grid(16, 224, 224, 16).spatial() == 196);
  CHECK(token_grid(16, 224, 224, 16).tokens() == 3136);
  CHECK(token_grid(16, 224, 224, 16, 2).tokens() == 1568);
  CHECK(token_grid(16, 224, 224, 16, 2) == Grid{8, 14, 14});
  CHECK(token_grid(2, 16, 16, 16, 2).tokens() == 1);
  CHECK(token_grid(8, 32, 32, 8, 2) == Grid{4, 4, 4});

  CHECK_THROWS_WITH_AS(token_grid(16, 225, 224, 16), "height 225 is not divisible by 16", Error);
  CHECK_THROWS_WITH_AS(token_grid(7, 32, 32, 8, 2), "frame count 7 is not divisible by 2", Error);
  CHECK_THROWS_WITH_AS(token_grid(8, 32, 36, 8, 2), "width 36 is not divisible by 8", Error);

  SUBCASE("random valid shapes") {
    std::mt19937_64 rng(5);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    for (int i = 0; i < 100; ++i) {
      const std::size_t p = pick(1, 4), t = pick(1, 3);
      const std::size_t gt = pick(1, 4), gh = pick(1, 4), gw = pick(1, 4);
      const Grid g = token_grid(gt * t, gh * p, gw * p, p, t);
      CHECK(g.tokens() == gt * gh * gw);
      auto x = oracle::random_tensor<double>(rng, {gt * t, 3, gh * p, gw * p});
      auto tb = cube_embed_3d(x, random_linear(rng, 3 * t * p * p, 2), t, p);
      CHECK(tb.tokens.shape() == Shape{1, gt * gh * gw, 2});
    }
  }
}

TEST_CASE("full-size token counts") {
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor<float>(rng, {16, 3, 224, 224}, 0.0, 1.0);
  Rng init(0);
  auto cube = cube_embed_3d(x, init_linear<float>(3 * 2 * 16 * 16, 4, init), 2, 16);
  CHECK(cube.tokens.shape() == Shape{1, 1568, 4});
  CHECK(cube.grid == Grid{8, 14, 14});
  auto patch = patch_embed_2d(x, init_linear<float>(3 * 16 * 16, 4, init), 16);
  CHECK(patch.tokens.dim(1) == 3136);
  CHECK(patch.grid.spatial() == 196);
  CHECK(prepend_cls(patch, Tensor<float>::zeros({4})).tokens.dim(1) == 3137);
}

TEST_CASE("patch embedding values") {
  std::mt19937_64 rng(2);
  SUBCASE("single patch equals the direct projection") {
    auto x = oracle::random_tensor<double>(rng, {1, 3, 16, 16});
    auto proj = random_linear(rng, 768, 5);
    auto tb = patch_embed_2d(x, proj, 16);
    REQUIRE(tb.tokens.shape() == Shape{1, 1, 5});
    const auto expected = oracle::linear(oracle::cube_rows(x, 1, 16), proj);
    CHECK(oracle::max_abs_diff(expected, tb.tokens) < 1e-9);
  }
  SUBCASE("zero input gives the bias") {
    auto proj = random_linear(rng, 3 * 4 * 4, 3);
    auto tb = patch_embed_2d(TD::zeros({2, 3, 8, 8}), proj, 4);
    for (std::size_t i = 0; i < tb.tokens.numel(); ++i) CHECK(tb.tokens[i] == proj.b[i % 3]);
  }
  SUBCASE("cube embedding matches loop flattening") {
    auto x = oracle::random_tensor<double>(rng, {4, 3, 8, 12});
    auto proj = random_linear(rng, 3 * 2 * 4 * 4, 6);
    auto tb = cube_embed_3d(x, proj, 2, 4);
    CHECK(tb.grid == Grid{2, 2, 3});
    CHECK(oracle::max_abs_diff(oracle::linear(oracle::cube_rows(x, 2, 4), proj), tb.tokens) < 1e-9);
  }
  SUBCASE("batched input") {
    auto x = oracle::random_tensor<double>(rng, {2, 2, 3, 4, 4});
    auto proj = random_linear(rng, 3 * 2 * 2 * 2, 3);
    auto tb = cube_embed_3d(x, proj, 2, 2);
    CHECK(tb.tokens.shape() == Shape{2, 4, 3});
    auto second = cube_embed_3d(slice(x, 0, 1, 1), proj, 2, 2);
    for (std::size_t i = 0; i < second.tokens.numel(); ++i) CHECK(second.tokens[i] == tb.tokens[12 + i]);
  }
  SUBCASE("linearity with zero bias") {
    auto x = oracle::random_tensor<double>(rng, {2, 3, 8, 8});
    auto proj = random_linear(rng, 3 * 2 * 4 * 4, 4);
    proj.b = TD::zeros({4});
    auto once = cube_embed_3d(x, proj, 2, 4), twice = cube_embed_3d(scale(x, 2.0), proj, 2, 4);
    for (std::size_t i = 0; i < once.tokens.numel(); ++i) CHECK(twice.tokens[i] == doctest::Approx(2 * once.tokens[i]).epsilon(1e-6));
  }
  SUBCASE("tube depth 1 cube embedding equals patch embedding") {
    auto x = oracle::random_tensor<double>(rng, {3, 3, 8, 8});
    auto proj = random_linear(rng, 3 * 4 * 4, 4);
    auto a = patch_embed_2d(x, proj, 4), b = cube_embed_3d(x, proj, 1, 4);
    CHECK(std::equal(a.tokens.data().begin(), a.tokens.data().end(), b.tokens.data().begin()));
  }
  SUBCASE("unflatten round trip") {
    auto x = oracle::random_tensor<double>(rng, {4, 3, 8, 12});
    auto flat = flatten_cubes(x, 2, 4);
    auto back = unflatten_cubes(flat, Grid{2, 2, 3}, 2, 4);
    CHECK(back.shape() == Shape{1, 4, 3, 8, 12});
    CHECK(std::equal(back.data().begin(), back.data().end(), x.data().begin()));
  }
  SUBCASE("bad pixel shape") {
    CHECK_THROWS_AS(patch_embed_2d(TD::zeros({2, 4, 8, 8}), random_linear(rng, 48, 2), 4), Error);
  }
}

TEST_CASE("positional embeddings and CLS") {
  std::mt19937_64 rng(3);
  Rng init(4);
  EmbeddingConfig cfg{.variant = Variant::Divided, .patch = 4, .tube_depth = 1, .dim = 6, .frames = 2, .height = 8, .width = 8};
  auto w = init_embedding<double>(cfg, init);
  CHECK(w.pos.shape() == Shape{9, 6});
  CHECK(w.cls.shape() == Shape{6});

  SUBCASE("zero tokens plus table gives the table") {
    TokenBatch<double> tb{TD::zeros({1, 9, 6}), Grid{2, 2, 2}, true};
    auto out = add_positional(tb, w.pos);
    CHECK(std::equal(out.tokens.data().begin(), out.tokens.data().end(), w.pos.data().begin()));
    auto frozen = add_positional(tb, TD::zeros({9, 6}));
    CHECK(std::equal(frozen.tokens.data().begin(), frozen.tokens.data().end(), tb.tokens.data().begin()));
    CHECK_THROWS_AS(add_positional(tb, TD::zeros({8, 6})), Error);
  }
  SUBCASE("distinct positions get distinct vectors") {
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = i + 1; j < 9; ++j) {
        bool differ = false;
        for (std::size_t k = 0; k < 6; ++k) differ |= w.pos[i * 6 + k] != w.pos[j * 6 + k];
        CHECK(differ);
      }
  }
  SUBCASE("positions make order visible") {
    auto tokens = oracle::random_tensor<double>(rng, {1, 2, 6});
    TokenBatch<double> tb{tokens, Grid{1, 1, 2}, false};
    auto table = slice(w.pos, 0, 0, 2);
    auto swapped = index_select(tokens, 1, {1, 0});
    auto a = index_select(add_positional(tb, table).tokens, 1, {1, 0});
    auto b = add_positional(TokenBatch<double>{swapped, tb.grid, false}, table).tokens;
    bool differ = false;
    for (std::size_t i = 0; i < a.numel(); ++i) differ |= a[i] != b[i];
    CHECK(differ);
  }
  SUBCASE("CLS prepend") {
    auto x = oracle::random_tensor<double>(rng, {2, 3, 8, 8});
    auto tb = prepend_cls(patch_embed_2d(x, w.proj, 4), w.cls);
    CHECK(tb.tokens.shape() == Shape{1, 9, 6});
    for (std::size_t k = 0; k < 6; ++k) CHECK(tb.tokens[k] == 0.0);
    CHECK_THROWS_AS(prepend_cls(tb, w.cls), Error);
  }
  SUBCASE("CLS-only loss reaches cls and not the projection") {
    auto x = oracle::random_tensor<double>(rng, {2, 3, 8, 8});
    auto tb = embed(x, cfg, w);
    auto loss = sum(slice(tb.tokens, 1, 0, 1));
    backward(loss);
    bool cls_grad = false;
    for (double g : w.cls.grad()) cls_grad |= g != 0.0;
    CHECK(cls_grad);
    for (double g : w.proj.w.grad()) CHECK(g == 0.0);
  }
  SUBCASE("joint variant has no CLS") {
    EmbeddingConfig joint = cfg;
    joint.variant = Variant::Joint;
    joint.tube_depth = 2;
    auto jw = init_embedding<double>(joint, init);
    CHECK(jw.cls.rank() == 0);
    CHECK(jw.pos.shape() == Shape{4, 6});
    ParamList<double> names;
    append_params(names, jw);
    CHECK(names.size() == 3);
    CHECK(names[0].name == "embed.proj.w");
  }
  SUBCASE("embedding gradients") {
    auto x = oracle::random_tensor<double>(rng, {2, 3, 8, 8});
    auto wt = oracle::random_tensor<double>(rng, {1, 9, 6});
    CHECK(grad_check([&] { return sum(mul(embed(x, cfg, w).tokens, wt)); }, {w.proj.w, w.proj.b, w.pos, w.cls}) < 1e-4);
  }
}
