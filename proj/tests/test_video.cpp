#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "vslr/dataset.hpp"
#include "vslr/error.hpp"
#include "vslr/manifest.hpp"
#include "vslr/video.hpp"

using namespace vslr;

namespace {

Frame numbered_frame(std::size_t h, std::size_t w, std::uint8_t tag, ChannelOrder order = ChannelOrder::BGR) {
  Frame f(h, w, order);
  for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = static_cast<std::uint8_t>((i * 7 + tag) % 251);
  return f;
}

Video numbered_video(std::size_t length, std::size_t h = 4, std::size_t w = 4) {
  Video v;
  v.id = "vid" + std::to_string(length);
  for (std::size_t i = 0; i < length; ++i) v.frames.push_back(numbered_frame(h, w, static_cast<std::uint8_t>(i)));
  return v;
}

Frame random_frame(Rng& rng, std::size_t h, std::size_t w, ChannelOrder order) {
  Frame f(h, w, order);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return f;
}

VideoClip clip_of(std::size_t frames, std::size_t h, std::size_t w, Rng& rng) {
  VideoClip c;
  c.source_id = "clip";
  for (std::size_t i = 0; i < frames; ++i) {
    c.frames.push_back(random_frame(rng, h, w, ChannelOrder::RGB));
    c.sampled_indices.push_back(static_cast<int>(i));
  }
  return c;
}

// Seed whose first coin flip selects the requested end (true = first).
std::uint64_t seed_choosing(bool first) {
  for (std::uint64_t s = 0;; ++s) {
    Rng rng(s);
    if (coin_flip(rng) == first) return s;
  }
}

// Unrounded bilinear sample with half-pixel centers and edge clamping.
double bilinear_oracle(const Frame& f, std::size_t oh, std::size_t ow, std::size_t y, std::size_t x,
                             std::size_t c) {
  const double sy = (double(y) + 0.5) * double(f.height) / double(oh) - 0.5;
  const double sx = (double(x) + 0.5) * double(f.width) / double(ow) - 0.5;
  auto clamp = [](double v, std::size_t n) { return std::clamp(v, 0.0, double(n - 1)); };
  const double cy = clamp(sy, f.height), cx = clamp(sx, f.width);
  const auto y0 = static_cast<std::size_t>(std::floor(cy)), x0 = static_cast<std::size_t>(std::floor(cx));
  const std::size_t y1 = std::min(y0 + 1, f.height - 1), x1 = std::min(x0 + 1, f.width - 1);
  const double ty = cy - double(y0), tx = cx - double(x0);
  return (1 - ty) * ((1 - tx) * f.at(y0, x0, c) + tx * f.at(y0, x1, c)) +
         ty * ((1 - tx) * f.at(y1, x0, c) + tx * f.at(y1, x1, c));
}

// 100 glosses, 2038 instances: 38 glosses with 21 videos, 62 with 20; roughly
// 4:1:1 per gloss.
std::string wlasl100_fixture() {
  std::ostringstream out;
  out << "[\n";
  std::size_t vid = 0;
  for (std::size_t g = 0; g < 100; ++g) {
    const std::size_t n = g < 38 ? 21 : 20;
    out << "  {\"gloss\": \"word" << (99 - g) << "\", \"instances\": [\n";
    for (std::size_t i = 0; i < n; ++i, ++vid) {
      const char* split = i % 6 < 4 ? "train" : (i % 6 == 4 ? "val" : "test");
      const std::size_t frames = 12 + (vid * 37) % 192;
      out << "    {\"video_id\": \"" << 10000 + vid << "\", \"split\": \"" << split
          << "\", \"frame_start\": 1, \"frame_end\": -1, \"num_frames\": " << frames << "}"
          << (i + 1 < n ? "," : "") << "\n";
    }
    out << "  ]}" << (g + 1 < 100 ? "," : "") << "\n";
  }
  out << "]\n";
  return out.str();
}

std::string error_message(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vslr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("consecutive sampling") {
  Rng rng(3);
  SUBCASE("L == target selects every frame") {
    auto clip = sample_consecutive(numbered_video(64), 64, rng);
    for (int i = 0; i < 64; ++i) CHECK(clip.sampled_indices[static_cast<std::size_t>(i)] == i);
  }
  SUBCASE("contiguous run for any seed") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      auto clip = sample_consecutive(numbered_video(100), 16, r);
      REQUIRE(clip.frames.size() == 16);
      const int s = clip.sampled_indices[0];
      CHECK(s >= 0);
      CHECK(s <= 84);
      for (std::size_t i = 0; i < 16; ++i) CHECK(clip.sampled_indices[i] == s + int(i));
    }
  }
  SUBCASE("start draw is uniform enough to reach both ends") {
    std::vector<int> hits(5, 0);
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      Rng r(seed);
      ++hits[static_cast<std::size_t>(sample_consecutive(numbered_video(20), 16, r).sampled_indices[0])];
    }
    for (int h : hits) CHECK(h > 60);
  }
  SUBCASE("short video pads") {
    auto clip = sample_consecutive(numbered_video(12), 16, rng);
    CHECK(clip.frames.size() == 16);
    CHECK(std::count(clip.sampled_indices.begin(), clip.sampled_indices.end(), kPaddedFrame) == 4);
  }
  SUBCASE("fixed start") {
    auto clip = sample_consecutive(numbered_video(30), 8, rng, 5);
    CHECK(clip.sampled_indices.front() == 5);
    CHECK(clip.sampled_indices.back() == 12);
    CHECK_THROWS_AS(sample_consecutive(numbered_video(30), 8, rng, 23), Error);
  }
  SUBCASE("empty video rejected") {
    CHECK_THROWS_AS(sample_consecutive(Video{}, 4, rng), Error);
    CHECK_THROWS_AS(sample_even(Video{}, 4, rng), Error);
  }
  SUBCASE("frames match the recorded indices") {
    Video v = numbered_video(40);
    auto clip = sample_consecutive(v, 10, rng);
    for (std::size_t i = 0; i < 10; ++i)
      CHECK(clip.frames[i] == v.frames[static_cast<std::size_t>(clip.sampled_indices[i])]);
  }
}

TEST_CASE("even sampling") {
  Rng rng(0);
  CHECK(even_indices(16, 16) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  CHECK(even_indices(32, 16) == std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30});

  const auto idx = even_indices(62, 16);
  REQUIRE(idx.size() == 16);
  CHECK(idx.front() == 0);
  CHECK(idx.back() <= 61);
  CHECK(double(idx.back()) >= 61.0 - 62.0 / 16.0);
  for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] > idx[i - 1]);

  SUBCASE("never repeats an index when L >= target") {
    for (std::size_t L = 1; L < 120; ++L)
      for (std::size_t t = 1; t <= L; t += 3) {
        auto e = even_indices(L, t);
        CHECK(std::adjacent_find(e.begin(), e.end(), [](auto a, auto b) { return b <= a; }) == e.end());
        CHECK(e.back() < L);
      }
  }
  SUBCASE("pure function") {
    Rng a(1), b(99);
    Video v = numbered_video(50);
    auto c1 = sample_even(v, 16, a), c2 = sample_even(v, 16, b);
    CHECK(c1.sampled_indices == c2.sampled_indices);
    CHECK(c1.frames == c2.frames);
  }
  SUBCASE("short video pads") {
    auto clip = sample_even(numbered_video(10), 16, rng);
    CHECK(clip.frames.size() == 16);
  }
}

TEST_CASE("padding") {
  SUBCASE("15 -> 16 adds one duplicate at one end") {
    Rng rng(5);
    Video v = numbered_video(15);
    std::vector<int> idx(15);
    for (int i = 0; i < 15; ++i) idx[static_cast<std::size_t>(i)] = i;
    auto clip = pad_clip(v.frames, idx, 16, rng);
    REQUIRE(clip.frames.size() == 16);
    CHECK(std::count(clip.sampled_indices.begin(), clip.sampled_indices.end(), kPaddedFrame) == 1);
    const bool front = clip.sampled_indices.front() == kPaddedFrame;
    const bool back = clip.sampled_indices.back() == kPaddedFrame;
    CHECK(front != back);
    CHECK((front ? clip.frames[0] == v.frames[0] : clip.frames[15] == v.frames[14]));
  }
  SUBCASE("12 -> 16 choosing last") {
    Rng rng(seed_choosing(false));
    Video v = numbered_video(12);
    auto clip = sample_consecutive(v, 16, rng);
    const std::vector<int> expected = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, -1, -1, -1, -1};
    CHECK(clip.sampled_indices == expected);
    for (std::size_t i = 0; i < 12; ++i) CHECK(clip.frames[i] == v.frames[i]);
    for (std::size_t i = 12; i < 16; ++i) CHECK(clip.frames[i] == v.frames[11]);
  }
  SUBCASE("12 -> 16 choosing first") {
    Rng rng(seed_choosing(true));
    Video v = numbered_video(12);
    auto clip = sample_consecutive(v, 16, rng);
    const std::vector<int> expected = {-1, -1, -1, -1, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    CHECK(clip.sampled_indices == expected);
    for (std::size_t i = 0; i < 4; ++i) CHECK(clip.frames[i] == v.frames[0]);
  }
  SUBCASE("first-vs-last fraction over 10k trials") {
    Video v = numbered_video(3, 1, 1);
    const std::vector<int> idx = {0, 1, 2};
    int first = 0;
    for (std::uint64_t t = 0; t < 10000; ++t) {
      Rng rng(derive_seed(2024, t));
      auto clip = pad_clip(v.frames, idx, 4, rng);
      first += clip.sampled_indices.front() == kPaddedFrame;
    }
    CHECK(std::abs(first / 10000.0 - 0.5) <= 0.02);
  }
  SUBCASE("preconditions") {
    Rng rng(0);
    Video v = numbered_video(4);
    const std::vector<int> idx = {0, 1, 2, 3};
    CHECK_THROWS_AS(pad_clip(v.frames, idx, 4, rng), Error);
    CHECK_THROWS_AS(pad_clip(std::span<const Frame>{}, std::span<const int>{}, 4, rng), Error);
  }
  SUBCASE("originals preserved in order") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      auto clip = sample_even(numbered_video(5), 16, rng);
      std::vector<int> real;
      for (int i : clip.sampled_indices)
        if (i != kPaddedFrame) real.push_back(i);
      CHECK(real == std::vector<int>{0, 1, 2, 3, 4});
    }
  }
}

TEST_CASE("resize rule") {
  CHECK(resize_dims({240, 250}) == FrameSize{240, 250});
  CHECK(resize_dims({113, 128}) == FrameSize{226, 256});
  CHECK(resize_dims({200, 400}) == FrameSize{128, 256});
  CHECK(resize_dims({400, 200}) == FrameSize{256, 128});
  CHECK(resize_dims({226, 226}) == FrameSize{226, 226});
  CHECK(resize_dims({512, 512}) == FrameSize{256, 256});
  CHECK_THROWS_AS(resize_dims({0, 5}), Error);

  SUBCASE("invariant over a size sweep") {
    for (std::size_t h = 1; h < 700; h += 13)
      for (std::size_t w = 1; w < 700; w += 17) {
        const auto out = resize_dims({h, w});
        const auto lo = std::min(out.height, out.width), hi = std::max(out.height, out.width);
        CHECK((lo >= 226 || hi == 256));
        CHECK_FALSE((lo < 226 && hi > 256));
      }
  }
  SUBCASE("unchanged frame is copied bit-exact") {
    Frame f = numbered_frame(240, 250, 3);
    CHECK(resize_rule(f) == f);
  }
  SUBCASE("bilinear matches the oracle") {
    Rng rng(8);
    Frame f = random_frame(rng, 7, 9, ChannelOrder::BGR);
    for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{14, 18}, {3, 4}, {10, 5}}) {
      Frame r = resize_bilinear(f, oh, ow);
      REQUIRE(r.height == oh);
      REQUIRE(r.width == ow);
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
          for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(r.at(y, x, c) - bilinear_oracle(f, oh, ow, y, x, c)) <= 0.5 + 1e-9);
    }
  }
  SUBCASE("constant frame stays constant") {
    Frame f(113, 128, ChannelOrder::BGR, 77);
    Frame r = resize_rule(f);
    CHECK(r.height == 226);
    CHECK(r.width == 256);
    CHECK(std::all_of(r.pixels.begin(), r.pixels.end(), [](auto p) { return p == 77; }));
  }
  SUBCASE("bounds scale with the crop") {
    CHECK(ResizeBounds::for_crop(224).min_side == 226);
    CHECK(ResizeBounds::for_crop(224).max_side == 256);
    CHECK(ResizeBounds::for_crop(32).min_side == 34);
    CHECK(ResizeBounds::for_crop(32).max_side == 37);
  }
}

TEST_CASE("channel order") {
  Frame f(1, 1, ChannelOrder::BGR);
  f.at(0, 0, 0) = 10;
  f.at(0, 0, 1) = 20;
  f.at(0, 0, 2) = 30;
  Frame rgb = bgr_to_rgb(f);
  CHECK(rgb.order == ChannelOrder::RGB);
  CHECK(rgb.at(0, 0, 0) == 30);
  CHECK(rgb.at(0, 0, 1) == 20);
  CHECK(rgb.at(0, 0, 2) == 10);
  CHECK_THROWS_AS(bgr_to_rgb(rgb), Error);
  CHECK_THROWS_AS(rgb_to_bgr(f), Error);

  Frame gray(5, 6, ChannelOrder::BGR, 90);
  CHECK(bgr_to_rgb(gray).pixels == gray.pixels);

  Rng rng(1);
  Frame r = random_frame(rng, 17, 11, ChannelOrder::BGR);
  CHECK(rgb_to_bgr(bgr_to_rgb(r)) == r);
}

TEST_CASE("train augmentation") {
  Rng rng(12);
  SUBCASE("224 input forces offset zero") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng r(s);
      auto out = augment_train(clip_of(2, 224, 224, rng), r);
      for (const auto& t : out.transforms) {
        CHECK(t.crop_y == 0);
        CHECK(t.crop_x == 0);
      }
    }
  }
  SUBCASE("one offset and flip per clip") {
    VideoClip clip = clip_of(10, 226, 256, rng);
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rng r(s);
      auto out = augment_train(clip, r);
      REQUIRE(out.transforms.size() == 10);
      for (const auto& t : out.transforms) CHECK(t == out.transforms.front());
      for (std::size_t i = 0; i < 10; ++i) {
        const auto& t = out.transforms[i];
        Frame expected = crop_frame(clip.frames[i], t.crop_y, t.crop_x, 224, 224);
        if (t.flipped) expected = flip_horizontal(expected);
        CHECK(out.frames[i] == expected);
        CHECK(out.frames[i].height == 224);
        CHECK(out.frames[i].width == 224);
      }
    }
  }
  SUBCASE("both flip outcomes occur") {
    VideoClip clip = clip_of(1, 230, 230, rng);
    int flips = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng r(s);
      flips += augment_train(clip, r).transforms[0].flipped;
    }
    CHECK(flips > 60);
    CHECK(flips < 140);
  }
  SUBCASE("flip is an involution") {
    Frame f = random_frame(rng, 224, 224, ChannelOrder::RGB);
    CHECK(flip_horizontal(flip_horizontal(f)) == f);
  }
  SUBCASE("undersized frame rejected") {
    CHECK_THROWS_AS(augment_train(clip_of(2, 200, 256, rng), rng), Error);
    CHECK_THROWS_AS(crop_center(clip_of(2, 226, 223, rng)), Error);
  }
}

TEST_CASE("center crop") {
  Rng rng(2);
  auto offset = [&](std::size_t h, std::size_t w) {
    auto out = crop_center(clip_of(1, h, w, rng));
    CHECK_FALSE(out.transforms[0].flipped);
    return std::pair{out.transforms[0].crop_y, out.transforms[0].crop_x};
  };
  CHECK(offset(224, 224) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(offset(226, 256) == std::pair<std::size_t, std::size_t>{1, 16});
  CHECK(offset(256, 256) == std::pair<std::size_t, std::size_t>{16, 16});

  VideoClip c = clip_of(3, 224, 224, rng);
  CHECK(crop_center(c).frames == c.frames);
}

TEST_CASE("model tensor") {
  VideoClip clip;
  clip.frames.assign(2, Frame(4, 5, ChannelOrder::RGB, 0));
  auto zero = to_model_tensor<float>(clip);
  CHECK(zero.shape() == Shape{2, 3, 4, 5});
  CHECK(std::all_of(zero.data().begin(), zero.data().end(), [](float v) { return v == 0.0f; }));

  for (auto& f : clip.frames) std::fill(f.pixels.begin(), f.pixels.end(), 255);
  auto one = to_model_tensor<float>(clip);
  CHECK(std::all_of(one.data().begin(), one.data().end(), [](float v) { return v == 1.0f; }));

  clip.frames[1].at(2, 3, 1) = 128;
  auto t = to_model_tensor<double>(clip);
  CHECK(t.data()[((1 * 3 + 1) * 4 + 2) * 5 + 3] == doctest::Approx(0.50196).epsilon(1e-5));

  clip.frames[0].order = ChannelOrder::BGR;
  CHECK_THROWS_AS(to_model_tensor<float>(clip), Error);

  SUBCASE("frame-major layout and stacking") {
    Rng rng(4);
    VideoClip a = clip_of(2, 3, 3, rng), b = clip_of(2, 3, 3, rng);
    std::vector<VideoClip> both = {a, b};
    auto s = stack_clips<float>(both);
    CHECK(s.shape() == Shape{2, 2, 3, 3, 3});
    CHECK(s.data()[((((1 * 2 + 1) * 3 + 2) * 3 + 1) * 3) + 0] == doctest::Approx(b.frames[1].at(1, 0, 2) / 255.0));
  }
}

TEST_CASE("manifest loading") {
  SUBCASE("WLASL100-shaped manifest") {
    auto m = parse_manifest(wlasl100_fixture(), "wlasl100.json");
    CHECK(m.num_classes() == 100);
    CHECK(m.instances.size() == 2038);
    CHECK(validate_wlasl100(m).empty());
    CHECK(std::is_sorted(m.glosses.begin(), m.glosses.end()));
    auto merged = merge_train_val(m);
    CHECK(merged.instances.size() == 2038);
    CHECK(merged.count(Split::Val) == 0);
    CHECK(merged.count(Split::Train) == m.count(Split::Train) + m.count(Split::Val));
    CHECK(merged.count(Split::Test) == m.count(Split::Test));
  }
  SUBCASE("empty gloss list") {
    auto m = parse_manifest("[]");
    CHECK(m.num_classes() == 0);
    CHECK(m.instances.empty());
  }
  SUBCASE("indices follow sorted gloss names") {
    auto m = parse_manifest(R"([
      {"gloss": "drink", "instances": [{"video_id": "a", "split": "train"}]},
      {"gloss": "book", "instances": [{"video_id": "b", "split": "test"}]},
      {"gloss": "computer", "instances": [{"video_id": "c", "split": "val"}]},
      {"gloss": "before", "instances": [{"video_id": "d", "split": "train"}]}
    ])");
    std::vector<std::string> names = {"drink", "book", "computer", "before"};
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(m.glosses == sorted);
    for (const auto& inst : m.instances) {
      const std::size_t entry = static_cast<std::size_t>(inst.video_id[0] - 'a');
      CHECK(m.glosses[static_cast<std::size_t>(inst.gloss)] == names[entry]);
    }
  }
  SUBCASE("4:1:1 merges to 5:0:1") {
    auto m = synthetic_manifest({.classes = 3, .per_class = 6});
    for (std::size_t g = 0; g < 3; ++g) {
      std::array<int, 3> before{}, after{};
      for (const auto& i : m.instances)
        if (i.gloss == int(g)) ++before[static_cast<std::size_t>(i.split)];
      for (const auto& i : merge_train_val(m).instances)
        if (i.gloss == int(g)) ++after[static_cast<std::size_t>(i.split)];
      CHECK(before == std::array<int, 3>{4, 1, 1});
      CHECK(after == std::array<int, 3>{5, 0, 1});
    }
    auto once = merge_train_val(m);
    auto twice = merge_train_val(once);
    for (std::size_t i = 0; i < once.instances.size(); ++i) CHECK(once.instances[i].split == twice.instances[i].split);
  }
  SUBCASE("errors name the line") {
    const std::string missing_split =
        "[\n  {\"gloss\": \"a\", \"instances\": [\n    {\"video_id\": \"1\", \"split\": \"train\"},\n"
        "    {\"video_id\": \"2\"}\n  ]}\n]\n";
    CHECK(error_message([&] { parse_manifest(missing_split, "m.json"); }) ==
          "m.json:4: instance '2' has no split");

    const std::string duplicate =
        "[\n  {\"gloss\": \"a\", \"instances\": [{\"video_id\": \"7\", \"split\": \"train\"}]},\n"
        "  {\"gloss\": \"b\", \"instances\": [\n    {\"video_id\": \"7\", \"split\": \"test\"}]}\n]\n";
    CHECK(error_message([&] { parse_manifest(duplicate, "m.json"); }) == "m.json:4: duplicate video_id '7'");

    const std::string bad_split = "[{\"gloss\": \"a\", \"instances\": [{\"video_id\": \"1\", \"split\": \"dev\"}]}]";
    CHECK(error_message([&] { parse_manifest(bad_split, "m.json"); }).find("unknown split 'dev'") !=
          std::string::npos);
    CHECK_THROWS_AS(parse_manifest("[{\"instances\": []}]"), Error);
    CHECK_THROWS_AS(parse_manifest("{\"gloss\": 1"), Error);
  }
  SUBCASE("sanity bounds report violations") {
    auto m = synthetic_manifest({.classes = 4, .per_class = 6});
    auto problems = validate_wlasl100(m);
    CHECK(problems.size() == 1 + 4 + 24);
    CHECK(problems.front() == "expected 100 glosses, found 4");
  }
}

TEST_CASE("pipeline config") {
  auto kv = KeyValueConfig::parse("target_frames = 8\nsampling = consecutive # c\ncrop=32\nseed=7\n");
  auto cfg = PipelineConfig::from_kv(kv);
  CHECK(cfg.target_frames == 8);
  CHECK(cfg.sampling == Sampling::Consecutive);
  CHECK(cfg.crop == 32);
  CHECK(cfg.seed == 7);
  CHECK_THROWS_AS(PipelineConfig::from_kv(KeyValueConfig::parse("sampling = even\nstart_frame = 3\n")), Error);
  CHECK_THROWS_AS(PipelineConfig::from_kv(KeyValueConfig::parse("sampling = random\n")), Error);
  CHECK(error_message([] { KeyValueConfig::parse("a = 1\nnonsense\n", "p.cfg"); }) ==
        "p.cfg:2: expected 'key = value'");
  CHECK_THROWS_AS(KeyValueConfig::parse("crop = x").get_int("crop"), Error);
}

TEST_CASE("synthetic dataset") {
  SyntheticSpec spec{.classes = 4, .per_class = 6, .frames = 8, .size = 32, .seed = 11};
  auto m = synthetic_manifest(spec);
  CHECK(m.instances.size() == 24);
  CHECK(m.count(Split::Train) == 16);
  CHECK(m.count(Split::Val) == 4);
  CHECK(m.count(Split::Test) == 4);

  SUBCASE("same seed gives identical files") {
    auto a = temp_dir("syn_a"), b = temp_dir("syn_b");
    make_synthetic_dataset(spec, a);
    make_synthetic_dataset(spec, b);
    CHECK(file_bytes(a / "manifest.json") == file_bytes(b / "manifest.json"));
    for (const auto& inst : m.instances)
      CHECK(file_bytes(video_path(a, inst.video_id)) == file_bytes(video_path(b, inst.video_id)));
    auto loaded = load_manifest(a / "manifest.json");
    CHECK(loaded.instances.size() == 24);
    CHECK(loaded.glosses == m.glosses);
    Video v = read_video(video_path(a, "c02_003"));
    CHECK(v.frames == synthesize_video(spec, 2, 3).frames);
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
  }
  SUBCASE("classes differ from the first frame") {
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t d = c + 1; d < 4; ++d)
        CHECK(synthesize_video(spec, c, 0).frames[0] != synthesize_video(spec, d, 0).frames[0]);
  }
  SUBCASE("a different seed changes the jitter") {
    SyntheticSpec other = spec;
    other.seed = 12;
    CHECK(synthesize_video(spec, 1, 1).frames != synthesize_video(other, 1, 1).frames);
  }
  SUBCASE("config guard") {
    CHECK_THROWS_AS(synthetic_manifest({.size = 32, .crop = 224}), Error);
    CHECK_NOTHROW(synthetic_manifest({.size = 32, .crop = 32}));
    CHECK_THROWS_AS(synthetic_manifest({.classes = 0}), Error);
  }
  SUBCASE("container rejects garbage") {
    auto dir = temp_dir("garbage");
    std::ofstream(dir / "bad.vsv") << "nope";
    CHECK_THROWS_AS(read_video(dir / "bad.vsv"), Error);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("full pipeline determinism") {
  SyntheticSpec spec{.classes = 2, .per_class = 2, .frames = 10, .size = 40, .seed = 3};
  Video v = synthesize_video(spec, 1, 0);
  PipelineConfig cfg{.target_frames = 16, .sampling = Sampling::Consecutive, .crop = 32, .seed = 9};
  for (Phase phase : {Phase::Train, Phase::Test}) {
    Rng r1 = clip_rng(cfg.seed, v.id, 2), r2 = clip_rng(cfg.seed, v.id, 2);
    auto a = preprocess(v, cfg, phase, r1), b = preprocess(v, cfg, phase, r2);
    CHECK(a.frames == b.frames);
    CHECK(a.sampled_indices == b.sampled_indices);
    CHECK(a.frames.size() == 16);
    CHECK(a.frames[0].order == ChannelOrder::RGB);
    CHECK(a.frames[0].height == 32);
    CHECK(a.frames[0].width == 32);
  }
  CHECK(clip_rng(1, "x", 0)() != clip_rng(1, "x", 1)());
  CHECK(clip_rng(1, "x", 0)() != clip_rng(1, "y", 0)());
}
