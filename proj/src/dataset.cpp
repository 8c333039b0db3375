#include "vslr/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "vslr/error.hpp"

namespace vslr {

namespace {

constexpr std::array<char, 4> kVideoMagic = {'V', 'S', 'V', 'D'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) fail(errc::kIo, "truncated video file " + path.string());
  return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_video(const std::filesystem::path& path, const Video& video) {
  if (video.frames.empty()) fail(errc::kPrecondition, "cannot write empty video " + video.id);
  const Frame& first = video.frames.front();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  out.write(kVideoMagic.data(), 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(video.frames.size()));
  put_u32(out, static_cast<std::uint32_t>(first.height));
  put_u32(out, static_cast<std::uint32_t>(first.width));
  put_u32(out, first.order == ChannelOrder::BGR ? 0 : 1);
  for (const auto& f : video.frames) {
    if (f.height != first.height || f.width != first.width || f.order != first.order) {
      fail(errc::kPrecondition, "video " + video.id + " has inconsistent frames");
    }
    out.write(reinterpret_cast<const char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  }
  if (!out) fail(errc::kIo, "write failed for " + path.string());
}

Video read_video(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot read video " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kVideoMagic) fail(errc::kIo, path.string() + " is not a .vsv video");
  if (get_u32(in, path) != 1) fail(errc::kIo, path.string() + ": unsupported version");
  const std::uint32_t count = get_u32(in, path);
  const std::uint32_t h = get_u32(in, path), w = get_u32(in, path);
  const std::uint32_t order = get_u32(in, path);
  if (count == 0 || h == 0 || w == 0 || order > 1) fail(errc::kIo, path.string() + ": bad header");
  Video video;
  video.id = path.stem().string();
  for (std::uint32_t i = 0; i < count; ++i) {
    Frame f(h, w, order == 0 ? ChannelOrder::BGR : ChannelOrder::RGB);
    in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
    if (!in) fail(errc::kIo, "truncated video file " + path.string());
    video.frames.push_back(std::move(f));
  }
  return video;
}

std::filesystem::path video_path(const std::filesystem::path& data_dir, const std::string& video_id) {
  return data_dir / "videos" / (video_id + ".vsv");
}

std::string_view sampling_name(Sampling s) { return s == Sampling::Even ? "even" : "consecutive"; }

Sampling parse_sampling(const std::string& s) {
  if (s == "even") return Sampling::Even;
  if (s == "consecutive" || s == "consec") return Sampling::Consecutive;
  fail(errc::kConfig, "sampling must be 'consecutive' or 'even', got '" + s + "'");
}

PipelineConfig PipelineConfig::from_kv(const KeyValueConfig& kv, PipelineConfig base) {
  if (auto v = kv.get_int("target_frames")) base.target_frames = static_cast<std::size_t>(*v);
  if (auto v = kv.get("sampling")) base.sampling = parse_sampling(*v);
  if (auto v = kv.get_int("crop")) base.crop = static_cast<std::size_t>(*v);
  if (auto v = kv.get_int("seed")) base.seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get_int("start_frame")) base.start_frame = static_cast<std::size_t>(*v);
  base.validate();
  return base;
}

void PipelineConfig::validate() const {
  if (target_frames == 0) fail(errc::kConfig, "target_frames must be at least 1");
  if (crop == 0) fail(errc::kConfig, "crop must be positive");
  if (start_frame && sampling == Sampling::Even) {
    fail(errc::kConfig, "start_frame conflicts with even sampling");
  }
}

Rng clip_rng(std::uint64_t seed, const std::string& video_id, std::uint64_t epoch) {
  return Rng(derive_seed(derive_seed(seed, video_id), epoch));
}

VideoClip preprocess(const Video& video, const PipelineConfig& cfg, Phase phase, Rng& rng) {
  VideoClip clip = cfg.sampling == Sampling::Even
                       ? sample_even(video, cfg.target_frames, rng)
                       : sample_consecutive(video, cfg.target_frames, rng, cfg.start_frame);
  const ResizeBounds bounds = cfg.resize_bounds();
  for (auto& f : clip.frames) {
    f = resize_rule(f, bounds);
    if (f.order == ChannelOrder::BGR) f = bgr_to_rgb(f);
  }
  return phase == Phase::Train ? augment_train(clip, rng, cfg.crop) : crop_center(clip, cfg.crop);
}

ClipBatch load_clips(VideoStore& store, const std::vector<std::string>& ids, const PipelineConfig& cfg,
                     Phase phase, std::uint64_t epoch, std::size_t threads) {
  std::vector<const Video*> videos;
  for (const auto& id : ids) videos.push_back(&store.get(id));
  ClipBatch out;
  out.clips.resize(ids.size());
  for (const auto& id : ids) out.rngs.push_back(clip_rng(cfg.seed, id, epoch));
  auto work = [&](std::size_t i) { out.clips[i] = preprocess(*videos[i], cfg, phase, out.rngs[i]); };
  const std::size_t n = ids.size(), workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

VideoStore::VideoStore(std::filesystem::path data_dir, const DatasetManifest& manifest)
    : data_dir_(std::move(data_dir)) {
  for (const auto& inst : manifest.instances) labels_[inst.video_id] = inst.gloss;
}

const Video& VideoStore::get(const std::string& video_id) {
  auto it = cache_.find(video_id);
  if (it != cache_.end()) return it->second;
  Video v = read_video(video_path(data_dir_, video_id));
  v.id = video_id;
  if (auto l = labels_.find(video_id); l != labels_.end()) v.label = l->second;
  return cache_.emplace(video_id, std::move(v)).first->second;
}

void VideoStore::put(Video video) {
  if (!video.label) {
    if (auto l = labels_.find(video.id); l != labels_.end()) video.label = l->second;
  }
  cache_[video.id] = std::move(video);
}

std::string synthetic_video_id(std::size_t cls, std::size_t instance) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%02zu_%03zu", cls, instance);
  return buf;
}

std::string synthetic_gloss(std::size_t cls) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gloss_%02zu", cls);
  return buf;
}

Video synthesize_video(const SyntheticSpec& spec, std::size_t cls, std::size_t instance) {
  const std::string id = synthetic_video_id(cls, instance);
  Rng rng(derive_seed(spec.seed, id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = double(spec.size);
  // theta_j == pi - theta_k would need j + k + 2 * offset == C / 2 (mod C).
  const double offset = spec.classes % 2 == 0 ? 0.25 : 0.0;
  const double angle = 2.0 * M_PI * (double(cls) + offset) / double(spec.classes);
  const double jitter_y = (unit(rng) - 0.5) * s / 8.0;
  const double jitter_x = (unit(rng) - 0.5) * s / 8.0;
  const double radius = s * (0.2 + 0.04 * unit(rng));
  const double speed = 0.85 + 0.3 * unit(rng);
  const double travel = 0.7 * s * speed;

  static constexpr std::array<std::array<double, 3>, 4> kPalette = {
      {{60.0, 200.0, 230.0}, {230.0, 120.0, 60.0}, {90.0, 220.0, 80.0}, {210.0, 70.0, 200.0}}};
  const auto& blob = kPalette[cls % kPalette.size()];

  Video video;
  video.id = id;
  video.label = static_cast<int>(cls);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double phase = spec.frames > 1 ? double(t) / double(spec.frames - 1) - 0.5 : 0.0;
    const double cy = s / 2 + jitter_y + std::sin(angle) * travel * phase;
    const double cx = s / 2 + jitter_x + std::cos(angle) * travel * phase;
    Frame frame(spec.size, spec.size, ChannelOrder::BGR);
    for (std::size_t y = 0; y < spec.size; ++y)
      for (std::size_t x = 0; x < spec.size; ++x) {
        const double fy = double(y) + 0.5, fx = double(x) + 0.5;
        const std::array<double, 3> background = {2.0 + 6.0 * (fx + fy) / (2 * s),  // B
                                                  2.0 + 8.0 * fy / s,               // G
                                                  2.0 + 8.0 * fx / s};              // R
        const double d2 = (fy - cy) * (fy - cy) + (fx - cx) * (fx - cx);
        const double w = std::exp(-d2 / (2 * radius * radius));
        for (std::size_t c = 0; c < 3; ++c)
          frame.at(y, x, c) = static_cast<std::uint8_t>(std::lround(background[c] * (1 - w) + blob[c] * w));
      }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

DatasetManifest synthetic_manifest(const SyntheticSpec& spec) {
  if (spec.classes == 0 || spec.per_class == 0 || spec.frames == 0 || spec.size == 0) {
    fail(errc::kConfig, "synthetic dataset counts must all be at least 1");
  }
  if (spec.crop && *spec.crop > spec.size) {
    fail(errc::kConfig, "frame size " + std::to_string(spec.size) + " is below the pipeline crop " +
                            std::to_string(*spec.crop) + "; lower the crop");
  }
  DatasetManifest m;
  for (std::size_t c = 0; c < spec.classes; ++c) m.glosses.push_back(synthetic_gloss(c));
  for (std::size_t c = 0; c < spec.classes; ++c)
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Instance inst;
      inst.video_id = synthetic_video_id(c, i);
      inst.gloss = static_cast<int>(c);
      const std::size_t slot = i % 6;
      inst.split = slot < 4 ? Split::Train : (slot == 4 ? Split::Val : Split::Test);
      inst.frame_start = 1;
      inst.frame_end = static_cast<int>(spec.frames);
      inst.frame_count = spec.frames;
      m.instances.push_back(inst);
    }
  return m;
}

DatasetManifest make_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  DatasetManifest m = synthetic_manifest(spec);
  std::filesystem::create_directories(out_dir / "videos");
  for (const auto& inst : m.instances) {
    const std::size_t instance = static_cast<std::size_t>(std::stoul(inst.video_id.substr(4)));
    write_video(video_path(out_dir, inst.video_id),
                synthesize_video(spec, static_cast<std::size_t>(inst.gloss), instance));
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace vslr
