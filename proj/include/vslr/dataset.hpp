#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vslr/kv_config.hpp"
#include "vslr/manifest.hpp"
#include "vslr/video.hpp"

namespace vslr {

// Raw video container (".vsv"), little-endian:
//
//   "VSVD"       4 bytes magic
//   version      u32 (1)
//   frames       u32
//   height       u32
//   width        u32
//   order        u32 (0 = BGR, 1 = RGB)
//   pixels       frames * height * width * 3 bytes, frame-major, row-major,
//                channels interleaved in `order`
void write_video(const std::filesystem::path& path, const Video& video);
Video read_video(const std::filesystem::path& path);

std::filesystem::path video_path(const std::filesystem::path& data_dir, const std::string& video_id);

enum class Sampling { Consecutive, Even };
std::string_view sampling_name(Sampling s);
Sampling parse_sampling(const std::string& s);

enum class Phase { Train, Test };

struct PipelineConfig {
  std::size_t target_frames = 16;
  Sampling sampling = Sampling::Even;
  std::size_t crop = 224;
  std::uint64_t seed = 0;
  // Pins the consecutive-sampling start instead of drawing it.
  std::optional<std::size_t> start_frame;

  // Overlays keys target_frames, sampling, crop, seed, start_frame.
  static PipelineConfig from_kv(const KeyValueConfig& kv, PipelineConfig base);
  static PipelineConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, PipelineConfig()); }
  void validate() const;
  ResizeBounds resize_bounds() const { return ResizeBounds::for_crop(crop); }
};

// Stream for one video in one epoch: hash(seed, video id, epoch). Independent
// of processing order.
Rng clip_rng(std::uint64_t seed, const std::string& video_id, std::uint64_t epoch);

// sample -> pad -> resize rule -> BGR to RGB -> random crop + flip (train) or
// center crop (test).
VideoClip preprocess(const Video& video, const PipelineConfig& cfg, Phase phase, Rng& rng);

struct ClipBatch {
  std::vector<VideoClip> clips;
  // Each clip's stream after preprocessing, for draws that follow it (masks).
  std::vector<Rng> rngs;
};

class VideoStore;

// Preprocesses `ids` with clip_rng(seed, id, epoch) each. Videos are loaded in
// order; preprocessing fans out over up to `threads` workers and the result
// does not depend on the worker count.
ClipBatch load_clips(VideoStore& store, const std::vector<std::string>& ids, const PipelineConfig& cfg,
                     Phase phase, std::uint64_t epoch, std::size_t threads = 1);

// Lazily loads and caches the videos a manifest refers to.
class VideoStore {
 public:
  VideoStore(std::filesystem::path data_dir, const DatasetManifest& manifest);

  const Video& get(const std::string& video_id);
  // Inserts an in-memory video (tests, generated data).
  void put(Video video);

 private:
  std::filesystem::path data_dir_;
  std::map<std::string, int> labels_;
  std::map<std::string, Video> cache_;
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 6;
  std::size_t frames = 8;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  // Crop the pipeline will use; generation refuses frames smaller than it.
  std::optional<std::size_t> crop;
};

std::string synthetic_video_id(std::size_t cls, std::size_t instance);
std::string synthetic_gloss(std::size_t cls);

// A blob moving along a class-specific direction over a smooth background,
// with per-video jitter in start point, radius and speed. Stored BGR.
// Directions are offset so that no class's horizontal mirror coincides with
// another class, keeping classes separable under flip augmentation.
Video synthesize_video(const SyntheticSpec& spec, std::size_t cls, std::size_t instance);

// Splits 4:1:1 per class by instance index (0-3 train, 4 val, 5 test, repeating).
DatasetManifest synthetic_manifest(const SyntheticSpec& spec);

// Writes manifest.json and videos/<id>.vsv under `out_dir`.
DatasetManifest make_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace vslr
