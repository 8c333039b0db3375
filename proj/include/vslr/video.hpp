#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vslr/rng.hpp"
#include "vslr/tensor.hpp"

namespace vslr {

enum class ChannelOrder { BGR, RGB };

// 8-bit interleaved frame, row-major, three channels.
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  ChannelOrder order = ChannelOrder::BGR;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, ChannelOrder channel_order, std::uint8_t fill = 0);

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const Frame&) const = default;
};

// Where a clip frame's 224-style patch came from.
struct FrameTransform {
  std::size_t crop_y = 0;
  std::size_t crop_x = 0;
  bool flipped = false;
  bool operator==(const FrameTransform&) const = default;
};

// Raw decoded video, the input to sampling.
struct Video {
  std::string id;
  std::vector<Frame> frames;
  std::optional<int> label;
};

struct VideoClip {
  std::vector<Frame> frames;
  std::string source_id;
  // Original frame index per clip frame; kPaddedFrame marks padding copies.
  std::vector<int> sampled_indices;
  std::optional<int> label;
  // Filled by the crop stage, one entry per frame.
  std::vector<FrameTransform> transforms;
};

inline constexpr int kPaddedFrame = -1;

// Random start in [0, L - target]; `fixed_start` pins it instead. Shorter
// videos are padded.
VideoClip sample_consecutive(const Video& video, std::size_t target, Rng& rng,
                             std::optional<std::size_t> fixed_start = std::nullopt);

// index_i = floor(i * L / target) when L >= target; shorter videos are padded
// (the rng is only consumed on that path).
VideoClip sample_even(const Video& video, std::size_t target, Rng& rng);
std::vector<std::size_t> even_indices(std::size_t length, std::size_t target);

// One fair coin chooses first or last frame; that frame is repeated at its
// end of the clip until `target` frames exist.
VideoClip pad_clip(std::span<const Frame> frames, std::span<const int> indices, std::size_t target,
                   Rng& rng, std::string source_id = {});

struct ResizeBounds {
  std::size_t min_side = 226;
  std::size_t max_side = 256;

  // Bounds that keep the 224 -> (226, 256) proportions for another crop size.
  static ResizeBounds for_crop(std::size_t crop);
};

struct FrameSize {
  std::size_t height;
  std::size_t width;
  bool operator==(const FrameSize&) const = default;
};

// Upscale so min side == min_side when smaller, then downscale so max side ==
// max_side when larger; aspect preserved, dimensions rounded to nearest.
FrameSize resize_dims(FrameSize in, const ResizeBounds& bounds = {});
Frame resize_bilinear(const Frame& frame, std::size_t height, std::size_t width);
Frame resize_rule(const Frame& frame, const ResizeBounds& bounds = {});

Frame bgr_to_rgb(const Frame& frame);
Frame rgb_to_bgr(const Frame& frame);

Frame crop_frame(const Frame& frame, std::size_t y, std::size_t x, std::size_t height,
                 std::size_t width);
Frame flip_horizontal(const Frame& frame);

// One offset and one flip decision per clip, shared by every frame.
VideoClip augment_train(const VideoClip& clip, Rng& rng, std::size_t crop = 224);
VideoClip crop_center(const VideoClip& clip, std::size_t crop = 224);

// [F, 3, H, W] with values in [0, 1].
template <typename T>
Tensor<T> to_model_tensor(const VideoClip& clip);

// Stacks clips into [B, F, 3, H, W].
template <typename T>
Tensor<T> stack_clips(std::span<const VideoClip> clips);

}  // namespace vslr
