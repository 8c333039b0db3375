#include "vslr/video.hpp"

#include <algorithm>
#include <cmath>

#include "vslr/error.hpp"

namespace vslr {

Frame::Frame(std::size_t h, std::size_t w, ChannelOrder channel_order, std::uint8_t fill)
    : height(h), width(w), order(channel_order), pixels(h * w * 3, fill) {}

namespace {

void require_nonempty(const Video& video) {
  if (video.frames.empty()) fail(errc::kPrecondition, "video '" + video.id + "' has no frames");
}

void require_target(std::size_t target) {
  if (target == 0) fail(errc::kConfig, "target frame count must be at least 1");
}

VideoClip select(const Video& video, const std::vector<std::size_t>& indices) {
  VideoClip clip;
  clip.source_id = video.id;
  clip.label = video.label;
  for (auto i : indices) {
    clip.frames.push_back(video.frames[i]);
    clip.sampled_indices.push_back(static_cast<int>(i));
  }
  return clip;
}

VideoClip pad_whole(const Video& video, std::size_t target, Rng& rng) {
  std::vector<int> indices(video.frames.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  VideoClip clip = pad_clip(video.frames, indices, target, rng, video.id);
  clip.label = video.label;
  return clip;
}

void require_crop_fits(const VideoClip& clip, std::size_t crop) {
  if (clip.frames.empty()) fail(errc::kPrecondition, "clip '" + clip.source_id + "' has no frames");
  for (const auto& f : clip.frames) {
    if (f.height < crop || f.width < crop) {
      fail(errc::kPrecondition, "frame " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                                    " is smaller than the " + std::to_string(crop) + " crop");
    }
  }
}

Frame swap_channels(const Frame& frame, ChannelOrder to) {
  Frame out = frame;
  for (std::size_t p = 0; p < frame.height * frame.width; ++p)
    std::swap(out.pixels[p * 3], out.pixels[p * 3 + 2]);
  out.order = to;
  return out;
}

}  // namespace

VideoClip sample_consecutive(const Video& video, std::size_t target, Rng& rng,
                             std::optional<std::size_t> fixed_start) {
  require_nonempty(video);
  require_target(target);
  const std::size_t length = video.frames.size();
  if (length < target) return pad_whole(video, target, rng);
  std::size_t start;
  if (fixed_start) {
    if (*fixed_start > length - target) {
      fail(errc::kConfig, "start frame " + std::to_string(*fixed_start) + " leaves fewer than " +
                              std::to_string(target) + " frames in '" + video.id + "'");
    }
    start = *fixed_start;
  } else {
    start = uniform_index(rng, length - target + 1);
  }
  std::vector<std::size_t> indices(target);
  for (std::size_t i = 0; i < target; ++i) indices[i] = start + i;
  return select(video, indices);
}

std::vector<std::size_t> even_indices(std::size_t length, std::size_t target) {
  std::vector<std::size_t> indices(target);
  for (std::size_t i = 0; i < target; ++i) indices[i] = i * length / target;
  return indices;
}

VideoClip sample_even(const Video& video, std::size_t target, Rng& rng) {
  require_nonempty(video);
  require_target(target);
  if (video.frames.size() < target) return pad_whole(video, target, rng);
  return select(video, even_indices(video.frames.size(), target));
}

VideoClip pad_clip(std::span<const Frame> frames, std::span<const int> indices, std::size_t target,
                   Rng& rng, std::string source_id) {
  if (frames.empty() || frames.size() >= target) {
    fail(errc::kPrecondition, "pad_clip needs 1 <= length < target, got length " +
                                  std::to_string(frames.size()) + " for target " +
                                  std::to_string(target));
  }
  if (indices.size() != frames.size()) fail(errc::kPrecondition, "pad_clip: index/frame count mismatch");
  const bool use_first = coin_flip(rng);
  const std::size_t missing = target - frames.size();
  VideoClip clip;
  clip.source_id = std::move(source_id);
  if (use_first) {
    clip.frames.assign(missing, frames.front());
    clip.sampled_indices.assign(missing, kPaddedFrame);
  }
  clip.frames.insert(clip.frames.end(), frames.begin(), frames.end());
  clip.sampled_indices.insert(clip.sampled_indices.end(), indices.begin(), indices.end());
  if (!use_first) {
    clip.frames.insert(clip.frames.end(), missing, frames.back());
    clip.sampled_indices.insert(clip.sampled_indices.end(), missing, kPaddedFrame);
  }
  return clip;
}

ResizeBounds ResizeBounds::for_crop(std::size_t crop) {
  return {crop + 2, static_cast<std::size_t>(std::lround(double(crop) * 256.0 / 224.0))};
}

FrameSize resize_dims(FrameSize in, const ResizeBounds& bounds) {
  if (in.height == 0 || in.width == 0) fail(errc::kPrecondition, "zero-dimension frame");
  double h = double(in.height), w = double(in.width);
  if (std::min(h, w) < double(bounds.min_side)) {
    const double s = double(bounds.min_side) / std::min(h, w);
    if (h <= w) {
      h = double(bounds.min_side);
      w = std::round(w * s);
    } else {
      w = double(bounds.min_side);
      h = std::round(h * s);
    }
  }
  if (std::max(h, w) > double(bounds.max_side)) {
    const double s = double(bounds.max_side) / std::max(h, w);
    if (h >= w) {
      h = double(bounds.max_side);
      w = std::max(1.0, std::round(w * s));
    } else {
      w = double(bounds.max_side);
      h = std::max(1.0, std::round(h * s));
    }
  }
  return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
}

Frame resize_bilinear(const Frame& frame, std::size_t height, std::size_t width) {
  if (frame.height == 0 || frame.width == 0 || height == 0 || width == 0) {
    fail(errc::kPrecondition, "zero-dimension frame");
  }
  if (height == frame.height && width == frame.width) return frame;
  Frame out(height, width, frame.order);
  const double sy = double(frame.height) / double(height);
  const double sx = double(frame.width) / double(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(frame.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, frame.height - 1);
    const double wy = fy - double(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(frame.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, frame.width - 1);
      const double wx = fx - double(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = frame.at(y0, x0, c) * (1 - wx) + frame.at(y0, x1, c) * wx;
        const double bottom = frame.at(y1, x0, c) * (1 - wx) + frame.at(y1, x1, c) * wx;
        const double v = top * (1 - wy) + bottom * wy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Frame resize_rule(const Frame& frame, const ResizeBounds& bounds) {
  const FrameSize size = resize_dims({frame.height, frame.width}, bounds);
  return resize_bilinear(frame, size.height, size.width);
}

Frame bgr_to_rgb(const Frame& frame) {
  if (frame.order != ChannelOrder::BGR) fail(errc::kPrecondition, "bgr_to_rgb: frame is already RGB");
  return swap_channels(frame, ChannelOrder::RGB);
}

Frame rgb_to_bgr(const Frame& frame) {
  if (frame.order != ChannelOrder::RGB) fail(errc::kPrecondition, "rgb_to_bgr: frame is already BGR");
  return swap_channels(frame, ChannelOrder::BGR);
}

Frame crop_frame(const Frame& frame, std::size_t y, std::size_t x, std::size_t height,
                 std::size_t width) {
  if (y + height > frame.height || x + width > frame.width) {
    fail(errc::kPrecondition, "crop outside frame bounds");
  }
  Frame out(height, width, frame.order);
  for (std::size_t r = 0; r < height; ++r)
    std::copy_n(frame.pixels.begin() + static_cast<std::ptrdiff_t>(((y + r) * frame.width + x) * 3),
                width * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(r * width * 3));
  return out;
}

Frame flip_horizontal(const Frame& frame) {
  Frame out = frame;
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = frame.at(y, frame.width - 1 - x, c);
  return out;
}

VideoClip augment_train(const VideoClip& clip, Rng& rng, std::size_t crop) {
  require_crop_fits(clip, crop);
  const Frame& first = clip.frames.front();
  for (const auto& f : clip.frames) {
    if (f.height != first.height || f.width != first.width)
      fail(errc::kPrecondition, "clip '" + clip.source_id + "' has mixed frame sizes");
  }
  FrameTransform t;
  t.crop_y = uniform_index(rng, first.height - crop + 1);
  t.crop_x = uniform_index(rng, first.width - crop + 1);
  t.flipped = coin_flip(rng);
  VideoClip out = clip;
  out.transforms.clear();
  for (auto& f : out.frames) {
    f = crop_frame(f, t.crop_y, t.crop_x, crop, crop);
    if (t.flipped) f = flip_horizontal(f);
    out.transforms.push_back(t);
  }
  return out;
}

VideoClip crop_center(const VideoClip& clip, std::size_t crop) {
  require_crop_fits(clip, crop);
  VideoClip out = clip;
  out.transforms.clear();
  for (auto& f : out.frames) {
    const FrameTransform t{(f.height - crop) / 2, (f.width - crop) / 2, false};
    f = crop_frame(f, t.crop_y, t.crop_x, crop, crop);
    out.transforms.push_back(t);
  }
  return out;
}

template <typename T>
Tensor<T> to_model_tensor(const VideoClip& clip) {
  if (clip.frames.empty()) fail(errc::kPrecondition, "empty clip");
  const std::size_t h = clip.frames[0].height, w = clip.frames[0].width;
  const std::size_t f_count = clip.frames.size();
  std::vector<T> values(f_count * 3 * h * w);
  for (std::size_t f = 0; f < f_count; ++f) {
    const Frame& frame = clip.frames[f];
    if (frame.order != ChannelOrder::RGB) fail(errc::kPrecondition, "to_model_tensor: frames must be RGB");
    if (frame.height != h || frame.width != w) fail(errc::kPrecondition, "to_model_tensor: mixed frame sizes");
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          values[((f * 3 + c) * h + y) * w + x] = static_cast<T>(frame.at(y, x, c)) / T(255);
  }
  return Tensor<T>({f_count, 3, h, w}, std::move(values));
}

template <typename T>
Tensor<T> stack_clips(std::span<const VideoClip> clips) {
  if (clips.empty()) fail(errc::kPrecondition, "no clips to stack");
  std::vector<T> values;
  Shape first;
  for (const auto& clip : clips) {
    auto t = to_model_tensor<T>(clip);
    if (first.empty()) first = t.shape();
    if (t.shape() != first) fail(errc::kShape, "stack_clips: clip shapes differ");
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  Shape shape{clips.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  return Tensor<T>(std::move(shape), std::move(values));
}

template Tensor<float> to_model_tensor<float>(const VideoClip&);
template Tensor<double> to_model_tensor<double>(const VideoClip&);
template Tensor<float> stack_clips<float>(std::span<const VideoClip>);
template Tensor<double> stack_clips<double>(std::span<const VideoClip>);

}  // namespace vslr
