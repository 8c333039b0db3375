#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vslr {

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);

struct Instance {
  std::string video_id;
  int gloss = 0;
  Split split = Split::Train;
  int frame_start = 1;
  int frame_end = -1;
  // 0 when the manifest does not say.
  std::size_t frame_count = 0;
};

// Gloss-labelled instances. Class indices are 0..G-1 in sorted gloss order.
struct DatasetManifest {
  std::vector<std::string> glosses;
  std::vector<Instance> instances;

  std::size_t num_classes() const { return glosses.size(); }
  std::size_t count(Split split) const;
  std::vector<Instance> split_instances(Split split) const;
};

// WLASL-style JSON: an array of {"gloss": str, "instances": [{"video_id",
// "split", "frame_start", "frame_end", ...}]}. Unknown fields are ignored; the
// optional "num_frames" field records a frame count. Failures name the source
// and line, e.g. "WLASL_v0.3.json:212: instance '05237' has no split".
DatasetManifest parse_manifest(const std::string& text, const std::string& source = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Relabels every validation instance as training; evaluation uses test.
DatasetManifest merge_train_val(const DatasetManifest& manifest);

// Sanity bounds of the 100-gloss subset: 100 classes, 18..40 instances per
// gloss, 12..203 frames per video where known. Returns the violations found.
std::vector<std::string> validate_wlasl100(const DatasetManifest& manifest);

}  // namespace vslr
