#include "vslr/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "vslr/error.hpp"

namespace vslr {

using nlohmann::json;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      instances.begin(), instances.end(), [split](const Instance& i) { return i.split == split; }));
}

std::vector<Instance> DatasetManifest::split_instances(Split split) const {
  std::vector<Instance> out;
  std::copy_if(instances.begin(), instances.end(), std::back_inserter(out),
               [split](const Instance& i) { return i.split == split; });
  return out;
}

namespace {

std::size_t line_at(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

std::string regex_escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

// Locates the nth occurrence of `"key": "value"` in the raw text; 1-based line
// or 0 when not found.
std::size_t find_line(const std::string& text, const std::string& key, const std::string& value,
                      std::size_t nth = 0) {
  const std::regex pattern("\"" + regex_escape(key) + "\"\\s*:\\s*\"" + regex_escape(value) + "\"");
  auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
  for (std::size_t i = 0; it != std::sregex_iterator(); ++it, ++i) {
    if (i == nth) return line_at(text, static_cast<std::size_t>(it->position()));
  }
  return 0;
}

[[noreturn]] void manifest_error(const std::string& source, std::size_t line, const std::string& msg) {
  fail(errc::kManifest, source + ":" + (line ? std::to_string(line) : std::string("?")) + ": " + msg);
}

int int_field(const json& obj, const char* key, int fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number_integer()) return fallback;
  return it->get<int>();
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    manifest_error(source, line_at(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  if (!root.is_array()) manifest_error(source, 1, "top level must be an array of gloss entries");

  // First pass: gloss names, validated, then sorted for contiguous indexing.
  std::vector<std::string> names;
  for (std::size_t g = 0; g < root.size(); ++g) {
    const json& entry = root[g];
    auto gloss = entry.find("gloss");
    if (!entry.is_object() || gloss == entry.end() || !gloss->is_string() ||
        gloss->get<std::string>().empty()) {
      manifest_error(source, 0, "entry " + std::to_string(g) + " has no gloss name");
    }
    names.push_back(gloss->get<std::string>());
  }
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  if (auto dup = std::adjacent_find(sorted.begin(), sorted.end()); dup != sorted.end()) {
    manifest_error(source, find_line(text, "gloss", *dup, 1), "gloss '" + *dup + "' listed twice");
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < sorted.size(); ++i) index[sorted[i]] = static_cast<int>(i);

  DatasetManifest manifest;
  manifest.glosses = sorted;
  std::map<std::string, std::size_t> seen_ids;
  for (std::size_t g = 0; g < root.size(); ++g) {
    const json& entry = root[g];
    auto list = entry.find("instances");
    if (list == entry.end() || !list->is_array()) {
      manifest_error(source, find_line(text, "gloss", names[g]),
                     "gloss '" + names[g] + "' has no instance list");
    }
    for (const json& inst : *list) {
      auto vid = inst.find("video_id");
      if (!inst.is_object() || vid == inst.end() || !vid->is_string() || vid->get<std::string>().empty()) {
        manifest_error(source, find_line(text, "gloss", names[g]),
                       "an instance of gloss '" + names[g] + "' has no video_id");
      }
      const std::string id = vid->get<std::string>();
      const std::size_t occurrence = seen_ids[id]++;
      const std::size_t line = find_line(text, "video_id", id, occurrence);
      if (occurrence > 0) manifest_error(source, line, "duplicate video_id '" + id + "'");

      auto split_field = inst.find("split");
      if (split_field == inst.end() || !split_field->is_string()) {
        manifest_error(source, line, "instance '" + id + "' has no split");
      }
      const std::string split = split_field->get<std::string>();
      Instance out;
      out.video_id = id;
      out.gloss = index.at(names[g]);
      if (split == "train") {
        out.split = Split::Train;
      } else if (split == "val") {
        out.split = Split::Val;
      } else if (split == "test") {
        out.split = Split::Test;
      } else {
        manifest_error(source, line, "instance '" + id + "' has unknown split '" + split + "'");
      }
      out.frame_start = int_field(inst, "frame_start", 1);
      out.frame_end = int_field(inst, "frame_end", -1);
      const int frames = int_field(inst, "num_frames", 0);
      if (frames > 0) {
        out.frame_count = static_cast<std::size_t>(frames);
      } else if (out.frame_end > 0 && out.frame_end >= out.frame_start) {
        out.frame_count = static_cast<std::size_t>(out.frame_end - out.frame_start + 1);
      }
      manifest.instances.push_back(std::move(out));
    }
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::kIo, "cannot read manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.filename().string());
}

json manifest_to_json(const DatasetManifest& manifest) {
  json root = json::array();
  for (std::size_t g = 0; g < manifest.glosses.size(); ++g) {
    json instances = json::array();
    for (const auto& inst : manifest.instances) {
      if (inst.gloss != static_cast<int>(g)) continue;
      json j;
      j["video_id"] = inst.video_id;
      j["split"] = std::string(split_name(inst.split));
      j["frame_start"] = inst.frame_start;
      j["frame_end"] = inst.frame_end;
      if (inst.frame_count) j["num_frames"] = inst.frame_count;
      instances.push_back(std::move(j));
    }
    root.push_back({{"gloss", manifest.glosses[g]}, {"instances", std::move(instances)}});
  }
  return root;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) fail(errc::kIo, "cannot write manifest " + path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
}

DatasetManifest merge_train_val(const DatasetManifest& manifest) {
  DatasetManifest merged = manifest;
  for (auto& inst : merged.instances)
    if (inst.split == Split::Val) inst.split = Split::Train;
  return merged;
}

std::vector<std::string> validate_wlasl100(const DatasetManifest& manifest) {
  std::vector<std::string> problems;
  if (manifest.num_classes() != 100) {
    problems.push_back("expected 100 glosses, found " + std::to_string(manifest.num_classes()));
  }
  std::vector<std::size_t> per_gloss(manifest.num_classes(), 0);
  for (const auto& inst : manifest.instances) {
    ++per_gloss[static_cast<std::size_t>(inst.gloss)];
    if (inst.frame_count && (inst.frame_count < 12 || inst.frame_count > 203)) {
      problems.push_back("video '" + inst.video_id + "' has " + std::to_string(inst.frame_count) +
                         " frames, outside [12, 203]");
    }
  }
  for (std::size_t g = 0; g < per_gloss.size(); ++g) {
    if (per_gloss[g] < 18 || per_gloss[g] > 40) {
      problems.push_back("gloss '" + manifest.glosses[g] + "' has " + std::to_string(per_gloss[g]) +
                         " instances, outside [18, 40]");
    }
  }
  return problems;
}

}  // namespace vslr
