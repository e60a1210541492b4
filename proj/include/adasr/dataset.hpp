#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adasr/rng.hpp"
#include "adasr/video_io.hpp"

namespace adasr {

struct ClipEntry {
  std::string id;
  std::string path;  // relative to the dataset root
  int frame_count = 0;
};

// Immutable once built; safe to share across loader workers.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<ClipEntry> clips;

  void validate() const {
    if (clips.empty()) throw ConfigError("dataset: no clips indexed");
    for (const auto& c : clips) {
      if (c.frame_count < 2)
        throw ConfigError("dataset: clip '" + c.id + "' needs at least 2 frames");
      if (!std::filesystem::exists(root / c.path))
        throw ConfigError("dataset: clip path '" + (root / c.path).string() + "' does not exist");
    }
  }

  std::string clip_path(int i) const {
    return (root / clips[static_cast<std::size_t>(i)].path).string();
  }

  // Index every subdirectory (or standalone .ppm clip file) under `root_dir`.
  static DatasetIndex scan(const std::string& root_dir) {
    DatasetIndex idx;
    idx.root = root_dir;
    if (!std::filesystem::is_directory(idx.root))
      throw ConfigError("dataset: root '" + root_dir + "' is not a directory");
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(idx.root)) {
      if (e.is_directory() || e.path().extension() == ".ppm") entries.push_back(e.path());
    }
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      ClipEntry c;
      c.id = p.stem().string();
      c.path = std::filesystem::relative(p, idx.root).string();
      c.frame_count = count_clip_frames(p.string());
      if (c.frame_count >= 2) idx.clips.push_back(std::move(c));
    }
    idx.validate();
    return idx;
  }

  // One line per clip: `clip_id<TAB>relative_path<TAB>frame_count`, UTF-8.
  static DatasetIndex from_manifest(const std::string& root_dir, const std::string& manifest) {
    DatasetIndex idx;
    idx.root = root_dir;
    std::ifstream in(manifest);
    if (!in) throw ConfigError("dataset: cannot open manifest '" + manifest + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      ClipEntry c;
      std::string count;
      if (!std::getline(ls, c.id, '\t') || !std::getline(ls, c.path, '\t') ||
          !std::getline(ls, count))
        throw ConfigError("dataset: malformed manifest line " + std::to_string(lineno));
      c.frame_count = std::stoi(count);
      idx.clips.push_back(std::move(c));
    }
    idx.validate();
    return idx;
  }

  void write_manifest(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("dataset: cannot write manifest '" + path + "'");
    for (const auto& c : clips) out << c.id << "\t" << c.path << "\t" << c.frame_count << "\n";
  }
};

struct PairIndices {
  int clip = 0;
  int source_frame = 0;
  int driving_frame = 0;
};

// Pure function of (index, rng state): uniform clip, then distinct frames.
// With max_gap > 0, the driving frame is confined to that temporal distance.
inline PairIndices sample_pair_indices(const DatasetIndex& index, Rng& rng, int max_gap = 0) {
  if (index.clips.empty()) throw ConfigError("sample_pair_indices: empty dataset");
  PairIndices out;
  out.clip = static_cast<int>(rng.uniform_int(0, static_cast<int>(index.clips.size()) - 1));
  const int n = index.clips[static_cast<std::size_t>(out.clip)].frame_count;
  out.source_frame = static_cast<int>(rng.uniform_int(0, n - 1));
  int lo = 0, hi = n - 1;
  if (max_gap > 0) {
    lo = std::max(0, out.source_frame - max_gap);
    hi = std::min(n - 1, out.source_frame + max_gap);
  }
  int d = static_cast<int>(rng.uniform_int(lo, hi - 1));  // leave room to skip self
  if (d >= out.source_frame) ++d;
  out.driving_frame = d;
  return out;
}

struct TrainingPair {
  Frame source;
  Frame driving;
  std::string clip_id;
};

// Self-reconstruction sampling: both frames always come from the same clip.
inline TrainingPair sample_training_pair(const DatasetIndex& index, Rng& rng, int resolution,
                                         int max_gap = 0) {
  const PairIndices pi = sample_pair_indices(index, rng, max_gap);
  FrameSequence seq = load_video_clip(index.clip_path(pi.clip),
                                      {pi.source_frame, pi.driving_frame}, resolution);
  TrainingPair p;
  p.source = seq.frames[0];
  p.driving = seq.frames[1];
  p.clip_id = index.clips[static_cast<std::size_t>(pi.clip)].id;
  return p;
}

// Keeps every frame of small datasets resident; reads through for big ones.
class ClipCache {
 public:
  ClipCache(const DatasetIndex& index, int resolution, std::size_t max_cached_frames = 4096)
      : index_(&index), resolution_(resolution) {
    std::size_t total = 0;
    for (const auto& c : index.clips) total += static_cast<std::size_t>(c.frame_count);
    if (total <= max_cached_frames) {
      cached_.resize(index.clips.size());
      for (std::size_t ci = 0; ci < index.clips.size(); ++ci) {
        std::vector<int> all(static_cast<std::size_t>(index.clips[ci].frame_count));
        for (int i = 0; i < index.clips[ci].frame_count; ++i) all[static_cast<std::size_t>(i)] = i;
        cached_[ci] = load_video_clip(index.clip_path(static_cast<int>(ci)), all, resolution_);
      }
    }
  }

  Frame frame(int clip, int idx) const {
    if (!cached_.empty()) return cached_[static_cast<std::size_t>(clip)].frames[static_cast<std::size_t>(idx)];
    return load_video_clip(index_->clip_path(clip), {idx}, resolution_).frames[0];
  }

 private:
  const DatasetIndex* index_;
  int resolution_;
  std::vector<FrameSequence> cached_;
};

}  // namespace adasr
