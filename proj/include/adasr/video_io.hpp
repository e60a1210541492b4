#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "adasr/dct_codec.hpp"
#include "adasr/ppm.hpp"

namespace adasr {

namespace fs = std::filesystem;

inline std::vector<fs::path> list_clip_frames(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Decodes the requested frames of a clip, resized to `resolution` squares.
// `path` is either a directory of numbered .ppm frames or a single .ppm file
// holding concatenated frames.
inline FrameSequence load_video_clip(const std::string& path, const std::vector<int>& indices,
                                     int resolution,
                                     ResizeKernel kernel = ResizeKernel::kBilinear) {
  FrameSequence seq;
  const fs::path p(path);
  if (!fs::exists(p)) throw DecodeError("load_video_clip: '" + path + "' does not exist");

  std::vector<Tensor<float>> raw;
  if (fs::is_directory(p)) {
    const auto files = list_clip_frames(p);
    if (files.empty()) throw DecodeError("load_video_clip: no .ppm frames under '" + path + "'");
    for (int idx : indices) {
      if (idx < 0 || idx >= static_cast<int>(files.size()))
        throw BoundsError("load_video_clip: frame index " + std::to_string(idx) +
                          " out of range [0," + std::to_string(files.size()) + ")");
      raw.push_back(read_ppm_file<float>(files[static_cast<std::size_t>(idx)].string()));
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_video_clip: cannot open '" + path + "'");
    std::vector<Tensor<float>> all;
    Tensor<float> img;
    double fps = 0;
    while (read_ppm_frame(in, img, &fps)) all.push_back(std::move(img));
    if (all.empty()) throw DecodeError("load_video_clip: no frames in '" + path + "'");
    if (fps > 0) seq.fps = fps;
    for (int idx : indices) {
      if (idx < 0 || idx >= static_cast<int>(all.size()))
        throw BoundsError("load_video_clip: frame index " + std::to_string(idx) +
                          " out of range [0," + std::to_string(all.size()) + ")");
      raw.push_back(all[static_cast<std::size_t>(idx)]);
    }
  }
  for (auto& img : raw) {
    Tensor<float> px = resize_image(img, resolution, resolution, kernel);
    clamp01_inplace(px);
    seq.frames.push_back(Frame::checked(std::move(px)));
  }
  return seq;
}

inline int count_clip_frames(const std::string& path) {
  const fs::path p(path);
  if (fs::is_directory(p)) return static_cast<int>(list_clip_frames(p).size());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("count_clip_frames: cannot open '" + path + "'");
  int n = 0;
  Tensor<float> img;
  while (read_ppm_frame(in, img)) ++n;
  return n;
}

enum class VideoMode { kLossless, kLossy };

// Writes a clip. A trailing '/' (or an existing directory) selects one .ppm
// per frame; otherwise all frames are concatenated into a single file with the
// fps recorded in the header. Lossy mode runs each frame through the block-DCT
// codec before quantization.
inline void write_video(const FrameSequenceT<float>& seq, const std::string& path,
                        VideoMode mode = VideoMode::kLossless, int lossy_quality = 90) {
  seq.validate();
  auto encode = [&](const Tensor<float>& px) {
    return mode == VideoMode::kLossy ? dct_compress_roundtrip(px, lossy_quality) : px;
  };
  const fs::path p(path);
  const bool as_dir = !path.empty() && (path.back() == '/' || fs::is_directory(p));
  if (as_dir) {
    std::error_code ec;
    fs::create_directories(p, ec);
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.ppm", i);
      write_ppm_file((p / name).string(), encode(seq.frames[i].pixels));
    }
    return;
  }
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_video: cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    write_ppm_frame(out, encode(seq.frames[i].pixels), i == 0 ? &seq.fps : nullptr);
}

}  // namespace adasr
