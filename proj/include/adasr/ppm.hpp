#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "adasr/frame.hpp"

namespace adasr {

// Binary PPM (P6, 8-bit). A clip is a concatenation of P6 images in one file;
// the first header carries an `# fps <value>` comment. Quantization maps
// v -> round(v*255) on write and k -> k/255 on read, so a frame that has been
// through one write/read cycle round-trips bit-exactly.

namespace detail {

inline int ppm_next_token(std::istream& in, std::string& tok, double* fps_comment) {
  tok.clear();
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      if (fps_comment) {
        std::istringstream ls(line);
        std::string key;
        double v = 0;
        if (ls >> key >> v && key == "fps" && v > 0) *fps_comment = v;
      }
      c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return 0;
      c = in.get();
      continue;
    }
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok.empty() ? -1 : 0;
}

}  // namespace detail

template <typename S>
void write_ppm_frame(std::ostream& out, const Tensor<S>& img, const double* fps = nullptr) {
  check_shape(img.shape.rank() == 3 && img.shape[0] == 3, "write_ppm: (3,H,W) required");
  const int H = img.shape[1], W = img.shape[2];
  out << "P6\n";
  if (fps) out << "# fps " << *fps << "\n";
  out << W << " " << H << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = static_cast<double>(img.data[static_cast<std::size_t>(c) * plane +
                                                static_cast<std::size_t>(y) * W + x]);
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_ppm: stream write failed");
}

// Returns false on clean EOF (no more frames).
template <typename S>
bool read_ppm_frame(std::istream& in, Tensor<S>& img, double* fps_comment = nullptr) {
  std::string tok;
  if (detail::ppm_next_token(in, tok, fps_comment) < 0) return false;
  if (tok != "P6") throw DecodeError("ppm: expected P6 magic, got '" + tok + "'");
  auto read_int = [&](const char* what) {
    std::string t;
    if (detail::ppm_next_token(in, t, fps_comment) < 0)
      throw DecodeError(std::string("ppm: truncated header reading ") + what);
    return std::stoi(t);
  };
  const int W = read_int("width");
  const int H = read_int("height");
  const int maxval = read_int("maxval");
  if (W <= 0 || H <= 0) throw DecodeError("ppm: bad dimensions");
  if (maxval != 255) throw DecodeError("ppm: only maxval 255 supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw DecodeError("ppm: truncated pixel data");
  img = Tensor<S>(Shape{3, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      img.data[static_cast<std::size_t>(c) * plane + i] =
          static_cast<S>(raw[i * 3 + static_cast<std::size_t>(c)]) / S(255);
  return true;
}

template <typename S>
Tensor<S> read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  Tensor<S> img;
  if (!read_ppm_frame(in, img)) throw DecodeError("empty ppm file '" + path + "'");
  return img;
}

template <typename S>
void write_ppm_file(const std::string& path, const Tensor<S>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_ppm_frame(out, img);
}

}  // namespace adasr
