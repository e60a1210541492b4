#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "adasr/model.hpp"

namespace adasr {

// Single-file archive: every named parameter tensor, the config snapshot, the
// trainer rng state, the step counter, and (optionally) Adam moments.
// Little-endian host assumed; tensors stored as f32.

namespace detail {

inline constexpr char kCkptMagic[8] = {'A', 'D', 'S', 'R', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& o, std::uint32_t v) {
  o.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& o, std::uint64_t v) {
  o.write(reinterpret_cast<const char*>(&v), 8);
}
inline void write_str(std::ostream& o, const std::string& s) {
  write_u64(o, s.size());
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& i) {
  std::uint32_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& i) {
  std::uint64_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline std::string read_str(std::istream& i) {
  std::string s(read_u64(i), '\0');
  i.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

template <typename S>
void write_tensor_table(std::ostream& o, const std::map<std::string, Tensor<S>>& table) {
  write_u64(o, table.size());
  for (const auto& [name, t] : table) {
    write_str(o, name);
    write_u32(o, static_cast<std::uint32_t>(t.shape.rank()));
    for (int d = 0; d < t.shape.rank(); ++d) write_u64(o, static_cast<std::uint64_t>(t.shape[d]));
    for (const S& v : t.data) {
      const float f = static_cast<float>(v);
      o.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
}

template <typename S>
std::map<std::string, Tensor<S>> read_tensor_table(std::istream& in) {
  std::map<std::string, Tensor<S>> table;
  const std::uint64_t count = read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_str(in);
    const std::uint32_t rank = read_u32(in);
    if (rank > static_cast<std::uint32_t>(Shape::kMaxRank))
      throw VersionError("checkpoint: corrupt tensor rank");
    std::array<int, Shape::kMaxRank> dims{};
    for (std::uint32_t d = 0; d < rank; ++d) dims[d] = static_cast<int>(read_u64(in));
    Shape s;
    switch (rank) {
      case 0: s = Shape{}; break;
      case 1: s = Shape{dims[0]}; break;
      case 2: s = Shape{dims[0], dims[1]}; break;
      case 3: s = Shape{dims[0], dims[1], dims[2]}; break;
      case 4: s = Shape{dims[0], dims[1], dims[2], dims[3]}; break;
      case 5: s = Shape{dims[0], dims[1], dims[2], dims[3], dims[4]}; break;
      default: s = Shape{dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]}; break;
    }
    Tensor<S> t(s);
    for (auto& v : t.data) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), 4);
      v = static_cast<S>(f);
    }
    if (!in) throw VersionError("checkpoint: truncated tensor data for '" + name + "'");
    table.emplace(name, std::move(t));
  }
  return table;
}

}  // namespace detail

template <typename S>
struct Checkpoint {
  Config config;
  std::uint64_t step = 0;
  std::string rng_state;
  std::map<std::string, Tensor<S>> weights;
  // Adam state (empty when saved outside training)
  bool has_optimizer = false;
  std::uint64_t adam_step = 0;
  std::map<std::string, Tensor<S>> adam_m, adam_v;
};

template <typename S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(detail::kCkptMagic, 8);
  detail::write_u32(out, detail::kCkptVersion);
  detail::write_u64(out, ckpt.step);
  detail::write_str(out, ckpt.config.to_json().dump());
  detail::write_str(out, ckpt.rng_state);
  detail::write_tensor_table(out, ckpt.weights);
  out.put(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    detail::write_u64(out, ckpt.adam_step);
    detail::write_tensor_table(out, ckpt.adam_m);
    detail::write_tensor_table(out, ckpt.adam_v);
  }
  if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  if (std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw VersionError("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = detail::read_u32(in);
  if (version != detail::kCkptVersion)
    throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint<S> ckpt;
  ckpt.step = detail::read_u64(in);
  ckpt.config = Config::from_json(json::parse(detail::read_str(in)));
  ckpt.rng_state = detail::read_str(in);
  ckpt.weights = detail::read_tensor_table<S>(in);
  ckpt.has_optimizer = in.get() == 1;
  if (ckpt.has_optimizer) {
    ckpt.adam_step = detail::read_u64(in);
    ckpt.adam_m = detail::read_tensor_table<S>(in);
    ckpt.adam_v = detail::read_tensor_table<S>(in);
  }
  return ckpt;
}

template <typename S>
std::map<std::string, Tensor<S>> snapshot_weights(const ParamRegistry<S>& reg) {
  std::map<std::string, Tensor<S>> table;
  for (const auto& e : reg.entries()) table.emplace(e.name, e.var.value());
  return table;
}

template <typename S>
void restore_weights(const ParamRegistry<S>& reg, const std::map<std::string, Tensor<S>>& table) {
  for (const auto& e : reg.entries()) {
    auto it = table.find(e.name);
    if (it == table.end())
      throw VersionError("checkpoint: missing parameter '" + e.name + "'");
    if (!(it->second.shape == e.var.shape()))
      throw VersionError("checkpoint: shape mismatch for '" + e.name + "' (" +
                         it->second.shape.str() + " vs " + e.var.shape().str() + ")");
    e.var.mutable_value().data = it->second.data;
  }
}

// Model-level save/load.
template <typename S>
void save_model(const std::string& path, const AdaSRModel<S>& model, std::uint64_t step,
                const std::string& rng_state) {
  Checkpoint<S> c;
  c.config = model.cfg;
  c.step = step;
  c.rng_state = rng_state;
  c.weights = snapshot_weights(model.all_params());
  save_checkpoint(path, c);
}

template <typename S>
AdaSRModel<S> model_from_checkpoint(const Checkpoint<S>& ckpt) {
  AdaSRModel<S> model = AdaSRModel<S>::init(ckpt.config);
  restore_weights(model.all_params(), ckpt.weights);
  return model;
}

}  // namespace adasr
