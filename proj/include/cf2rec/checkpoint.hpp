#pragma once

// Named-tensor checkpoint container.
//
// Layout:
//   text header line   "CF2REC-CKPT 1 key=value key=value ...\n"
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims[rank],
//               float32 payload (row-major)
// All integers and floats are little-endian. Values are narrowed to float32,
// so a second save of a loaded checkpoint reproduces the file byte for byte.

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cf2rec/markov.hpp"
#include "cf2rec/neural.hpp"
#include "cf2rec/tensor.hpp"

namespace cf2rec {

inline constexpr const char* kCheckpointMagic = "CF2REC-CKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamStore tensors;

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("checkpoint header lacks '" + key + "'");
    return it->second;
  }
  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << kCheckpointMagic << ' ' << kCheckpointVersion;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" =\n") != std::string::npos || v.find_first_of(" \n") != std::string::npos) {
      throw std::invalid_argument("checkpoint header entries may not contain spaces or newlines");
    }
    os << ' ' << k << '=' << v;
  }
  os << '\n';
  detail::put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("empty checkpoint");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  hs >> magic >> version;
  if (magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint file");
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  std::string kv;
  while (hs >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed checkpoint header entry '" + kv + "'");
    ckpt.meta[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  const auto count = detail::get_u32(is);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name(detail::get_u32(is), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size())))
      throw std::runtime_error("truncated checkpoint");
    std::vector<std::size_t> shape(detail::get_u32(is));
    for (auto& d : shape) d = detail::get_u32(is);
    Tensor t(shape);
    for (auto& v : t.data) v = static_cast<double>(std::bit_cast<float>(detail::get_u32(is)));
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

/// Snapshot of a recommender's learnable or counted state.
inline Checkpoint recommender_checkpoint(const Recommender& rec) {
  Checkpoint c;
  c.meta["kind"] = rec.kind();
  c.meta["catalog"] = std::to_string(rec.catalog().size());
  c.meta["d"] = std::to_string(rec.embed_dim());
  if (const auto* n = dynamic_cast<const NeuralEmbeddingRecommender*>(&rec)) {
    c.meta["rho"] = detail::format_double(n->rho());
    c.meta["alpha"] = "0";
    c.tensors = n->params();
  } else if (const auto* m = dynamic_cast<const MarkovCountRecommender*>(&rec)) {
    const auto v = rec.catalog().size();
    c.meta["rho"] = "0";
    c.meta["alpha"] = detail::format_double(m->alpha());
    Tensor t({v, v});
    t.data = m->transitions();
    Tensor p({v});
    p.data = m->popularity();
    c.tensors.emplace("transition_counts", std::move(t));
    c.tensors.emplace("popularity_counts", std::move(p));
  } else {
    throw UnsupportedOperation("cannot checkpoint recommender of kind " + rec.kind());
  }
  return c;
}

inline std::unique_ptr<Recommender> recommender_from_checkpoint(const Checkpoint& c, Catalog catalog) {
  const auto n = std::stoul(c.get("catalog"));
  if (n != catalog.size()) throw std::runtime_error("checkpoint catalog size does not match the catalog");
  const auto& kind = c.get("kind");
  if (kind == "neural") {
    return std::make_unique<NeuralEmbeddingRecommender>(std::move(catalog), std::stoul(c.get("d")),
                                                        std::stod(c.get("rho")), c.tensors);
  }
  if (kind == "markov") {
    return std::make_unique<MarkovCountRecommender>(std::move(catalog), c.tensors.at("transition_counts").data,
                                                    c.tensors.at("popularity_counts").data, std::stod(c.get("alpha")));
  }
  throw std::runtime_error("unknown recommender kind '" + kind + "'");
}

}  // namespace cf2rec
