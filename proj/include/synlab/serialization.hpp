#pragma once

// Little-endian binary formats:
//
//   dataset    "SYNF" | version u32 | D u32 | classes u32 | samples u64 |
//              per sample: n u8, n x (class u32, weight f64), domain u8, D x f32
//
//   checkpoint "SYNW" | version u32 | layers u32 |
//              per layer: rows u32, cols u32, rows*cols f64 (row-major), rows f64 bias |
//              W rows u32, W cols u32, W f64 (row-major) |
//              momentum: same tensors in the same order, values only

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "synlab/error.hpp"
#include "synlab/synthesizer.hpp"
#include "synlab/trainer.hpp"

namespace synlab {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

namespace io {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <class T>
  void le(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> raw{};
    std::memcpy(raw.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    buf_.insert(buf_.end(), raw.begin(), raw.end());
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const char> data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <class T>
  T le() {
    need(sizeof(T));
    std::array<unsigned char, sizeof(T)> raw{};
    std::memcpy(raw.data(), data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(FormatError::Kind::truncated, "unexpected end of data");
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

inline void expect_magic(Reader& r, std::string_view magic) {
  if (r.remaining() < magic.size()) throw FormatError(FormatError::Kind::truncated, "file shorter than its magic");
  if (r.bytes(magic.size()) != magic) throw FormatError(FormatError::Kind::bad_magic, "bad magic bytes");
}

}  // namespace io

// ---------------------------------------------------------------------------
// Dataset

inline std::vector<char> encode_dataset(const Dataset& ds) {
  io::Writer w;
  w.bytes("SYNF");
  w.le<std::uint32_t>(kDatasetFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.observation_dim));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.class_count));
  w.le<std::uint64_t>(ds.samples.size());
  for (const auto& s : ds.samples) {
    detail::require(s.observation.size() == ds.observation_dim, "sample observation width differs from dataset");
    w.le<std::uint8_t>(static_cast<std::uint8_t>(s.label.size()));
    for (const auto& e : s.label.entries()) {
      w.le<std::uint32_t>(e.class_index);
      w.le<double>(e.weight);
    }
    w.le<std::uint8_t>(static_cast<std::uint8_t>(s.domain));
    for (float v : s.observation) w.le<float>(v);
  }
  return w.buffer();
}

/// Provenance is not stored; it is reconstructed from the label
/// (primary = heaviest class, phi = its weight).
inline Dataset decode_dataset(std::span<const char> bytes) {
  io::Reader r(bytes);
  io::expect_magic(r, "SYNF");
  const auto version = r.le<std::uint32_t>();
  if (version != kDatasetFormatVersion)
    throw FormatError(FormatError::Kind::unknown_version, "unknown dataset format version " + std::to_string(version));
  Dataset ds;
  ds.observation_dim = r.le<std::uint32_t>();
  ds.class_count = r.le<std::uint32_t>();
  const auto n = r.le<std::uint64_t>();
  // Each sample needs at least 2 + 12 + 4*D bytes; reject impossible counts before reserving.
  if (n > r.remaining() / (14 + 4 * ds.observation_dim))
    throw FormatError(FormatError::Kind::truncated, "sample count exceeds file size");
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    Sample s;
    const auto entries = r.le<std::uint8_t>();
    std::vector<LabelEntry> label;
    for (std::uint8_t k = 0; k < entries; ++k) {
      LabelEntry e;
      e.class_index = r.le<std::uint32_t>();
      e.weight = r.le<double>();
      if (e.class_index >= ds.class_count) throw FormatError(FormatError::Kind::corrupt, "label class out of range");
      label.push_back(e);
    }
    try {
      s.label = SoftLabel(std::move(label));
    } catch (const InvalidArgument& e) {
      throw FormatError(FormatError::Kind::corrupt, std::string("invalid label: ") + e.what());
    }
    const auto dom = r.le<std::uint8_t>();
    if (dom > 1) throw FormatError(FormatError::Kind::corrupt, "unknown domain tag");
    s.domain = static_cast<Domain>(dom);
    s.observation.resize(ds.observation_dim);
    for (auto& v : s.observation) v = r.le<float>();
    s.provenance.primary = s.label.primary();
    s.provenance.phi = s.label.entries().front().class_index == s.provenance.primary ? s.label.entries().front().weight
                                                                                      : s.label.entries().back().weight;
    if (s.label.size() == 2) {
      const auto& es = s.label.entries();
      s.provenance.secondary = es[0].class_index == s.provenance.primary ? es[1].class_index : es[0].class_index;
    }
    ds.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::corrupt, "trailing bytes after dataset");
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) { io::write_file(path, encode_dataset(ds)); }

inline Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoint

struct Checkpoint {
  EmbeddingNetwork net;
  MomentumState momentum;
  bool operator==(const Checkpoint&) const = default;
};

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  const ParameterSet& p = ck.net.params;
  detail::require(p.weights.size() == p.biases.size(), "layer weights and biases differ in count");
  detail::require(p.same_shape(ck.momentum), "momentum shape differs from the network");
  io::Writer w;
  w.bytes("SYNW");
  w.le<std::uint32_t>(kCheckpointFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(p.weights.size()));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& m = p.weights[l];
    w.le<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.le<double>(m(r, c));
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) w.le<double>(p.biases[l](i));
  }
  w.le<std::uint32_t>(static_cast<std::uint32_t>(p.class_weights.rows()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(p.class_weights.cols()));
  for (Eigen::Index r = 0; r < p.class_weights.rows(); ++r)
    for (Eigen::Index c = 0; c < p.class_weights.cols(); ++c) w.le<double>(p.class_weights(r, c));
  ParameterSet mom = ck.momentum;
  mom.for_each_scalar([&](double& v) { w.le<double>(v); });
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::span<const char> bytes) {
  io::Reader r(bytes);
  io::expect_magic(r, "SYNW");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointFormatVersion)
    throw FormatError(FormatError::Kind::unknown_version, "unknown checkpoint format version " + std::to_string(version));
  auto dims = [&r]() {
    const auto rows = r.le<std::uint32_t>();
    const auto cols = r.le<std::uint32_t>();
    if (static_cast<std::uint64_t>(rows) * cols > r.remaining() / sizeof(double))
      throw FormatError(FormatError::Kind::truncated, "tensor larger than the remaining data");
    return std::pair<Eigen::Index, Eigen::Index>{rows, cols};
  };
  Checkpoint ck;
  ParameterSet& p = ck.net.params;
  const auto layers = r.le<std::uint32_t>();
  if (layers == 0) throw FormatError(FormatError::Kind::corrupt, "checkpoint has no layers");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto [rows, cols] = dims();
    if (l > 0 && cols != p.weights.back().rows())
      throw FormatError(FormatError::Kind::corrupt, "layer widths do not chain");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.le<double>();
    Eigen::VectorXd b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) b(i) = r.le<double>();
    p.weights.push_back(std::move(m));
    p.biases.push_back(std::move(b));
  }
  const auto [wr, wc] = dims();
  if (wc != p.weights.back().rows()) throw FormatError(FormatError::Kind::corrupt, "class weights do not match the embedding width");
  p.class_weights.resize(wr, wc);
  for (Eigen::Index i = 0; i < wr; ++i)
    for (Eigen::Index j = 0; j < wc; ++j) p.class_weights(i, j) = r.le<double>();
  ck.momentum = p.zeros_like();
  ck.momentum.for_each_scalar([&](double& v) { v = r.le<double>(); });
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::corrupt, "trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace synlab
