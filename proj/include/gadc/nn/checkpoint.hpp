#pragma once

// Versioned binary checkpoint of named tensors plus string metadata.
//
//   "GADCCKPT" | u32 version | u32 n_meta | {str key, str value}*
//   | u32 n_tensors | {str name, u64 rows, u64 cols, f64[rows*cols] row-major}*
//
// Strings are u32 length + bytes. Native byte order.

#include "gadc/errors.hpp"
#include "gadc/nn/layers.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace gadc::nn {

inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'D', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;
};

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw VersionError("checkpoint: truncated file");
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  if (n > (1u << 24)) throw VersionError("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw VersionError("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    detail::write_str(os, k);
    detail::write_str(os, v);
  }
  detail::write_pod(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::write_str(os, t.name);
    detail::write_pod(os, static_cast<std::uint64_t>(t.value.rows()));
    detail::write_pod(os, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) detail::write_pod(os, t.value(r, c));
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kCheckpointMagic)) throw VersionError("checkpoint: bad magic");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  const auto n_meta = detail::read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = detail::read_str(is);
    ck.meta[k] = detail::read_str(is);
  }
  const auto n_tensors = detail::read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = detail::read_str(is);
    const auto rows = detail::read_pod<std::uint64_t>(is);
    const auto cols = detail::read_pod<std::uint64_t>(is);
    if (rows * cols > (1ull << 28)) throw VersionError("checkpoint: implausible tensor size");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) t.value(r, c) = detail::read_pod<double>(is);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, ck);
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

inline void append_params(Checkpoint& ck, const ParamList& params) {
  for (const Parameter* p : params) ck.tensors.push_back({p->name, p->value});
}

/// Copies tensors into `params` by name; every parameter must be present with
/// an identical shape.
inline void restore_params(const Checkpoint& ck, const ParamList& params) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& t : ck.tensors) by_name[t.name] = &t.value;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw VersionError("checkpoint: missing tensor " + p->name);
    const Matrix& m = *it->second;
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw VersionError("checkpoint: shape mismatch for " + p->name + ": stored " + shape_str(m) + ", model " +
                         shape_str(p->value));
    }
    p->value = m;
  }
}

}  // namespace gadc::nn
