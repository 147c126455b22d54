#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "repose/param_store.hpp"
#include "repose/tensor.hpp"

namespace repose {

// Single-file tensor container: versioned header (magic, format version,
// dtype code), a manifest of (name, shape, byte offset) entries, then raw
// little-endian payloads. Used for model checkpoints, optimizer state, and
// raw heatmap dumps.

inline constexpr char kCheckpointMagic[8] = {'R', 'P', 'O', 'S', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "unsupported checkpoint dtype");
  return std::is_same_v<T, float> ? 0 : 1;
}

namespace detail {

template <typename V>
void write_le(std::ostream& out, V v) {
  unsigned char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.write(reinterpret_cast<const char*>(buf), sizeof(V));
}

template <typename V>
V read_le(std::istream& in) {
  unsigned char buf[sizeof(V)];
  in.read(reinterpret_cast<char*>(buf), sizeof(V));
  V v;
  std::memcpy(&v, buf, sizeof(V));
  return v;
}

}  // namespace detail

template <typename T>
void save_tensors(const std::string& path, const std::vector<std::pair<std::string, const Tensor<T>*>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint8_t>(out, dtype_code<T>());
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : entries) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor->rank()));
    for (int d = 0; d < tensor->rank(); ++d) detail::write_le<std::int64_t>(out, tensor->dim(d));
    detail::write_le<std::uint64_t>(out, offset);
    offset += static_cast<std::uint64_t>(tensor->size()) * sizeof(T);
  }
  for (const auto& [name, tensor] : entries)
    out.write(reinterpret_cast<const char*>(tensor->data()), static_cast<std::streamsize>(tensor->size() * sizeof(T)));
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

template <typename T>
std::map<std::string, Tensor<T>> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  const auto dtype = detail::read_le<std::uint8_t>(in);
  if (dtype != dtype_code<T>())
    throw std::runtime_error("checkpoint: dtype code " + std::to_string(dtype) + " does not match requested dtype in " +
                             path);
  const auto count = detail::read_le<std::uint32_t>(in);
  struct Entry {
    std::string name;
    std::vector<int> dims;
    std::uint64_t offset;
  };
  std::vector<Entry> manifest;
  manifest.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = detail::read_le<std::uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    const auto ndim = detail::read_le<std::uint32_t>(in);
    for (std::uint32_t d = 0; d < ndim; ++d) e.dims.push_back(static_cast<int>(detail::read_le<std::int64_t>(in)));
    e.offset = detail::read_le<std::uint64_t>(in);
    manifest.push_back(std::move(e));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  const std::streampos payload_start = in.tellg();
  std::map<std::string, Tensor<T>> out;
  for (const auto& e : manifest) {
    Tensor<T> t(e.dims);
    in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload for '" + e.name + "' in " + path);
    out.emplace(e.name, std::move(t));
  }
  return out;
}

// Saves every store entry (trainable and state buffers) plus any extras,
// e.g. optimizer moments under an "opt/" prefix.
template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store,
                     const std::vector<std::pair<std::string, const Tensor<T>*>>& extras = {}) {
  std::vector<std::pair<std::string, const Tensor<T>*>> entries;
  for (const auto* p : store.entries()) entries.emplace_back(p->name, &p->value);
  for (const auto& e : extras) entries.push_back(e);
  save_tensors<T>(path, entries);
}

// Restores store entries by name, validating shapes. Every store entry must
// be present with a matching shape; extra file entries (e.g. optimizer
// state) are returned for the caller. Mismatches fail listing tensor names.
template <typename T>
std::map<std::string, Tensor<T>> load_checkpoint(const std::string& path, ParamStore<T>& store) {
  auto tensors = load_tensors<T>(path);
  std::vector<std::string> missing, mismatched;
  for (auto* p : store.entries()) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) {
      missing.push_back(p->name);
      continue;
    }
    if (!(it->second.dims() == p->value.dims())) {
      mismatched.push_back(p->name + " (model " + p->value.shape_string() + ", file " + it->second.shape_string() + ")");
      continue;
    }
    p->value = std::move(it->second);
    tensors.erase(it);
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "checkpoint: incompatible with model;";
    if (!missing.empty()) {
      os << " missing:";
      for (const auto& n : missing) os << ' ' << n;
      os << ';';
    }
    if (!mismatched.empty()) {
      os << " shape mismatch:";
      for (const auto& n : mismatched) os << ' ' << n;
    }
    throw std::runtime_error(os.str());
  }
  return tensors;  // leftover entries, e.g. optimizer state
}

}  // namespace repose
