#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "adabins/depth_io.hpp"
#include "adabins/nn.hpp"

namespace adabins {

// Checkpoint: magic "ADBC", version, embedded config text, step counters,
// RNG state string, then a manifest of (name, shape, offset) entries over one
// concatenated little-endian float32 blob. Loading a checkpoint and taking
// one more step reproduces an uninterrupted run bitwise.

struct CheckpointBlob {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_text;
  index_t step = 0;
  index_t opt_step = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, CheckpointBlob>> tensors;

  const CheckpointBlob* find(const std::string& name) const {
    for (const auto& [n, b] : tensors)
      if (n == name) return &b;
    return nullptr;
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string out;
  out += "ADBC";
  detail::put_le<uint16_t>(out, 1);
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(ck.config_text.size()));
  out += ck.config_text;
  detail::put_le<uint64_t>(out, static_cast<uint64_t>(ck.step));
  detail::put_le<uint64_t>(out, static_cast<uint64_t>(ck.opt_step));
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(ck.rng_state.size()));
  out += ck.rng_state;
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(ck.tensors.size()));
  uint64_t offset = 0;
  for (const auto& [name, blob] : ck.tensors) {
    detail::put_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(blob.shape.size()));
    for (index_t d : blob.shape) detail::put_le<uint64_t>(out, static_cast<uint64_t>(d));
    detail::put_le<uint64_t>(out, offset);
    offset += blob.data.size() * 4;
  }
  detail::put_le<uint64_t>(out, offset);
  for (const auto& [name, blob] : ck.tensors)
    for (float v : blob.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_le<uint32_t>(out, bits);
    }
  detail::write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string s = detail::read_file(path);
  size_t off = 0;
  auto need = [&](size_t n) {
    if (off + n > s.size()) throw ConfigError("'" + path + "': truncated checkpoint");
  };
  need(6);
  if (s.compare(0, 4, "ADBC") != 0)
    throw ConfigError("'" + path + "' is not a checkpoint (bad magic)");
  const uint16_t version = detail::get_le<uint16_t>(s, 4);
  if (version != 1)
    throw ConfigError("'" + path + "': unsupported checkpoint version " + std::to_string(version));
  off = 6;

  Checkpoint ck;
  need(4);
  const uint32_t cfg_len = detail::get_le<uint32_t>(s, off);
  off += 4;
  need(cfg_len);
  ck.config_text = s.substr(off, cfg_len);
  off += cfg_len;
  need(16);
  ck.step = static_cast<index_t>(detail::get_le<uint64_t>(s, off));
  off += 8;
  ck.opt_step = static_cast<index_t>(detail::get_le<uint64_t>(s, off));
  off += 8;
  need(4);
  const uint32_t rng_len = detail::get_le<uint32_t>(s, off);
  off += 4;
  need(rng_len);
  ck.rng_state = s.substr(off, rng_len);
  off += rng_len;
  need(4);
  const uint32_t n_tensors = detail::get_le<uint32_t>(s, off);
  off += 4;

  std::vector<uint64_t> offsets;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    need(2);
    const uint16_t name_len = detail::get_le<uint16_t>(s, off);
    off += 2;
    need(name_len + 1);
    std::string name = s.substr(off, name_len);
    off += name_len;
    const uint8_t ndim = static_cast<uint8_t>(s[off]);
    ++off;
    CheckpointBlob blob;
    need(static_cast<size_t>(ndim) * 8 + 8);
    for (uint8_t d = 0; d < ndim; ++d) {
      blob.shape.push_back(static_cast<index_t>(detail::get_le<uint64_t>(s, off)));
      off += 8;
    }
    offsets.push_back(detail::get_le<uint64_t>(s, off));
    off += 8;
    ck.tensors.emplace_back(std::move(name), std::move(blob));
  }
  need(8);
  const uint64_t blob_len = detail::get_le<uint64_t>(s, off);
  off += 8;
  need(blob_len);
  for (size_t i = 0; i < ck.tensors.size(); ++i) {
    auto& blob = ck.tensors[i].second;
    const index_t count = numel(blob.shape);
    if (offsets[i] + static_cast<uint64_t>(count) * 4 > blob_len)
      throw ConfigError("'" + path + "': tensor '" + ck.tensors[i].first +
                        "' extends past blob end");
    blob.data.resize(static_cast<size_t>(count));
    for (index_t j = 0; j < count; ++j) {
      const uint32_t bits = detail::get_le<uint32_t>(s, off + offsets[i] + 4 * j);
      std::memcpy(&blob.data[j], &bits, 4);
    }
  }
  return ck;
}

}  // namespace adabins
