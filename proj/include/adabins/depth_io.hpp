#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adabins/metrics.hpp"
#include "adabins/synthdata.hpp"

namespace adabins {

// Depth-map file: magic "ADBD", version u16, width u32, height u32 (all
// little-endian), then h*w float32 row-major. NaN marks invalid pixels.
// Writers/readers move raw float bytes, so NaN payloads round-trip bitwise.

namespace detail {

template <typename V>
void put_le(std::string& out, V v) {
  for (size_t i = 0; i < sizeof(V); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename V>
V get_le(const std::string& s, size_t off) {
  V v = 0;
  for (size_t i = 0; i < sizeof(V); ++i)
    v |= static_cast<V>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write file '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UsageError("short write to '" + path + "'");
}

}  // namespace detail

inline void write_depth_file(const std::string& path, index_t w, index_t h,
                             const std::vector<float>& data) {
  if (static_cast<index_t>(data.size()) != w * h)
    throw ShapeError("write_depth_file: buffer size != w*h");
  std::string out;
  out.reserve(14 + data.size() * 4);
  out += "ADBD";
  detail::put_le<uint16_t>(out, 1);
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(w));
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(h));
  for (float v : data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<uint32_t>(out, bits);
  }
  detail::write_file(path, out);
}

struct DepthFile {
  index_t w = 0, h = 0;
  std::vector<float> data;
};

inline DepthFile read_depth_file(const std::string& path) {
  const std::string s = detail::read_file(path);
  if (s.size() < 14 || s.compare(0, 4, "ADBD") != 0)
    throw ConfigError("'" + path + "' is not a depth-map file (bad magic)");
  const uint16_t version = detail::get_le<uint16_t>(s, 4);
  if (version != 1)
    throw ConfigError("'" + path + "': unsupported depth-map version " + std::to_string(version));
  DepthFile f;
  f.w = detail::get_le<uint32_t>(s, 6);
  f.h = detail::get_le<uint32_t>(s, 10);
  const size_t need = 14 + static_cast<size_t>(f.w * f.h) * 4;
  if (s.size() != need)
    throw ConfigError("'" + path + "': truncated depth-map file");
  f.data.resize(static_cast<size_t>(f.w * f.h));
  for (size_t i = 0; i < f.data.size(); ++i) {
    const uint32_t bits = detail::get_le<uint32_t>(s, 14 + 4 * i);
    std::memcpy(&f.data[i], &bits, 4);
  }
  return f;
}

// Surface-normal file: magic "ADBN", version u16, width u32, height u32,
// then 3*h*w float32 (x, y, z planes, row-major).
inline void write_normals_file(const std::string& path, const NormalMap& nm) {
  std::string out;
  out += "ADBN";
  detail::put_le<uint16_t>(out, 1);
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(nm.w));
  detail::put_le<uint32_t>(out, static_cast<uint32_t>(nm.h));
  for (float v : nm.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<uint32_t>(out, bits);
  }
  detail::write_file(path, out);
}

// 8-bit interleaved RGB, row-major; dimensions live in the corpus manifest.
inline void write_rgb_raw(const std::string& path, index_t w, index_t h,
                          const std::vector<float>& chw) {
  if (static_cast<index_t>(chw.size()) != 3 * w * h)
    throw ShapeError("write_rgb_raw: buffer size != 3*w*h");
  std::string out;
  out.reserve(static_cast<size_t>(3 * w * h));
  for (index_t i = 0; i < h * w; ++i)
    for (index_t c = 0; c < 3; ++c) {
      const float v = chw[c * h * w + i];
      const int q = static_cast<int>(v * 255.0f + 0.5f);
      out.push_back(static_cast<char>(std::clamp(q, 0, 255)));
    }
  detail::write_file(path, out);
}

inline std::vector<float> read_rgb_raw(const std::string& path, index_t w, index_t h) {
  const std::string s = detail::read_file(path);
  if (s.size() != static_cast<size_t>(3 * w * h))
    throw ConfigError("'" + path + "': expected " + std::to_string(3 * w * h) +
                      " bytes of RGB data, got " + std::to_string(s.size()));
  std::vector<float> chw(static_cast<size_t>(3 * w * h));
  for (index_t i = 0; i < h * w; ++i)
    for (index_t c = 0; c < 3; ++c)
      chw[c * h * w + i] =
          static_cast<float>(static_cast<unsigned char>(s[i * 3 + c])) / 255.0f;
  return chw;
}

// Corpus on disk: manifest.txt plus per-sample RGB raw and depth files.
inline void save_corpus(const std::string& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream man;
  index_t idx = 0;
  auto dump = [&](const std::vector<SceneSample>& split, const char* name) {
    for (const auto& s : split) {
      char rgb[32], dep[32];
      std::snprintf(rgb, sizeof(rgb), "img_%04lld.rgb", static_cast<long long>(idx));
      std::snprintf(dep, sizeof(dep), "depth_%04lld.adbd", static_cast<long long>(idx));
      write_rgb_raw(dir + "/" + rgb, s.w, s.h, s.image);
      write_depth_file(dir + "/" + dep, s.w, s.h, s.depth);
      man << name << " " << to_string(s.scene_type) << " " << s.w << " " << s.h << " "
          << s.seed << " " << rgb << " " << dep << "\n";
      ++idx;
    }
  };
  dump(corpus.train, "train");
  dump(corpus.val, "val");
  detail::write_file(dir + "/manifest.txt", man.str());
}

inline Corpus load_corpus(const std::string& dir, double d_min, double d_max) {
  std::istringstream man(detail::read_file(dir + "/manifest.txt"));
  Corpus corpus;
  std::string split, type, rgb, dep;
  index_t w, h;
  uint64_t seed;
  while (man >> split >> type >> w >> h >> seed >> rgb >> dep) {
    SceneSample s;
    s.w = w;
    s.h = h;
    s.seed = seed;
    s.scene_type = scene_type_from_string(type);
    s.image = read_rgb_raw(dir + "/" + rgb, w, h);
    DepthFile df = read_depth_file(dir + "/" + dep);
    if (df.w != w || df.h != h)
      throw ConfigError("corpus: depth file '" + dep + "' dimensions disagree with manifest");
    s.depth = std::move(df.data);
    s.mask = mask_from_depth(s.depth, d_min, d_max);
    if (split == "train")
      corpus.train.push_back(std::move(s));
    else if (split == "val")
      corpus.val.push_back(std::move(s));
    else
      throw ConfigError("corpus: unknown split '" + split + "' in manifest");
  }
  if (corpus.train.empty() && corpus.val.empty())
    throw ConfigError("corpus: manifest '" + dir + "/manifest.txt' lists no samples");
  return corpus;
}

}  // namespace adabins
