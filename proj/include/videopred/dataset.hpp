#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "videopred/world.hpp"

// VPDS dataset files (little-endian):
//   magic "VPDS", version u32 = 1, episode count u32,
//   per episode: T,H,W,S,A as u32, then T*H*W*3 image floats (row-major,
//   channel-last), T*S state floats, T*A action floats.
// Round-trips are bit-exact.

namespace vp {

namespace io_detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw IoError("write failed");
}

inline std::uint32_t read_u32(std::FILE* f, const std::string& what) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw IoError("truncated file while reading " + what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

inline void write_f32(std::FILE* f, const float* data, size_t n) {
  static_assert(sizeof(float) == 4);
  // x86/arm little-endian fast path; byte-swap otherwise
  if (n == 0) return;
  if (std::fwrite(data, 4, n, f) != n) throw IoError("write failed");
}

inline void read_f32(std::FILE* f, float* data, size_t n, const std::string& what) {
  if (n == 0) return;
  if (std::fread(data, 4, n, f) != n) throw IoError("truncated file while reading " + what);
}

}  // namespace io_detail

inline void write_dataset(const std::vector<Episode>& episodes, const std::string& path) {
  using namespace io_detail;
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (std::fwrite("VPDS", 1, 4, f.get()) != 4) throw IoError("write failed");
  write_u32(f.get(), 1);
  write_u32(f.get(), std::uint32_t(episodes.size()));
  for (const Episode& ep : episodes) {
    check(ep.images.size() == size_t(ep.T) * ep.H * ep.W * 3 &&
              ep.states.size() == size_t(ep.T) * ep.S &&
              ep.actions.size() == size_t(ep.T) * ep.A,
          "write_dataset: episode arrays inconsistent with dims");
    write_u32(f.get(), std::uint32_t(ep.T));
    write_u32(f.get(), std::uint32_t(ep.H));
    write_u32(f.get(), std::uint32_t(ep.W));
    write_u32(f.get(), std::uint32_t(ep.S));
    write_u32(f.get(), std::uint32_t(ep.A));
    write_f32(f.get(), ep.images.data(), ep.images.size());
    write_f32(f.get(), ep.states.data(), ep.states.size());
    write_f32(f.get(), ep.actions.data(), ep.actions.size());
  }
  if (std::fflush(f.get()) != 0) throw IoError("write failed for '" + path + "'");
}

inline std::vector<Episode> read_dataset(const std::string& path) {
  using namespace io_detail;
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "VPDS", 4) != 0)
    throw IoError("'" + path + "' is not a VPDS dataset (bad magic)");
  const std::uint32_t version = read_u32(f.get(), "version");
  if (version != 1)
    throw IoError("'" + path + "': unsupported VPDS version " + std::to_string(version));
  const std::uint32_t count = read_u32(f.get(), "episode count");

  std::vector<Episode> episodes;
  episodes.reserve(count);
  constexpr std::uint64_t kMaxElems = 1ull << 32;  // dimension overflow guard
  for (std::uint32_t i = 0; i < count; ++i) {
    Episode ep;
    ep.T = int(read_u32(f.get(), "T"));
    ep.H = int(read_u32(f.get(), "H"));
    ep.W = int(read_u32(f.get(), "W"));
    ep.S = int(read_u32(f.get(), "S"));
    ep.A = int(read_u32(f.get(), "A"));
    const std::uint64_t n_img = std::uint64_t(ep.T) * ep.H * ep.W * 3;
    if (ep.T <= 0 || ep.H <= 0 || ep.W <= 0 || ep.S <= 0 || ep.A <= 0 || n_img > kMaxElems)
      throw IoError("'" + path + "': episode " + std::to_string(i) + " has invalid dimensions");
    ep.images.resize(size_t(n_img));
    ep.states.resize(size_t(ep.T) * ep.S);
    ep.actions.resize(size_t(ep.T) * ep.A);
    read_f32(f.get(), ep.images.data(), ep.images.size(), "images");
    read_f32(f.get(), ep.states.data(), ep.states.size(), "states");
    read_f32(f.get(), ep.actions.data(), ep.actions.size(), "actions");
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace vp
