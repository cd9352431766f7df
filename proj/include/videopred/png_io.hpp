#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "videopred/common.hpp"

// Minimal dependency-free PNG writer (8-bit RGB, zlib stream with stored
// deflate blocks). Output is byte-deterministic for identical input.

namespace vp {
namespace png_detail {

inline std::uint32_t crc32(const unsigned char* data, size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

inline std::uint32_t adler32(const unsigned char* data, size_t n) {
  std::uint32_t a = 1, b = 0;
  for (size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

inline void push_u32be(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back((unsigned char)(x >> 24));
  v.push_back((unsigned char)(x >> 16));
  v.push_back((unsigned char)(x >> 8));
  v.push_back((unsigned char)x);
}

inline void write_chunk(std::FILE* f, const char type[4], const std::vector<unsigned char>& data) {
  std::vector<unsigned char> hdr;
  push_u32be(hdr, std::uint32_t(data.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  const std::uint32_t crc = crc32(body.data(), body.size());
  if (std::fwrite(hdr.data(), 1, 4, f) != 4) throw IoError("png: write failed");
  if (std::fwrite(body.data(), 1, body.size(), f) != body.size())
    throw IoError("png: write failed");
  unsigned char crcb[4] = {(unsigned char)(crc >> 24), (unsigned char)(crc >> 16),
                           (unsigned char)(crc >> 8), (unsigned char)crc};
  if (std::fwrite(crcb, 1, 4, f) != 4) throw IoError("png: write failed");
}

}  // namespace png_detail

/// Writes an 8-bit RGB PNG from row-major rgb8[H*W*3].
inline void write_png_rgb8(const std::string& path, const unsigned char* rgb, int H, int W) {
  using namespace png_detail;
  check(H > 0 && W > 0, "png: empty image");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (std::fwrite(sig, 1, 8, f) != 8) {
    std::fclose(f);
    throw IoError("png: write failed");
  }
  try {
    std::vector<unsigned char> ihdr;
    push_u32be(ihdr, std::uint32_t(W));
    push_u32be(ihdr, std::uint32_t(H));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, RGB
    write_chunk(f, "IHDR", ihdr);

    // raw scanlines with filter byte 0
    std::vector<unsigned char> raw;
    raw.reserve(size_t(H) * (size_t(W) * 3 + 1));
    for (int y = 0; y < H; ++y) {
      raw.push_back(0);
      raw.insert(raw.end(), rgb + size_t(y) * W * 3, rgb + size_t(y + 1) * W * 3);
    }

    // zlib stream: header + stored deflate blocks + adler32
    std::vector<unsigned char> idat = {0x78, 0x01};
    size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
      const size_t chunk = std::min<size_t>(65535, raw.size() - pos);
      const bool last = pos + chunk >= raw.size();
      idat.push_back(last ? 1 : 0);
      idat.push_back((unsigned char)(chunk & 0xff));
      idat.push_back((unsigned char)(chunk >> 8));
      idat.push_back((unsigned char)(~chunk & 0xff));
      idat.push_back((unsigned char)((~chunk >> 8) & 0xff));
      idat.insert(idat.end(), raw.begin() + std::ptrdiff_t(pos),
                  raw.begin() + std::ptrdiff_t(pos + chunk));
      pos += chunk;
      if (last) break;
    }
    push_u32be(idat, adler32(raw.data(), raw.size()));
    write_chunk(f, "IDAT", idat);
    write_chunk(f, "IEND", {});
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw IoError("png: close failed for '" + path + "'");
}

/// Converts a [0,1] float value to the full 8-bit range.
inline unsigned char to_byte(double v) {
  const double c = v < 0 ? 0 : (v > 1 ? 1 : v);
  return (unsigned char)(c * 255.0 + 0.5);
}

}  // namespace vp
