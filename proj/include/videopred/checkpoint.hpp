#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "videopred/config.hpp"
#include "videopred/dataset.hpp"
#include "videopred/model.hpp"

// VPCK checkpoint files (little-endian):
//   magic "VPCK", version u32 = 1,
//   config blob: u32 byte length + key/value text ([model] + [train_state]),
//   then tensors until EOF: name length u32 + name bytes, rank u32,
//   dims u32 * rank, float32 payload.
// Optimizer moments are stored under "adam.m.<param>" / "adam.v.<param>".

namespace vp {

template <typename T>
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
};

template <typename T>
struct LoadedCheckpoint {
  ModelConfig model_config;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  NamedTensors<T> tensors;
};

template <typename T>
inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
                            std::int64_t step, std::uint64_t seed) {
  using namespace io_detail;
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (std::fwrite("VPCK", 1, 4, f.get()) != 4) throw IoError("write failed");
  write_u32(f.get(), 1);
  const std::string blob = serialize_model_blob(cfg, step, seed);
  write_u32(f.get(), std::uint32_t(blob.size()));
  if (!blob.empty() && std::fwrite(blob.data(), 1, blob.size(), f.get()) != blob.size())
    throw IoError("write failed");
  for (const auto& [name, t] : tensors) {
    write_u32(f.get(), std::uint32_t(name.size()));
    if (std::fwrite(name.data(), 1, name.size(), f.get()) != name.size())
      throw IoError("write failed");
    write_u32(f.get(), std::uint32_t(t.rank()));
    for (int d = 0; d < t.rank(); ++d) write_u32(f.get(), std::uint32_t(t.dim(d)));
    if constexpr (std::is_same_v<T, float>) {
      write_f32(f.get(), t.data(), size_t(t.numel()));
    } else {
      std::vector<float> tmp(size_t(t.numel()));
      for (std::int64_t i = 0; i < t.numel(); ++i) tmp[size_t(i)] = float(t.data()[i]);
      write_f32(f.get(), tmp.data(), tmp.size());
    }
  }
  if (std::fflush(f.get()) != 0) throw IoError("write failed for '" + path + "'");
}

template <typename T>
inline LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  using namespace io_detail;
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "VPCK", 4) != 0)
    throw IoError("'" + path + "' is not a VPCK checkpoint (bad magic)");
  const std::uint32_t version = read_u32(f.get(), "version");
  if (version != 1)
    throw IoError("'" + path + "': unsupported VPCK version " + std::to_string(version));
  const std::uint32_t blob_len = read_u32(f.get(), "config blob length");
  std::string blob(blob_len, '\0');
  if (blob_len && std::fread(blob.data(), 1, blob_len, f.get()) != blob_len)
    throw IoError("'" + path + "': truncated config blob");
  ModelBlob mb = parse_model_blob(blob);

  LoadedCheckpoint<T> out;
  out.model_config = mb.model;
  out.step = mb.step;
  out.seed = mb.seed;
  for (;;) {
    unsigned char lenb[4];
    const size_t got = std::fread(lenb, 1, 4, f.get());
    if (got == 0) break;  // clean EOF
    if (got != 4) throw IoError("'" + path + "': truncated tensor record");
    const std::uint32_t name_len = std::uint32_t(lenb[0]) | (std::uint32_t(lenb[1]) << 8) |
                                   (std::uint32_t(lenb[2]) << 16) | (std::uint32_t(lenb[3]) << 24);
    check(name_len <= 4096, "checkpoint: implausible tensor name length");
    std::string name(name_len, '\0');
    if (name_len && std::fread(name.data(), 1, name_len, f.get()) != name_len)
      throw IoError("'" + path + "': truncated tensor name");
    const std::uint32_t rank = read_u32(f.get(), "tensor rank");
    check(rank <= 8, "checkpoint: implausible tensor rank");
    Shape shape;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_u32(f.get(), "tensor dim");
      shape.push_back(std::int64_t(dim));
      numel *= dim;
    }
    check(numel >= 0 && numel < (std::int64_t(1) << 32), "checkpoint: tensor too large");
    std::vector<float> payload(static_cast<size_t>(numel));
    read_f32(f.get(), payload.data(), payload.size(), "tensor '" + name + "'");
    if constexpr (std::is_same_v<T, float>) {
      out.tensors.items.emplace_back(name, Tensor<T>::from_data(shape, std::move(payload)));
    } else {
      std::vector<T> cast(payload.begin(), payload.end());
      out.tensors.items.emplace_back(name, Tensor<T>::from_data(shape, std::move(cast)));
    }
  }
  return out;
}

/// Copies checkpoint tensors into a predictor's parameters (by name, shapes
/// must match). Returns the list of missing names, which must be empty for a
/// usable checkpoint.
template <typename T>
inline void restore_params(Predictor<T>& model, const NamedTensors<T>& tensors) {
  for (auto& [name, param] : model.params().items()) {
    const Tensor<T>* src = tensors.find(name);
    check(src != nullptr, "checkpoint: missing parameter '" + name + "'");
    check_shape(src->shape() == param.shape(),
                "checkpoint: parameter '" + name + "' has shape " + shape_str(src->shape()) +
                    ", model expects " + shape_str(param.shape()));
    std::copy(src->data(), src->data() + src->numel(), param.data());
  }
}

}  // namespace vp
