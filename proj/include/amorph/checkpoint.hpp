#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "amorph/tensor.hpp"

namespace amorph {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Checkpoint on disk is two files:
///   <path>      plain-text manifest: "meta <key> <value>" and
///               "tensor <name> <d0,d1,...> <byte offset>" lines
///   <path>.bin  little-endian float32 payload, tensors back to back
/// Values pass through float32, so float tensors round-trip bit-exactly.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor<float>> tensors;

  const Tensor<float>& find(const std::string& name) const;
};

std::filesystem::path payload_path(const std::filesystem::path& manifest);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& meta,
                     const std::vector<NamedTensor<T>>& tensors);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into same-named, same-shaped tensors.
template <typename T>
void restore_tensors(const Checkpoint& ckpt, std::vector<NamedTensor<T>>& into);

}  // namespace amorph
