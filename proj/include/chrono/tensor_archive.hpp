#pragma once

#include <map>
#include <string>

#include <torch/torch.h>

#include "json.hpp"

namespace chrono {

/// Flat key -> array container with a JSON metadata block. Tensors are stored
/// as raw little-endian payloads in key order, so identical contents always
/// serialize to identical bytes.
struct TensorArchive {
  static constexpr uint32_t kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;  // contiguous CPU tensors

  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);
};

}  // namespace chrono
