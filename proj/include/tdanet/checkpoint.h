#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdanet/config.h"
#include "tdanet/param_store.h"
#include "tdanet/tdanet.h"

namespace tdanet {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

// A JSON manifest at `path` (names, shapes, element offsets, metadata) plus
// raw little-endian float32 data in manifest order at path + ".bin".
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const nlohmann::json& meta = nlohmann::json::object());
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

std::filesystem::path binary_path(const std::filesystem::path& manifest);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamStore<float>& params,
                     const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const TDANet<float>& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
  nlohmann::json extra;
};

// Validates the tensors against model_layout(config).
Checkpoint load_checkpoint(const std::filesystem::path& path);
TDANet<float> load_model(const std::filesystem::path& path);

}  // namespace tdanet
