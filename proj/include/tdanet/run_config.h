#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdanet/config.h"
#include "tdanet/datagen.h"
#include "tdanet/trainer.h"

namespace tdanet {

// Everything a command needs besides paths. Text form is one `key = value`
// per line ('#' starts a comment); keys are `seed`, `preset`, `ablate`,
// `model.<field>`, `train.<field>` and `data.<field>`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string preset = "base";  // base | large | desk
  std::string ablate;           // comma-separated ablation list
  nlohmann::json model_overrides = nlohmann::json::object();
  TrainConfig train;
  std::string recipe = "lrs2_2mix_style";
  double duration_s = 0.0;  // 0: recipe default
  std::size_t n_train = 20;
  std::size_t n_val = 5;
  std::size_t n_test = 3;

  // Preset, then model.* overrides, then ablations.
  ModelConfig model() const;
  std::uint64_t init_seed() const;
  std::uint64_t train_seed() const;
  TrainConfig train_config() const;  // train with the derived seed

  void set(const std::string& key, const std::string& value);
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text, const std::string& origin = "<text>");
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

  static std::vector<std::string> schema_keys();
};

// Desk-scale reduced model: N=64, S=3, B=4.
ModelConfig desk_config();

}  // namespace tdanet
