#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdanet/datagen.h"
#include "tdanet/loss.h"
#include "tdanet/optim.h"
#include "tdanet/tdanet.h"

namespace tdanet {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int lr_halve_patience = 15;
  int early_stop_patience = 30;
  double grad_clip_l2 = 5.0;
  int batch_size = 1;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  bool zero_mean = true;
  double max_duration_s = 0.0;  // truncate examples when > 0

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Patience bookkeeping on the validation loss (lower is better).
class PlateauSchedule {
 public:
  PlateauSchedule(int halve_patience = 15, int stop_patience = 30);

  struct Event {
    bool improved = false;
    bool halve_lr = false;
    bool stop = false;
  };
  Event observe(double val_loss);

  double best() const { return best_; }
  int bad_epochs() const { return bad_; }
  void restore(double best, int bad_epochs) {
    best_ = best;
    bad_ = bad_epochs;
  }

 private:
  int halve_patience_;
  int stop_patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

struct TrainExample {
  Tensor<float> mixture;               // 1 x T
  std::vector<Tensor<float>> sources;  // C tensors of 1 x T
};

TrainExample to_train_example(const MixtureExample& ex);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
  bool improved = false;
  bool halved = false;
  double clipped_fraction = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

// Owns the optimizer and the schedule for one model. When an output
// directory is set it writes train_log.csv, best/last checkpoints, the
// optimizer moments, trainer_state.json and a `best` marker file.
class Trainer {
 public:
  Trainer(TDANet<float>& model, TrainConfig config, std::filesystem::path out_dir = {});

  // Continues from the state in out_dir (epoch numbering, lr, patience,
  // optimizer moments, last parameters). Returns false if there is none.
  bool resume();

  TrainResult fit(const std::vector<TrainExample>& train, const std::vector<TrainExample>& val);

  // Forward/backward/clip/step on one batch; returns the mean PIT loss.
  double train_step(const std::vector<const TrainExample*>& batch, Rng* dropout_rng);
  double evaluate(const std::vector<TrainExample>& examples) const;

  Adam<float>& optimizer() { return adam_; }
  int next_epoch() const { return next_epoch_; }
  double last_clip_factor() const { return last_clip_factor_; }
  double last_grad_norm() const { return last_grad_norm_; }

  // Called after every epoch (progress reporting).
  std::function<void(const EpochRecord&)> on_epoch;

 private:
  void save_state(const EpochRecord& rec, bool improved);

  TDANet<float>& model_;
  TrainConfig config_;
  std::filesystem::path out_dir_;
  Adam<float> adam_;
  PlateauSchedule schedule_;
  int next_epoch_ = 1;
  int best_epoch_ = 0;
  double last_clip_factor_ = 1.0;
  double last_grad_norm_ = 0.0;
  SiSnrOptions loss_options_;
};

}  // namespace tdanet
