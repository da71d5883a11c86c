#include "tdanet/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "tdanet/checkpoint.h"
#include "tdanet/error.h"

namespace tdanet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lr_halve_patience <= 0 || early_stop_patience <= 0) throw ConfigError("patience values must be positive");
  if (!(grad_clip_l2 > 0.0)) throw ConfigError("grad_clip_l2 must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || !(adam_eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"lr_halve_patience", lr_halve_patience},
          {"early_stop_patience", early_stop_patience},
          {"grad_clip_l2", grad_clip_l2},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"zero_mean", zero_mean},
          {"max_duration_s", max_duration_s}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown training key '" + key + "'");
  }
  try {
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.lr_halve_patience = j.value("lr_halve_patience", c.lr_halve_patience);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.grad_clip_l2 = j.value("grad_clip_l2", c.grad_clip_l2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.zero_mean = j.value("zero_mean", c.zero_mean);
    c.max_duration_s = j.value("max_duration_s", c.max_duration_s);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

PlateauSchedule::PlateauSchedule(int halve_patience, int stop_patience)
    : halve_patience_(halve_patience), stop_patience_(stop_patience) {
  if (halve_patience <= 0 || stop_patience <= 0) throw ConfigError("patience values must be positive");
}

PlateauSchedule::Event PlateauSchedule::observe(double val_loss) {
  Event ev;
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
    ev.improved = true;
    return ev;
  }
  ++bad_;
  if (bad_ >= stop_patience_) {
    ev.stop = true;
  } else if (bad_ % halve_patience_ == 0) {
    ev.halve_lr = true;
  }
  return ev;
}

TrainExample to_train_example(const MixtureExample& ex) {
  TrainExample out;
  const std::size_t n = ex.mixture.size();
  out.mixture = Tensor<float>({1, n});
  std::copy(ex.mixture.begin(), ex.mixture.end(), out.mixture.data());
  for (const auto& s : ex.sources) {
    if (s.size() != n) throw InputError("source length differs from mixture");
    Tensor<float> t({1, n});
    std::copy(s.begin(), s.end(), t.data());
    out.sources.push_back(std::move(t));
  }
  return out;
}

Trainer::Trainer(TDANet<float>& model, TrainConfig config, fs::path out_dir)
    : model_(model),
      config_(config),
      out_dir_(std::move(out_dir)),
      adam_(model.params(), AdamOptions{config.lr, config.beta1, config.beta2, config.adam_eps}),
      schedule_(config.lr_halve_patience, config.early_stop_patience) {
  config_.validate();
  loss_options_.zero_mean = config_.zero_mean;
}

double Trainer::train_step(const std::vector<const TrainExample*>& batch, Rng* dropout_rng) {
  if (batch.empty()) throw InputError("empty batch");
  auto& params = model_.params();
  params.zero_grad();
  const float weight = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_rng = dropout_rng;
  for (const TrainExample* ex : batch) {
    ParamBinding<float> binding = params.bind();
    std::vector<Var<float>> est = model_.forward(ex->mixture, binding, opt);
    PitLoss<float> pit = pit_loss(est, ex->sources, loss_options_);
    total += pit.loss.item();
    Var<float> scaled = batch.size() == 1 ? pit.loss : scale(pit.loss, weight);
    backward(scaled);
  }
  last_grad_norm_ = global_grad_norm(params);
  last_clip_factor_ = clip_grad_norm(params, config_.grad_clip_l2);
  adam_.step();
  return total / static_cast<double>(batch.size());
}

double Trainer::evaluate(const std::vector<TrainExample>& examples) const {
  if (examples.empty()) throw ConfigError("evaluation set is empty");
  NoGradGuard guard;
  const ParamBinding<float> binding = model_.params().bind_constant();
  double total = 0.0;
  for (const auto& ex : examples) {
    const std::vector<Var<float>> est = model_.forward(ex.mixture, binding);
    total += pit_loss(est, ex.sources, loss_options_).loss.item();
  }
  return total / static_cast<double>(examples.size());
}

TrainResult Trainer::fit(const std::vector<TrainExample>& train, const std::vector<TrainExample>& val) {
  if (train.empty()) throw ConfigError("training set is empty");
  if (val.empty()) throw ConfigError("validation set is empty");
  TrainResult result;
  result.best_val_loss = schedule_.best();
  result.best_epoch = best_epoch_;
  const Rng root(config_.seed);
  for (int epoch = next_epoch_; epoch <= config_.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    Rng dropout_rng = root.split("dropout").split(static_cast<std::uint64_t>(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam_.lr();
    double loss_sum = 0.0;
    std::size_t steps = 0, clipped = 0;
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const TrainExample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&train[order[k]]);
      try {
        loss_sum += train_step(batch, &dropout_rng) * static_cast<double>(batch.size());
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " aborted: " + e.what());
      }
      ++steps;
      if (last_clip_factor_ < 1.0) ++clipped;
    }
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.val_loss = evaluate(val);
    rec.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(steps);
    const PlateauSchedule::Event ev = schedule_.observe(rec.val_loss);
    rec.improved = ev.improved;
    rec.halved = ev.halve_lr;
    if (ev.improved) best_epoch_ = epoch;
    if (ev.halve_lr) adam_.set_lr(adam_.lr() * 0.5);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    next_epoch_ = epoch + 1;
    result.epochs.push_back(rec);
    result.best_val_loss = schedule_.best();
    result.best_epoch = best_epoch_;
    if (!out_dir_.empty()) save_state(rec, ev.improved);
    if (on_epoch) on_epoch(rec);
    if (ev.stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

void Trainer::save_state(const EpochRecord& rec, bool improved) {
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) throw FileError("cannot create " + out_dir_.string() + ": " + ec.message());

  const fs::path log_path = out_dir_ / "train_log.csv";
  const bool fresh = !fs::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw FileError("cannot write " + log_path.string());
  if (fresh) log << "epoch,train_loss,val_loss,lr,wall_time_s\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6g,%.3f\n", rec.epoch, rec.train_loss, rec.val_loss, rec.lr,
                rec.wall_time_s);
  log << line;

  const nlohmann::json extra = {{"epoch", rec.epoch}, {"val_loss", rec.val_loss}};
  save_checkpoint(out_dir_ / "last.json", model_, extra);
  if (improved) {
    save_checkpoint(out_dir_ / "best.json", model_, extra);
    std::ofstream marker(out_dir_ / "best", std::ios::trunc);
    marker << "checkpoint=best.json\nepoch=" << rec.epoch << "\nval_loss=" << rec.val_loss << "\n";
    if (!marker) throw FileError("cannot write " + (out_dir_ / "best").string());
  }

  std::vector<NamedTensor> moments;
  const auto& params = model_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.push_back({"m/" + params[i].name, adam_.first_moments()[i]});
    moments.push_back({"v/" + params[i].name, adam_.second_moments()[i]});
  }
  write_tensor_file(out_dir_ / "optimizer.json", moments, {{"steps", adam_.steps()}, {"lr", adam_.lr()}});

  nlohmann::json state;
  state["next_epoch"] = next_epoch_;
  state["lr"] = adam_.lr();
  state["best_val_loss"] = std::isfinite(schedule_.best()) ? nlohmann::json(schedule_.best()) : nlohmann::json();
  state["bad_epochs"] = schedule_.bad_epochs();
  state["best_epoch"] = best_epoch_;
  state["adam_steps"] = adam_.steps();
  state["train_config"] = config_.to_json();
  std::ofstream out(out_dir_ / "trainer_state.json", std::ios::trunc);
  out << state.dump(2) << "\n";
  if (!out) throw FileError("cannot write " + (out_dir_ / "trainer_state.json").string());
}

bool Trainer::resume() {
  if (out_dir_.empty() || !fs::exists(out_dir_ / "trainer_state.json")) return false;
  std::ifstream in(out_dir_ / "trainer_state.json");
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((out_dir_ / "trainer_state.json").string() + ": " + e.what());
  }
  Checkpoint last = load_checkpoint(out_dir_ / "last.json");
  auto& params = model_.params();
  if (last.params.size() != params.size()) throw ConfigError("resume: checkpoint does not match the model");
  for (auto& p : params) {
    const auto& src = last.params.get(p.name);
    require_same_shape(src.value.shape(), p.value.shape(), p.name.c_str());
    p.value = src.value;
  }
  const std::vector<NamedTensor> moments = read_tensor_file(out_dir_ / "optimizer.json");
  if (moments.size() != 2 * params.size()) throw FormatError("resume: optimizer state does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_.first_moments()[i] = moments[2 * i].value;
    adam_.second_moments()[i] = moments[2 * i + 1].value;
  }
  try {
    next_epoch_ = state.at("next_epoch").get<int>();
    adam_.set_lr(state.at("lr").get<double>());
    adam_.set_steps(state.at("adam_steps").get<std::uint64_t>());
    const auto& best = state.at("best_val_loss");
    schedule_.restore(best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>(),
                      state.at("bad_epochs").get<int>());
    best_epoch_ = state.at("best_epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("trainer_state.json: " + std::string(e.what()));
  }
  return true;
}

}  // namespace tdanet
