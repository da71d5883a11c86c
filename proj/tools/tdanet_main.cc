// tdanet command-line tool: simulate | train | separate | eval | profile | gradcheck

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdanet/checkpoint.h"
#include "tdanet/datagen.h"
#include "tdanet/error.h"
#include "tdanet/eval.h"
#include "tdanet/gradcheck_suite.h"
#include "tdanet/run_config.h"
#include "tdanet/trainer.h"
#include "tdanet/wav.h"

namespace fs = std::filesystem;
using namespace tdanet;

namespace {

constexpr const char* kResolvedConfig = "config.resolved";

// Options shared by every subcommand that builds a RunConfig.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::string preset;
  std::string ablate;
  std::int64_t seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override one key (key=value), repeatable");
    cmd->add_option("--preset", preset, "base | large | desk")->check(CLI::IsMember({"base", "large", "desk"}));
    cmd->add_option("--ablate", ablate, "comma-separated ablations (no_ga,no_la,no_tl,no_mhsa,no_ffn,no_topdown,top_f,concat)");
    cmd->add_option("--seed", seed, "root seed")->check(CLI::NonNegativeNumber);
  }

  // defaults < file < flags
  RunConfig resolve() const {
    RunConfig rc;
    if (!file.empty()) rc.apply_file(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!preset.empty()) rc.set("preset", preset);
    if (!ablate.empty()) rc.set("ablate", ablate);
    if (seed >= 0) rc.seed = static_cast<std::uint64_t>(seed);
    return rc;
  }
};

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("write failed for " + path.string());
}

Tensor<float> to_tensor(const std::vector<float>& w) {
  Tensor<float> t({1, w.size()});
  std::copy(w.begin(), w.end(), t.data());
  return t;
}

std::vector<TrainExample> load_split(const DatasetManifest& m, const std::string& split, double max_duration) {
  std::vector<TrainExample> out;
  for (const ManifestRow* r : m.split(split)) out.push_back(to_train_example(load_example(m, *r, max_duration)));
  return out;
}

int run_simulate(const ConfigFlags& cf, const std::string& recipe, const std::vector<long>& counts, double duration,
                 const std::string& out_dir) {
  RunConfig rc = cf.resolve();
  if (!recipe.empty()) rc.set("data.recipe", recipe);
  if (counts[0] >= 0) rc.n_train = static_cast<std::size_t>(counts[0]);
  if (counts[1] >= 0) rc.n_val = static_cast<std::size_t>(counts[1]);
  if (counts[2] >= 0) rc.n_test = static_cast<std::size_t>(counts[2]);
  if (duration > 0.0) rc.set("data.duration_s", std::to_string(duration));
  make_dir(out_dir);
  SimulateOptions opt;
  opt.duration_s = rc.duration_s;
  opt.sample_rate = rc.model().sample_rate;
  const DatasetManifest m =
      simulate_dataset(parse_recipe(rc.recipe), {rc.n_train, rc.n_val, rc.n_test}, out_dir, rc.seed, opt);
  rc.write(fs::path(out_dir) / kResolvedConfig);
  std::printf("recipe    %s\nseed      %llu\ntrain     %zu\nval       %zu\ntest      %zu\nmanifest  %s\n",
              m.recipe.c_str(), static_cast<unsigned long long>(m.seed), m.split("train").size(),
              m.split("val").size(), m.split("test").size(), m.path.string().c_str());
  return 0;
}

int run_train(const ConfigFlags& cf, const std::string& manifest_path, const std::string& out_dir, bool resume,
              int max_epochs) {
  RunConfig rc = cf.resolve();
  if (max_epochs > 0) rc.set("train.max_epochs", std::to_string(max_epochs));
  const DatasetManifest m = read_manifest(manifest_path);
  const TrainConfig tc = rc.train_config();
  const std::vector<TrainExample> train = load_split(m, "train", tc.max_duration_s);
  const std::vector<TrainExample> val = load_split(m, "val", tc.max_duration_s);
  if (train.empty()) throw ConfigError("manifest " + manifest_path + " has no train rows");
  if (val.empty()) throw ConfigError("manifest " + manifest_path + " has no val rows");
  const fs::path out(out_dir);
  if (!resume && fs::exists(out / "trainer_state.json")) {
    throw ConfigError("output directory '" + out_dir + "' already holds a run; pass --resume to continue it");
  }
  make_dir(out);
  TDANet<float> model(rc.model(), rc.init_seed());
  Trainer trainer(model, tc, out);
  if (resume && !trainer.resume()) throw FileError("nothing to resume in " + out_dir);
  rc.write(out / kResolvedConfig);
  std::printf("params %.3f M, %zu train / %zu val examples, starting at epoch %d\n",
              static_cast<double>(model.params().total_elements()) / 1e6, train.size(), val.size(),
              trainer.next_epoch());
  trainer.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %4d  train %9.4f  val %9.4f  lr %.3g  %6.1fs%s%s\n", r.epoch, r.train_loss, r.val_loss, r.lr,
                r.wall_time_s, r.improved ? "  *" : "", r.halved ? "  lr/2" : "");
    std::fflush(stdout);
  };
  const TrainResult res = trainer.fit(train, val);
  std::printf("best epoch %d, val loss %.4f%s\ncheckpoint %s\n", res.best_epoch, res.best_val_loss,
              res.stopped_early ? " (early stop)" : "", (out / "best.json").string().c_str());
  return 0;
}

void separate_one(const TDANet<float>& model, const fs::path& wav, const fs::path& out) {
  const WavData in = read_wav(wav);
  const std::vector<Tensor<float>> est = model.separate(to_tensor(in.samples), in.sample_rate);
  make_dir(out);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const std::vector<float> w(est[i].data(), est[i].data() + est[i].size());
    write_wav(out / ("spk" + std::to_string(i + 1) + ".wav"), w, in.sample_rate);
  }
}

int run_separate(const std::string& checkpoint, const std::string& input, const std::string& manifest_path,
                 const std::string& split, const std::string& out_dir) {
  if (input.empty() == manifest_path.empty()) throw ConfigError("give exactly one of --input or --manifest");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const TDANet<float> model(ck.config, ck.params);
  const fs::path out(out_dir);
  make_dir(out);
  write_text(out / "model_config.json", ck.config.to_json().dump(2) + "\n");
  if (!input.empty()) {
    separate_one(model, input, out);
    std::printf("wrote %d sources to %s\n", ck.config.speakers, out_dir.c_str());
    return 0;
  }
  const DatasetManifest m = read_manifest(manifest_path);
  std::size_t n = 0;
  for (const auto& r : m.rows) {
    if (!split.empty() && r.split != split) continue;
    separate_one(model, m.resolve(r.mixture), out / fs::path(r.mixture).parent_path() / fs::path(r.mixture).stem());
    ++n;
  }
  std::printf("separated %zu mixtures into %s\n", n, out_dir.c_str());
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& manifest_path, const std::string& estimates,
             const std::string& split, const std::string& out_dir, bool per_example, bool json) {
  const DatasetManifest m = read_manifest(manifest_path);
  MetricsReport report;
  if (estimates == "model") {
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required with --estimates model");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const TDANet<float> model(ck.config, ck.params);
    report = evaluate_manifest(m, model_separator(model), split);
    report.config_hash = ck.config.hash();
    report.params_m = static_cast<double>(count_params(ck.config)) / 1e6;
    report.macs_g_per_s = static_cast<double>(count_macs(ck.config)) / 1e9;
  } else {
    report = evaluate_manifest(m, estimates == "oracle" ? oracle_separator() : mixture_separator(), split);
  }
  report.estimates = estimates;
  if (!out_dir.empty()) {
    const fs::path out(out_dir);
    make_dir(out);
    write_text(out / "report.json", report.to_json().dump(2) + "\n");
    write_text(out / "report.txt", report.to_text());
    if (per_example) report.write_per_example_csv(out / "per_example.csv");
    nlohmann::json snapshot = {{"checkpoint", checkpoint}, {"manifest", manifest_path},
                               {"estimates", estimates}, {"split", split}};
    write_text(out / "eval_config.json", snapshot.dump(2) + "\n");
  } else if (per_example) {
    throw ConfigError("--per-example needs --out");
  }
  std::cout << (json ? report.to_json().dump(2) + "\n" : report.to_text());
  return 0;
}

int run_profile(const ConfigFlags& cf, bool rtf, std::size_t repeats, bool full_protocol, std::size_t warmup,
                const std::string& out_dir, bool json) {
  const RunConfig rc = cf.resolve();
  const ModelConfig config = rc.model();
  MetricsReport report = profile(config);
  if (rtf) {
    const TDANet<float> model(config, rc.init_seed());
    RtfOptions o;
    o.repeats = full_protocol ? 1000 : repeats;
    o.warmup = warmup;
    o.seed = rc.seed;
    report.rtf = cpu_rtf(model, o);
  }
  if (!out_dir.empty()) {
    make_dir(out_dir);
    rc.write(fs::path(out_dir) / kResolvedConfig);
    write_text(fs::path(out_dir) / "profile.json", report.to_json().dump(2) + "\n");
    write_text(fs::path(out_dir) / "profile.txt", report.to_text());
  }
  std::cout << (json ? report.to_json().dump(2) + "\n" : report.to_text());
  return 0;
}

int run_gradcheck(const std::string& scale, std::uint64_t seed) {
  std::vector<NamedCheck> checks;
  if (scale == "layers" || scale == "all") checks = layer_gradchecks(seed);
  if (scale == "full" || scale == "all") checks.push_back(full_model_gradcheck(tiny_gradcheck_config(), 512, seed));
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%-26s tol=%.0e  %s\n", c.name.c_str(), c.tolerance, c.report.summary().c_str());
    ok = ok && c.passed();
  }
  std::printf("%s: %zu checks\n", ok ? "PASS" : "FAIL", checks.size());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TDANet speech separation: data simulation, training, inference, evaluation and profiling"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "generate a synthetic mixture dataset");
  ConfigFlags sim_cf;
  sim_cf.attach(sim);
  std::string recipe, sim_out;
  std::vector<long> counts = {-1, -1, -1};
  double duration = 0.0;
  sim->add_option("--recipe", recipe, "dataset recipe")
      ->check(CLI::IsMember({"lrs2_2mix_style", "wham_style", "libri2mix_style"}));
  sim->add_option("--train", counts[0], "training examples")->check(CLI::NonNegativeNumber);
  sim->add_option("--val", counts[1], "validation examples")->check(CLI::NonNegativeNumber);
  sim->add_option("--test", counts[2], "test examples")->check(CLI::NonNegativeNumber);
  sim->add_option("--duration", duration, "seconds per example (default: recipe)");
  sim->add_option("--out", sim_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model on a manifest");
  ConfigFlags train_cf;
  train_cf.attach(train);
  std::string manifest, train_out;
  bool resume = false;
  int max_epochs = 0;
  train->add_option("--manifest", manifest, "dataset manifest")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_flag("--resume", resume, "continue the run in --out");
  train->add_option("--max-epochs", max_epochs, "override train.max_epochs");

  auto* sep = app.add_subcommand("separate", "separate a WAV file or every mixture of a manifest");
  std::string sep_ck, sep_in, sep_manifest, sep_split, sep_out;
  sep->add_option("--checkpoint", sep_ck, "model checkpoint (.json)")->required();
  sep->add_option("--input", sep_in, "mixture WAV");
  sep->add_option("--manifest", sep_manifest, "batch mode: manifest");
  sep->add_option("--split", sep_split, "batch mode: only this split");
  sep->add_option("--out", sep_out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "SI-SNRi / SDRi on a manifest split");
  std::string ev_ck, ev_manifest, ev_estimates = "model", ev_split = "test", ev_out;
  bool per_example = false, ev_json = false;
  ev->add_option("--checkpoint", ev_ck, "model checkpoint (.json)");
  ev->add_option("--manifest", ev_manifest, "dataset manifest")->required();
  ev->add_option("--estimates", ev_estimates, "model | oracle | mixture")
      ->check(CLI::IsMember({"model", "oracle", "mixture"}));
  ev->add_option("--split", ev_split, "split to evaluate (empty: all)");
  ev->add_option("--out", ev_out, "report directory");
  ev->add_flag("--per-example", per_example, "write per_example.csv");
  ev->add_flag("--json", ev_json, "print JSON instead of text");

  auto* prof = app.add_subcommand("profile", "parameter / MAC counts and optional CPU RTF");
  ConfigFlags prof_cf;
  prof_cf.attach(prof);
  bool rtf = false, full_protocol = false, prof_json = false;
  std::size_t repeats = 100, warmup = 3;
  std::string prof_out;
  prof->add_flag("--rtf", rtf, "time 10 x 1 s tracks on one thread");
  prof->add_option("--repeats", repeats, "RTF repeats")->check(CLI::PositiveNumber);
  prof->add_flag("--full-protocol", full_protocol, "1000 RTF repeats");
  prof->add_option("--warmup", warmup, "untimed warmup repeats");
  prof->add_option("--out", prof_out, "report directory");
  prof->add_flag("--json", prof_json, "print JSON instead of text");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::string gc_scale = "all";
  std::uint64_t gc_seed = 1;
  gc->add_option("--scale", gc_scale, "layers | full | all")->check(CLI::IsMember({"layers", "full", "all"}));
  gc->add_option("--seed", gc_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sim) return run_simulate(sim_cf, recipe, counts, duration, sim_out);
    if (*train) return run_train(train_cf, manifest, train_out, resume, max_epochs);
    if (*sep) return run_separate(sep_ck, sep_in, sep_manifest, sep_split, sep_out);
    if (*ev) return run_eval(ev_ck, ev_manifest, ev_estimates, ev_split, ev_out, per_example, ev_json);
    if (*prof) return run_profile(prof_cf, rtf, repeats, full_protocol, warmup, prof_out, prof_json);
    if (*gc) return run_gradcheck(gc_scale, gc_seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const FileError& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
