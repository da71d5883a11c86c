#include "tdanet/eval.h"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "tdanet/error.h"

namespace tdanet {

namespace {

template <typename F>
Improvement pit_improvement(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                            const Waveform& mixture, F metric) {
  const std::size_t c = estimates.size();
  if (targets.size() != c) {
    throw InputError(std::to_string(c) + " estimates vs " + std::to_string(targets.size()) + " targets");
  }
  std::vector<std::vector<double>> pairwise(c, std::vector<double>(c));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) pairwise[i][j] = metric(estimates[i], targets[j]);
  }
  Improvement out;
  out.perm = best_permutation(pairwise).perm;
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    total += pairwise[i][out.perm[i]] - metric(mixture, targets[out.perm[i]]);
  }
  out.value_db = total / static_cast<double>(c);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string perm_string(const std::vector<std::size_t>& perm) {
  std::string s;
  for (std::size_t i = 0; i < perm.size(); ++i) s += (i ? "-" : "") + std::to_string(perm[i]);
  return s;
}

}  // namespace

Improvement si_snri(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                    const Waveform& mixture, const SiSnrOptions& options) {
  return pit_improvement(estimates, targets, mixture, [&](const Waveform& e, const Waveform& t) {
    return si_snr<float>(e, t, options);
  });
}

double sdr(const Waveform& estimate, const Waveform& target) {
  SiSnrOptions o;
  o.zero_mean = false;
  return si_snr<float>(estimate, target, o);
}

Improvement sdri(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                 const Waveform& mixture) {
  return pit_improvement(estimates, targets, mixture, [](const Waveform& e, const Waveform& t) { return sdr(e, t); });
}

RtfResult cpu_rtf(const TDANet<float>& model, const RtfOptions& o) {
  if (o.tracks == 0 || o.repeats == 0) throw ConfigError("rtf: tracks and repeats must be positive");
  const int rate = model.config().sample_rate;
  std::vector<Tensor<float>> tracks;
  for (std::size_t i = 0; i < o.tracks; ++i) {
    const Waveform w = synth_source(SourceKind::kHarmonicVoice, o.track_seconds, Rng(o.seed).split(i).seed(), rate);
    Tensor<float> t({1, w.size()});
    std::copy(w.begin(), w.end(), t.data());
    tracks.push_back(std::move(t));
  }
  auto run_once = [&] {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& t : tracks) {
      const auto out = model.separate(t, rate);
      if (out.empty()) throw StateError("rtf: empty separation");
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return wall / static_cast<double>(o.tracks) / o.track_seconds;
  };
  for (std::size_t i = 0; i < o.warmup; ++i) run_once();
  RtfResult r;
  r.repeats = o.repeats;
  r.warmup = o.warmup;
  r.tracks = o.tracks;
  r.track_seconds = o.track_seconds;
  for (std::size_t i = 0; i < o.repeats; ++i) r.samples.push_back(run_once());
  r.mean_s = mean_of(r.samples);
  r.std_s = std_of(r.samples);
  return r;
}

Environment describe_environment(std::size_t threads) {
  Environment env;
  char host[256] = {0};
  if (gethostname(host, sizeof(host) - 1) == 0) env.host = host;
  env.threads = threads;
  return env;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["environment"] = {{"host", environment.host}, {"threads", environment.threads},
                      {"precision", environment.precision}};
  if (params_m) j["params_m"] = *params_m;
  if (macs_g_per_s) j["macs_g_per_s"] = *macs_g_per_s;
  if (macs) {
    j["macs_breakdown"] = {{"encoder", macs->encoder},
                           {"bottleneck", macs->bottleneck},
                           {"block_per_unfold", macs->block_per_unfold},
                           {"ga_per_unfold", macs->ga_per_unfold},
                           {"la_per_unfold", macs->la_per_unfold},
                           {"blocks", macs->blocks},
                           {"masks", macs->masks},
                           {"decoder", macs->decoder},
                           {"total", macs->total}};
  }
  if (rtf) {
    j["cpu_rtf"] = {{"mean_s", rtf->mean_s}, {"std_s", rtf->std_s}, {"repeats", rtf->repeats},
                    {"warmup", rtf->warmup}, {"tracks", rtf->tracks}, {"track_seconds", rtf->track_seconds},
                    {"threads", 1}};
  }
  if (si_snri_db || !examples.empty()) {
    j["estimates"] = estimates;
    j["alignment"] = alignment;
    j["examples"] = examples.size();
    if (si_snri_db) j["si_snri_db"] = *si_snri_db;
    if (sdri_db) j["sdri_simplified_db"] = *sdri_db;
  }
  return j;
}

std::string MetricsReport::to_text() const {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("config_hash", config_hash);
  if (params_m) rows.emplace_back("params (M)", fixed(*params_m, 3));
  if (macs_g_per_s) rows.emplace_back("MACs (G/s)", fixed(*macs_g_per_s, 3));
  if (macs) {
    rows.emplace_back("  encoder (G)", fixed(macs->encoder / 1e9, 3));
    rows.emplace_back("  bottleneck (G)", fixed(macs->bottleneck / 1e9, 3));
    rows.emplace_back("  blocks (G)", fixed(macs->blocks / 1e9, 3));
    rows.emplace_back("    GA per unfold (G)", fixed(macs->ga_per_unfold / 1e9, 3));
    rows.emplace_back("    LA per unfold (G)", fixed(macs->la_per_unfold / 1e9, 3));
    rows.emplace_back("  masks (G)", fixed(macs->masks / 1e9, 3));
    rows.emplace_back("  decoder (G)", fixed(macs->decoder / 1e9, 3));
  }
  if (rtf) {
    rows.emplace_back("CPU RTF (s)", fixed(rtf->mean_s, 5) + " +- " + fixed(rtf->std_s, 5));
    rows.emplace_back("  protocol", std::to_string(rtf->tracks) + " x " + fixed(rtf->track_seconds, 1) + " s tracks, " +
                                        std::to_string(rtf->repeats) + " repeats, " + std::to_string(rtf->warmup) +
                                        " warmup, 1 thread");
  }
  if (si_snri_db || !examples.empty()) {
    rows.emplace_back("estimates", estimates);
    rows.emplace_back("alignment", alignment);
    rows.emplace_back("examples", std::to_string(examples.size()));
    if (si_snri_db) rows.emplace_back("SI-SNRi (dB)", fixed(*si_snri_db, 3));
    if (sdri_db) rows.emplace_back("SDRi(simplified) (dB)", fixed(*sdri_db, 3));
  }
  rows.emplace_back("host", environment.host);
  rows.emplace_back("threads", std::to_string(environment.threads));
  rows.emplace_back("precision", environment.precision);
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  std::ostringstream out;
  for (const auto& [k, v] : rows) out << k << std::string(width - k.size() + 2, ' ') << v << "\n";
  return out.str();
}

void MetricsReport::write_per_example_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << "id,si_snri_db,sdri_simplified_db,perm\n";
  for (const auto& e : examples) {
    out << e.id << ',' << fixed(e.si_snri_db, 6) << ',' << fixed(e.sdri_db, 6) << ',' << perm_string(e.perm) << "\n";
  }
  if (!out) throw FileError("write failed for " + path.string());
}

MetricsReport profile(const ModelConfig& config) {
  config.validate();
  MetricsReport r;
  r.config_hash = config.hash();
  r.params_m = static_cast<double>(count_params(config)) / 1e6;
  r.macs = count_mac_breakdown(config, 1.0);
  r.macs_g_per_s = static_cast<double>(r.macs->total) / 1e9;
  r.environment = describe_environment(1);
  return r;
}

Separator model_separator(const TDANet<float>& model) {
  return [&model](const MixtureExample& ex) {
    Tensor<float> wave({1, ex.mixture.size()});
    std::copy(ex.mixture.begin(), ex.mixture.end(), wave.data());
    std::vector<Waveform> out;
    for (const auto& t : model.separate(wave, ex.sample_rate)) out.emplace_back(t.data(), t.data() + t.size());
    return out;
  };
}

Separator oracle_separator() {
  return [](const MixtureExample& ex) { return ex.sources; };
}

Separator mixture_separator() {
  return [](const MixtureExample& ex) { return std::vector<Waveform>(ex.sources.size(), ex.mixture); };
}

namespace {

MetricsReport evaluate_indexed(std::size_t count, const std::function<MixtureExample(std::size_t)>& load,
                               const std::function<std::string(std::size_t)>& id, const Separator& separator,
                               std::size_t threads) {
  MetricsReport report;
  report.examples.resize(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        const MixtureExample ex = load(i);
        const std::vector<Waveform> est = separator(ex);
        const Improvement a = si_snri(est, ex.sources, ex.mixture);
        const Improvement b = sdri(est, ex.sources, ex.mixture);
        report.examples[i] = {id(i), a.value_db, b.value_db, a.perm};
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads ? threads : worker_threads(), count));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<double> a, b;
  for (const auto& e : report.examples) {
    a.push_back(e.si_snri_db);
    b.push_back(e.sdri_db);
  }
  if (count > 0) {
    report.si_snri_db = mean_of(a);
    report.sdri_db = mean_of(b);
  }
  report.environment = describe_environment(n);
  return report;
}

}  // namespace

MetricsReport evaluate_manifest(const DatasetManifest& manifest, const Separator& separator, const std::string& split,
                                std::size_t threads, double max_duration_s) {
  std::vector<const ManifestRow*> rows;
  for (const auto& r : manifest.rows) {
    if (split.empty() || r.split == split) rows.push_back(&r);
  }
  if (rows.empty()) throw ConfigError("manifest has no rows in split '" + split + "'");
  return evaluate_indexed(
      rows.size(), [&](std::size_t i) { return load_example(manifest, *rows[i], max_duration_s); },
      [&](std::size_t i) { return rows[i]->mixture; }, separator, threads);
}

MetricsReport evaluate_examples(const std::vector<MixtureExample>& examples, const Separator& separator,
                                std::size_t threads) {
  return evaluate_indexed(
      examples.size(), [&](std::size_t i) { return examples[i]; }, [](std::size_t i) { return std::to_string(i); },
      separator, threads);
}

}  // namespace tdanet
