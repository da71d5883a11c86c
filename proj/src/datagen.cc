#include "tdanet/datagen.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "tdanet/error.h"
#include "tdanet/rng.h"
#include "tdanet/wav.h"

namespace tdanet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const char* kManifestHeader = "mixture,src1,src2,noise,snr_db,split,seed";

std::size_t sample_count(double duration_s, int sample_rate) {
  if (duration_s < 0.1) throw InputError("source duration must be at least 0.1 s");
  if (sample_rate <= 0) throw InputError("sample rate must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

// Smooth positive envelope in [0.2, 1].
std::vector<double> slow_envelope(Rng& rng, std::size_t n, int sample_rate) {
  const double r1 = rng.uniform(0.5, 3.0), r2 = rng.uniform(0.2, 1.0);
  const double p1 = rng.uniform(0.0, kTwoPi), p2 = rng.uniform(0.0, kTwoPi);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    env[i] = 0.6 + 0.25 * std::sin(kTwoPi * r1 * t + p1) + 0.15 * std::sin(kTwoPi * r2 * t + p2);
  }
  return env;
}

Waveform peak_normalized(const std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  Waveform out(x.size(), 0.0f);
  if (peak == 0.0) return out;
  const double g = kSourcePeak / peak;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * g);
  return out;
}

Waveform voice_from(Rng& rng, std::size_t n, double f0, int sample_rate) {
  const int harmonics = rng.uniform_int(3, 8);
  std::vector<double> amp(harmonics), phase(harmonics);
  for (int k = 0; k < harmonics; ++k) {
    amp[k] = rng.uniform(0.3, 1.0) / (k + 1);
    phase[k] = rng.uniform(0.0, kTwoPi);
  }
  const double vib_rate = rng.uniform(3.0, 6.0), vib_depth = rng.uniform(0.0, 0.02);
  const double vib_phase = rng.uniform(0.0, kTwoPi);
  const std::vector<double> env = slow_envelope(rng, n, sample_rate);
  std::vector<double> x(n, 0.0);
  double theta = 0.0;  // integrated fundamental phase
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f = f0 * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t + vib_phase));
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      if (f * (k + 1) >= 0.5 * sample_rate) break;
      v += amp[k] * std::sin((k + 1) * theta + phase[k]);
    }
    x[i] = env[i] * v;
    theta += kTwoPi * f / sample_rate;
  }
  return peak_normalized(x);
}

Waveform chirp(Rng& rng, std::size_t n, int sample_rate) {
  const double nyq = 0.5 * sample_rate;
  const double fa = rng.uniform(100.0, std::min(1000.0, nyq * 0.5));
  const double fb = rng.uniform(std::min(1000.0, nyq * 0.5), std::min(4000.0, nyq * 0.9));
  const double dur = static_cast<double>(n) / sample_rate;
  const std::vector<double> env = slow_envelope(rng, n, sample_rate);
  const double phase0 = rng.uniform(0.0, kTwoPi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    x[i] = env[i] * std::sin(phase0 + kTwoPi * (fa * t + 0.5 * (fb - fa) / dur * t * t));
  }
  return peak_normalized(x);
}

Waveform noise_burst(Rng& rng, std::size_t n, int sample_rate) {
  std::vector<double> gate(n, 0.0);
  std::size_t i = 0;
  bool on = rng.uniform() < 0.5;
  bool any_on = false;
  while (i < n) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.05, 0.3) * sample_rate);
    const std::size_t end = std::min(n, i + std::max<std::size_t>(len, 1));
    if (on || (!any_on && end == n)) {
      for (std::size_t k = i; k < end; ++k) gate[k] = 1.0;
      any_on = true;
    }
    on = !on;
    i = end;
  }
  // 5 ms ramps on every gate edge.
  const auto ramp = std::max<std::size_t>(1, static_cast<std::size_t>(0.005 * sample_rate));
  std::vector<double> smooth(n, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += gate[k];
    if (k >= ramp) acc -= gate[k - ramp];
    smooth[k] = acc / static_cast<double>(ramp);
  }
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = smooth[k] * rng.normal();
  return peak_normalized(x);
}

void scale_in_place(Waveform& x, double g) {
  for (auto& v : x) v = static_cast<float>(v * g);
}

double rms_dbfs(const Waveform& x) {
  return 10.0 * std::log10(energy(x) / static_cast<double>(x.size()));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

SourceKind parse_source_kind(const std::string& name) {
  if (name == "harmonic_voice") return SourceKind::kHarmonicVoice;
  if (name == "chirp") return SourceKind::kChirp;
  if (name == "noise_burst") return SourceKind::kNoiseBurst;
  throw ConfigError("unknown source kind '" + name + "'");
}

std::string to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kHarmonicVoice: return "harmonic_voice";
    case SourceKind::kChirp: return "chirp";
    case SourceKind::kNoiseBurst: return "noise_burst";
  }
  return "?";
}

Waveform harmonic_voice(double duration_s, double f0, std::uint64_t seed, int sample_rate) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  Rng rng = Rng(seed).split("harmonic_voice");
  rng.uniform();  // keep the stream aligned with synth_source's f0 draw
  return voice_from(rng, n, f0, sample_rate);
}

Waveform synth_source(SourceKind kind, double duration_s, std::uint64_t seed, int sample_rate) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  Rng rng = Rng(seed).split(to_string(kind));
  switch (kind) {
    case SourceKind::kHarmonicVoice: {
      const double f0 = rng.uniform(80.0, 300.0);
      return voice_from(rng, n, f0, sample_rate);
    }
    case SourceKind::kChirp: return chirp(rng, n, sample_rate);
    case SourceKind::kNoiseBurst: return noise_burst(rng, n, sample_rate);
  }
  return {};
}

double energy(const Waveform& x) {
  double e = 0.0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

double snr_db(const Waveform& signal, const Waveform& interference) {
  return 10.0 * std::log10(energy(signal) / energy(interference));
}

MixResult mix_at_snr(const Waveform& s1, const Waveform& s2, double snr) {
  if (s1.size() != s2.size()) {
    throw InputError("mix_at_snr: lengths " + std::to_string(s1.size()) + " and " + std::to_string(s2.size()));
  }
  const double e1 = energy(s1), e2 = energy(s2);
  if (e1 == 0.0 || e2 == 0.0) throw InputError("mix_at_snr: zero-energy source");
  MixResult out;
  out.scale = std::sqrt(e1 / (e2 * std::pow(10.0, snr / 10.0)));
  out.s1 = s1;
  out.s2 = s2;
  scale_in_place(out.s2, out.scale);
  out.mixture.resize(s1.size());
  for (std::size_t i = 0; i < s1.size(); ++i) out.mixture[i] = out.s1[i] + out.s2[i];
  return out;
}

Recipe parse_recipe(const std::string& name) {
  if (name == "lrs2_2mix_style") return Recipe::kLrs2Style;
  if (name == "wham_style") return Recipe::kWhamStyle;
  if (name == "libri2mix_style") return Recipe::kLibri2MixStyle;
  throw ConfigError("unknown recipe '" + name + "' (lrs2_2mix_style, wham_style, libri2mix_style)");
}

std::string to_string(Recipe recipe) {
  switch (recipe) {
    case Recipe::kLrs2Style: return "lrs2_2mix_style";
    case Recipe::kWhamStyle: return "wham_style";
    case Recipe::kLibri2MixStyle: return "libri2mix_style";
  }
  return "?";
}

RecipeSpec recipe_spec(Recipe recipe) {
  switch (recipe) {
    case Recipe::kLrs2Style: return {2.0, false};
    case Recipe::kWhamStyle: return {2.0, true};
    case Recipe::kLibri2MixStyle: return {3.0, true};
  }
  return {};
}

MixtureExample make_example(Recipe recipe, std::uint64_t seed, double duration_s, int sample_rate) {
  const RecipeSpec spec = recipe_spec(recipe);
  const double dur = duration_s > 0.0 ? duration_s : spec.duration_s;
  Rng rng(seed);
  Rng levels = rng.split("levels");
  const Waveform a = synth_source(SourceKind::kHarmonicVoice, dur, rng.split("src1").seed(), sample_rate);
  const Waveform b = synth_source(SourceKind::kHarmonicVoice, dur, rng.split("src2").seed(), sample_rate);

  MixtureExample ex;
  ex.sample_rate = sample_rate;
  ex.duration_s = dur;
  ex.seed = seed;
  Waveform s1, s2;
  if (recipe == Recipe::kLibri2MixStyle) {
    s1 = a;
    s2 = b;
    scale_in_place(s1, std::pow(10.0, (levels.uniform(-33.0, -25.0) - rms_dbfs(s1)) / 20.0));
    scale_in_place(s2, std::pow(10.0, (levels.uniform(-33.0, -25.0) - rms_dbfs(s2)) / 20.0));
    ex.snr_db = snr_db(s1, s2);
  } else {
    const double snr = levels.uniform(-5.0, 5.0);
    MixResult m = mix_at_snr(a, b, snr);
    s1 = std::move(m.s1);
    s2 = std::move(m.s2);
    ex.snr_db = snr;
  }
  if (spec.with_noise) {
    ex.noise = synth_source(SourceKind::kNoiseBurst, dur, rng.split("noise").seed(), sample_rate);
    if (recipe == Recipe::kWhamStyle) {
      Waveform speech(s1.size());
      for (std::size_t i = 0; i < s1.size(); ++i) speech[i] = s1[i] + s2[i];
      const double noise_snr = levels.uniform(-6.0, 3.0);
      scale_in_place(ex.noise, std::sqrt(energy(speech) / (energy(ex.noise) * std::pow(10.0, noise_snr / 10.0))));
      ex.snr_db = noise_snr;
    } else {
      scale_in_place(ex.noise, std::pow(10.0, (levels.uniform(-38.0, -30.0) - rms_dbfs(ex.noise)) / 20.0));
    }
  }
  auto build_mixture = [&] {
    ex.mixture.assign(s1.size(), 0.0f);
    for (std::size_t i = 0; i < s1.size(); ++i) {
      ex.mixture[i] = s1[i] + s2[i];
      if (!ex.noise.empty()) ex.mixture[i] += ex.noise[i];
    }
  };
  build_mixture();
  float peak = 0.0f;
  for (float v : ex.mixture) peak = std::max(peak, std::abs(v));
  if (peak > 1.0f) {
    ex.rescale = kSourcePeak / peak;
    scale_in_place(s1, ex.rescale);
    scale_in_place(s2, ex.rescale);
    scale_in_place(ex.noise, ex.rescale);
    build_mixture();
  }
  ex.sources = {std::move(s1), std::move(s2)};
  return ex;
}

std::vector<const ManifestRow*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows) {
    if (r.split == name) out.push_back(&r);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : path.parent_path() / p;
}

std::uint64_t example_seed(std::uint64_t root_seed, const std::string& split, std::size_t index) {
  return Rng(root_seed).split("data").split(split).split(static_cast<std::uint64_t>(index)).seed();
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("TDANET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

DatasetManifest simulate_dataset(Recipe recipe, const DatasetCounts& counts, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, const SimulateOptions& options) {
  const RecipeSpec spec = recipe_spec(recipe);
  const double dur = options.duration_s > 0.0 ? options.duration_s : spec.duration_s;
  DatasetManifest m;
  m.path = out_dir / "manifest.csv";
  m.recipe = to_string(recipe);
  m.seed = seed;
  m.comments = {"recipe=" + m.recipe, "seed=" + std::to_string(seed),
                "sample_rate=" + std::to_string(options.sample_rate), "duration_s=" + format_double(dur)};
  if (recipe == Recipe::kLibri2MixStyle) {
    m.comments.push_back("note=loudness targets are RMS dBFS approximations of LUFS");
  }
  if (recipe == Recipe::kWhamStyle) m.comments.push_back("note=snr_db is the noise SNR against the speech mixture");

  const std::pair<const char*, std::size_t> splits[] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  std::error_code ec;
  for (const auto& [name, count] : splits) {
    if (count == 0) continue;
    std::filesystem::create_directories(out_dir / name, ec);
    if (ec) throw FileError("cannot create " + (out_dir / name).string() + ": " + ec.message());
    for (std::size_t i = 0; i < count; ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%05zu", i);
      ManifestRow r;
      const std::string base = std::string(name) + "/" + stem;
      r.mixture = base + "_mix.wav";
      r.src1 = base + "_s1.wav";
      r.src2 = base + "_s2.wav";
      if (spec.with_noise) r.noise = base + "_noise.wav";
      r.split = name;
      r.seed = example_seed(seed, name, i);
      m.rows.push_back(std::move(r));
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < m.rows.size(); i = next++) {
      try {
        ManifestRow& r = m.rows[i];
        const MixtureExample ex = make_example(recipe, r.seed, dur, options.sample_rate);
        r.snr_db = ex.snr_db;
        write_wav(m.resolve(r.mixture), ex.mixture, options.sample_rate);
        write_wav(m.resolve(r.src1), ex.sources[0], options.sample_rate);
        write_wav(m.resolve(r.src2), ex.sources[1], options.sample_rate);
        if (!r.noise.empty()) write_wav(m.resolve(r.noise), ex.noise, options.sample_rate);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(options.threads ? options.threads : worker_threads(),
                                         std::max<std::size_t>(1, m.rows.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  write_manifest(m);
  return m;
}

void write_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  for (const auto& c : m.comments) out << "# " << c << "\n";
  out << kManifestHeader << "\n";
  for (const auto& r : m.rows) {
    out << r.mixture << ',' << r.src1 << ',' << r.src2 << ',' << r.noise << ',' << format_double(r.snr_db) << ','
        << r.split << ',' << r.seed << "\n";
  }
  std::ofstream f(m.path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot write " + m.path.string());
  f << out.str();
  if (!f) throw FileError("write failed for " + m.path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.path = path;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string c = line.substr(1);
      if (!c.empty() && c[0] == ' ') c.erase(0, 1);
      if (c.rfind("recipe=", 0) == 0) m.recipe = c.substr(7);
      if (c.rfind("seed=", 0) == 0) m.seed = std::stoull(c.substr(5));
      m.comments.push_back(std::move(c));
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (!header) {
      if (line != kManifestHeader) throw FormatError(where + "expected header '" + kManifestHeader + "'");
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 7) throw FormatError(where + "expected 7 fields, got " + std::to_string(f.size()));
    ManifestRow r;
    r.mixture = f[0];
    r.src1 = f[1];
    r.src2 = f[2];
    r.noise = f[3];
    r.split = f[5];
    if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw FormatError(where + "unknown split '" + r.split + "'");
    }
    try {
      r.snr_db = std::stod(f[4]);
      r.seed = std::stoull(f[6]);
    } catch (const std::exception&) {
      throw FormatError(where + "bad numeric field");
    }
    m.rows.push_back(std::move(r));
  }
  if (!header) throw FormatError(path.string() + ": missing header line");
  return m;
}

MixtureExample load_example(const DatasetManifest& m, const ManifestRow& r, double max_duration_s) {
  MixtureExample ex;
  const WavData mix = read_wav(m.resolve(r.mixture));
  ex.sample_rate = mix.sample_rate;
  ex.mixture = mix.samples;
  ex.sources.push_back(read_wav(m.resolve(r.src1)).samples);
  ex.sources.push_back(read_wav(m.resolve(r.src2)).samples);
  if (!r.noise.empty()) ex.noise = read_wav(m.resolve(r.noise)).samples;
  for (const auto& s : ex.sources) {
    if (s.size() != ex.mixture.size()) throw InputError("source length differs from mixture in " + r.mixture);
  }
  if (max_duration_s > 0.0) {
    const auto n = static_cast<std::size_t>(std::llround(max_duration_s * ex.sample_rate));
    auto cut = [n](Waveform& x) {
      if (x.size() > n) x.resize(n);
    };
    cut(ex.mixture);
    for (auto& s : ex.sources) cut(s);
    cut(ex.noise);
  }
  ex.duration_s = static_cast<double>(ex.mixture.size()) / ex.sample_rate;
  ex.snr_db = r.snr_db;
  ex.seed = r.seed;
  return ex;
}

}  // namespace tdanet
