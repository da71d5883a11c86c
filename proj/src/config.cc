#include "tdanet/config.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "tdanet/error.h"
#include "tdanet/rng.h"

namespace tdanet {

int ModelConfig::win_samples() const {
  return static_cast<int>(std::lround(win_ms * sample_rate / 1000.0));
}

int ModelConfig::stride_samples() const {
  return stride_override > 0 ? stride_override : win_samples() / 4;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  const int L = win_samples();
  if (L <= 0 || L % 4 != 0) fail("window length L=" + std::to_string(L) + " samples must be a positive multiple of 4");
  if (stride_samples() <= 0) fail("stride must be positive");
  if (channels <= 0 || channels % 2 != 0) fail("channels N must be positive and even");
  if (bottleneck <= 0) fail("bottleneck width must be positive");
  if (depth < 1) fail("depth S must be >= 1");
  if (depth > 12) fail("depth S must be <= 12");
  if (unfolds < 1) fail("unfolds B must be >= 1");
  if (speakers < 2) fail("speakers C must be >= 2");
  if (heads < 1 || channels % heads != 0) fail("channels must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"sample_rate", sample_rate},
                        {"win_ms", win_ms},
                        {"stride_override", stride_override},
                        {"channels", channels},
                        {"bottleneck", bottleneck},
                        {"depth", depth},
                        {"unfolds", unfolds},
                        {"heads", heads},
                        {"speakers", speakers},
                        {"dropout", dropout},
                        {"use_ga", use_ga},
                        {"ga_topdown", ga_topdown},
                        {"use_transformer_layer", use_transformer_layer},
                        {"use_mhsa", use_mhsa},
                        {"use_ffn", use_ffn},
                        {"use_la", use_la},
                        {"ga_input", ga_input == GaInput::kFused ? "fused" : "top"},
                        {"fusion", fusion == Fusion::kSum ? "sum" : "concat"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "sample_rate") c.sample_rate = v.get<int>();
      else if (k == "win_ms") c.win_ms = v.get<double>();
      else if (k == "stride_override") c.stride_override = v.get<int>();
      else if (k == "channels") c.channels = v.get<int>();
      else if (k == "bottleneck") c.bottleneck = v.get<int>();
      else if (k == "depth") c.depth = v.get<int>();
      else if (k == "unfolds") c.unfolds = v.get<int>();
      else if (k == "heads") c.heads = v.get<int>();
      else if (k == "speakers") c.speakers = v.get<int>();
      else if (k == "dropout") c.dropout = v.get<double>();
      else if (k == "use_ga") c.use_ga = v.get<bool>();
      else if (k == "ga_topdown") c.ga_topdown = v.get<bool>();
      else if (k == "use_transformer_layer") c.use_transformer_layer = v.get<bool>();
      else if (k == "use_mhsa") c.use_mhsa = v.get<bool>();
      else if (k == "use_ffn") c.use_ffn = v.get<bool>();
      else if (k == "use_la") c.use_la = v.get<bool>();
      else if (k == "ga_input") {
        const auto s = v.get<std::string>();
        if (s != "fused" && s != "top") throw ConfigError("model config: ga_input must be fused|top");
        c.ga_input = s == "fused" ? GaInput::kFused : GaInput::kTop;
      } else if (k == "fusion") {
        const auto s = v.get<std::string>();
        if (s != "sum" && s != "concat") throw ConfigError("model config: fusion must be sum|concat");
        c.fusion = s == "sum" ? Fusion::kSum : Fusion::kConcat;
      } else {
        throw ConfigError("model config: unknown key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ModelConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_string(to_json().dump())));
  return buf;
}

ModelConfig ModelConfig::base() { return ModelConfig{}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.win_ms = 2.0;
  return c;
}

ModelConfig ModelConfig::with_ablations(const std::string& list) const {
  ModelConfig c = *this;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "no_ga") c.use_ga = false;
    else if (item == "no_la") c.use_la = false;
    else if (item == "no_tl") c.use_transformer_layer = false;
    else if (item == "no_mhsa") c.use_mhsa = false;
    else if (item == "no_ffn") c.use_ffn = false;
    else if (item == "no_topdown") c.ga_topdown = false;
    else if (item == "top_f") c.ga_input = GaInput::kTop;
    else if (item == "concat") c.fusion = Fusion::kConcat;
    else throw ConfigError("unknown ablation '" + item + "'");
  }
  return c;
}

}  // namespace tdanet
