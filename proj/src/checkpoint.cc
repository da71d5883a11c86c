#include "tdanet/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tdanet/error.h"

namespace tdanet {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::filesystem::path binary_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p += ".bin";
  return p;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const nlohmann::json& meta) {
  nlohmann::json j;
  j["format"] = "tdanet-tensors";
  j["version"] = 1;
  j["precision"] = "float32";
  j["endianness"] = "little";
  j["binary"] = binary_path(path).filename().string();
  j["meta"] = meta;
  nlohmann::json list = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    list.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset * 4}, {"count", t.value.size()}});
    offset += t.value.size();
  }
  j["tensors"] = list;
  j["bytes"] = offset * 4;

  std::ofstream bin(binary_path(path), std::ios::binary | std::ios::trunc);
  if (!bin) throw FileError("cannot write " + binary_path(path).string());
  for (const auto& t : tensors) {
    bin.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 4));
  }
  if (!bin) throw FileError("write failed for " + binary_path(path).string());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw FileError("write failed for " + path.string());
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::filesystem::path bin_path = binary_path(path);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw FileError("cannot open " + bin_path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::vector<NamedTensor> out;
  try {
    if (j.at("format") != "tdanet-tensors" || j.at("precision") != "float32") {
      throw FormatError(path.string() + ": not a float32 tdanet tensor file");
    }
    if (j.at("bytes").get<std::size_t>() != bytes.size()) {
      throw FormatError(bin_path.string() + ": size " + std::to_string(bytes.size()) + " does not match manifest");
    }
    for (const auto& t : j.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (shape_numel(shape) != count || offset + count * 4 > bytes.size()) {
        throw FormatError(path.string() + ": bad extent for tensor " + t.at("name").get<std::string>());
      }
      Tensor<float> value(shape);
      std::memcpy(value.data(), bytes.data() + offset, count * 4);
      out.push_back({t.at("name").get<std::string>(), std::move(value)});
    }
    if (meta) *meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ParamStore<float>& params,
                     const nlohmann::json& extra) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : params) tensors.push_back({p.name, p.value});
  nlohmann::json meta;
  meta["kind"] = "model";
  meta["config"] = config.to_json();
  meta["config_hash"] = config.hash();
  meta["seed"] = params.seed();
  meta["extra"] = extra;
  write_tensor_file(path, tensors, meta);
}

void save_checkpoint(const std::filesystem::path& path, const TDANet<float>& model, const nlohmann::json& extra) {
  save_checkpoint(path, model.config(), model.params(), extra);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors = read_tensor_file(path, &meta);
  Checkpoint ck;
  try {
    if (meta.value("kind", "") != "model") throw FormatError(path.string() + ": not a model checkpoint");
    ck.config = ModelConfig::from_json(meta.at("config"));
    ck.params.set_seed(meta.at("seed").get<std::uint64_t>());
    ck.extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  for (auto& t : tensors) ck.params.add(std::move(t.name), std::move(t.value));
  return ck;
}

TDANet<float> load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return TDANet<float>(ck.config, std::move(ck.params));
}

}  // namespace tdanet
