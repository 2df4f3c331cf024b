#include "rpeflow/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace rpeflow {

namespace {

template <typename Out, typename In>
void append_as(std::vector<char>& blob, const In* src, std::size_t n) {
  const std::size_t start = blob.size();
  blob.resize(start + n * sizeof(Out));
  Out* dst = reinterpret_cast<Out*>(blob.data() + start);
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<Out>(src[i]);
}

void write_file(const std::string& path, const char* data, std::size_t n) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os.write(data, static_cast<std::streamsize>(n));
  if (!os) throw IoError("short write to " + path);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot read " + path);
  const auto size = is.tellg();
  is.seekg(0);
  std::vector<char> data(static_cast<std::size_t>(size));
  is.read(data.data(), size);
  if (!is) throw IoError("short read from " + path);
  return data;
}

}  // namespace

template <typename T>
void save_checkpoint(
    const std::string& prefix,
    const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
    const std::string& dtype, const nlohmann::json& extras) {
  if (dtype != "f32" && dtype != "f64") {
    throw ContractError("checkpoint dtype must be f32 or f64, got " + dtype);
  }
  const std::size_t elem = dtype == "f32" ? 4 : 8;
  std::vector<char> blob;
  nlohmann::json params = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    params.push_back(entry);
    const auto v = t.values();
    if (dtype == "f32") {
      append_as<float>(blob, v.data(), v.size());
    } else {
      append_as<double>(blob, v.data(), v.size());
    }
    offset += v.size() * elem;
  }
  nlohmann::json manifest;
  manifest["format"] = "rpeflow-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = dtype;
  manifest["blob"] = prefix.substr(prefix.find_last_of('/') + 1) + ".bin";
  manifest["params"] = params;
  if (!extras.empty()) manifest["extras"] = extras;
  const std::string text = manifest.dump(2) + "\n";
  write_file(prefix + ".json", text.data(), text.size());
  write_file(prefix + ".bin", blob.data(), blob.size());
}

nlohmann::json read_manifest(const std::string& prefix) {
  const auto raw = read_file(prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(raw.begin(), raw.end());
  if (!manifest.contains("format") ||
      manifest["format"] != "rpeflow-checkpoint") {
    throw ContractError(prefix + ".json is not a checkpoint manifest");
  }
  return manifest;
}

template <typename T>
nlohmann::json load_checkpoint(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor<T>>>& tensors) {
  nlohmann::json manifest = read_manifest(prefix);
  const std::string dtype = manifest.at("dtype").get<std::string>();
  const std::size_t elem = dtype == "f32" ? 4 : 8;
  const auto blob = read_file(prefix + ".bin");

  std::map<std::string, nlohmann::json> by_name;
  for (const auto& entry : manifest.at("params")) {
    by_name[entry.at("name").get<std::string>()] = entry;
  }
  for (auto& [name, t] : tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ContractError("checkpoint " + prefix + " missing parameter " +
                          name);
    }
    const Shape shape = it->second.at("shape").template get<Shape>();
    if (!same_shape(shape, t.shape())) {
      throw ContractError("checkpoint shape mismatch for " + name + ": file " +
                          shape_str(shape) + " vs model " +
                          shape_str(t.shape()));
    }
    const std::uint64_t offset = it->second.at("offset").template get<std::uint64_t>();
    const std::size_t bytes = t.size() * elem;
    if (offset + bytes > blob.size()) {
      throw ContractError("checkpoint blob too small for " + name);
    }
    auto dst = t.raw_values();
    if (dtype == "f32") {
      const float* src = reinterpret_cast<const float*>(blob.data() + offset);
      for (std::size_t i = 0; i < t.size(); ++i) {
        dst[i] = static_cast<T>(src[i]);
      }
    } else {
      const double* src =
          reinterpret_cast<const double*>(blob.data() + offset);
      for (std::size_t i = 0; i < t.size(); ++i) {
        dst[i] = static_cast<T>(src[i]);
      }
    }
  }
  return manifest;
}

template void save_checkpoint<float>(
    const std::string&,
    const std::vector<std::pair<std::string, Tensor<float>>>&,
    const std::string&, const nlohmann::json&);
template void save_checkpoint<double>(
    const std::string&,
    const std::vector<std::pair<std::string, Tensor<double>>>&,
    const std::string&, const nlohmann::json&);
template nlohmann::json load_checkpoint<float>(
    const std::string&, std::vector<std::pair<std::string, Tensor<float>>>&);
template nlohmann::json load_checkpoint<double>(
    const std::string&, std::vector<std::pair<std::string, Tensor<double>>>&);

}  // namespace rpeflow
