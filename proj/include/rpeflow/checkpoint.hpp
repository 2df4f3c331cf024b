#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rpeflow/tensor.hpp"

namespace rpeflow {

// Weight checkpoint: `<prefix>.json` manifest listing parameter names,
// shapes and byte offsets into `<prefix>.bin`, a single raw little-endian
// float blob. dtype is "f32" (default, interoperable) or "f64" (used by
// bit-exact training replay).
template <typename T>
void save_checkpoint(const std::string& prefix,
                     const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
                     const std::string& dtype = "f32",
                     const nlohmann::json& extras = nlohmann::json::object());

// Loads values into the given tensors by name; every tensor in `tensors`
// must be present in the manifest with a matching shape.
template <typename T>
nlohmann::json load_checkpoint(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor<T>>>& tensors);

// Reads the manifest without touching the blob (config/extras inspection).
nlohmann::json read_manifest(const std::string& prefix);

}  // namespace rpeflow
