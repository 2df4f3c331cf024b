#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rpeflow/events.hpp"
#include "rpeflow/geometry.hpp"

namespace rpeflow {

enum class SpeedClass { Slow, Fast };
enum class TextureKind { Linear, Sinusoid };

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t object_count = 2;  // 1..5
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t substeps = 16;       // S; S+1 frames are rendered
  std::size_t target_points = 512;  // cap on points per cloud
  SpeedClass speed = SpeedClass::Slow;
  TextureKind texture = TextureKind::Sinusoid;
  // Restricts scenes to fronto-parallel patches with view-axis rotations,
  // for which bilinear warping by the true flow is exact on linear textures.
  bool planar_exact = false;
  double focal = 0.0;  // 0 picks the image width
  double contrast_threshold = 0.15;
  // Diagnostic knobs: motion_scale multiplies every sampled motion (0 gives
  // a static scene); the overrides pin all objects to one rigid motion.
  double motion_scale = 1.0;
  std::optional<std::array<double, 3>> override_translation;
  std::optional<double> override_rotation;

  void validate() const;
  CameraIntrinsics camera() const;
};

struct Sample {
  std::size_t width = 0;
  std::size_t height = 0;
  CameraIntrinsics cam;
  std::size_t substeps = 0;
  std::uint64_t seed = 0;

  std::vector<double> rgb0, rgb1;        // H*W intensity in [0,1]
  std::vector<double> pc0, pc1;          // N*3 and M*3 camera-frame points
  std::vector<double> sceneflow_gt;      // N*3, per pc0 point
  std::vector<double> opticalflow_gt;    // H*W*2 pixels
  std::vector<std::uint8_t> occ2d;       // H*W, 1 = occluded
  std::vector<std::uint8_t> occ3d;       // N
  std::vector<std::uint8_t> valid;       // H*W
  EventStream events;

  std::size_t n_points() const { return pc0.size() / 3; }
  std::size_t n_points2() const { return pc1.size() / 3; }
};

// Renders S+1 substep frames by per-pixel ray casting with z-ordering,
// simulates the event stream, and derives analytic flow ground truth with
// occlusion masks. Deterministic given the spec.
Sample generate(const SceneSpec& spec);

struct DatasetManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::uint64_t seed = 0;
};

// Writes `count` samples under out_dir/sample_XXXX plus manifest.json.
// Sample i uses seed base.seed + i; with mixed_speed every odd sample is
// fast-motion regardless of base.speed.
DatasetManifest make_dataset(std::size_t count, double train_fraction,
                             const std::string& out_dir, const SceneSpec& base,
                             bool mixed_speed = false);

void save_sample(const std::string& dir, const Sample& sample);
Sample load_sample(const std::string& dir);

// Random unstructured sample for numeric probing (gradient checks). Not a
// physical scene: fields are seeded noise with valid ranges and shapes.
Sample probe_sample(std::uint64_t seed, std::size_t width, std::size_t height,
                    std::size_t points);

DatasetManifest load_manifest(const std::string& dataset_dir);

}  // namespace rpeflow
