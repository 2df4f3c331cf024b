#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rpeflow/tensor.hpp"

namespace rpeflow {

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  double t = 0.0;       // seconds, within the stream interval
  std::int8_t p = 1;    // polarity, +1 or -1
};

struct EventStream {
  std::vector<Event> events;  // sorted by t ascending
  double t0 = 0.0;
  double t1 = 1.0;
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t count() const { return events.size(); }
  void validate() const;
};

struct VoxelizeOptions {
  bool normalize = true;  // divide by the 98th percentile of |EV|
};

// Signed bilinear temporal splatting of a stream into H x W x B bins.
// Each event deposits exactly unit mass (signed by polarity) across the two
// adjacent bins of its normalized timestamp.
template <typename T>
Tensor<T> voxelize(const EventStream& stream, std::size_t bins,
                   std::size_t height, std::size_t width,
                   const VoxelizeOptions& options = {});

struct SimulateOptions {
  double contrast_threshold = 0.15;
  double log_eps = 1e-3;
  // Optional per-pixel threshold jitter (stddev as a fraction of C); zero
  // keeps the simulator fully deterministic.
  double threshold_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

// Brightness-threshold event simulation over S+1 intensity frames in [0,1].
// Log intensities are linearly interpolated between consecutive frames and
// one event fires at every crossing of a multiple of C from the pixel's
// last-event reference level.
EventStream simulate_events(const std::vector<std::vector<double>>& frames,
                            std::size_t height, std::size_t width, double t0,
                            double t1, const SimulateOptions& options = {});

// Binary event file: 16-byte header (magic "EVT1", u16 W, u16 H,
// f64 reserved = 0) followed by 13-byte packed little-endian records
// (u16 x, u16 y, f64 t, i8 polarity).
void save_events(const std::string& path, const EventStream& stream);
EventStream load_events(const std::string& path);

}  // namespace rpeflow
