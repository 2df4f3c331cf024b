#include "rpeflow/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rpeflow/rng.hpp"

namespace rpeflow {

void EventStream::validate() const {
  if (t1 <= t0) throw ConfigError("event stream: t1 must exceed t0");
  double prev = t0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height) {
      throw DataError("event stream: event " + std::to_string(i) +
                      " outside the sensor area");
    }
    if (e.t < prev || e.t > t1) {
      throw DataError("event stream: event " + std::to_string(i) +
                      " breaks timestamp ordering");
    }
    if (e.p != 1 && e.p != -1) {
      throw DataError("event stream: event " + std::to_string(i) +
                      " has invalid polarity");
    }
    prev = e.t;
  }
}

template <typename T>
Tensor<T> voxelize(const EventStream& stream, std::size_t bins,
                   std::size_t height, std::size_t width,
                   const VoxelizeOptions& options) {
  if (bins == 0) throw ConfigError("voxelize: bin count must be positive");
  if (stream.t1 <= stream.t0) {
    throw ConfigError("voxelize: stream interval is empty");
  }
  std::vector<T> grid(height * width * bins, T(0));
  const double span = stream.t1 - stream.t0;
  for (const Event& e : stream.events) {
    if (e.x >= width || e.y >= height) {
      throw DataError("voxelize: event outside the target grid");
    }
    const double tstar =
        (e.t - stream.t0) / span * static_cast<double>(bins - 1);
    const double b0f = std::floor(tstar);
    const std::size_t b0 = static_cast<std::size_t>(b0f);
    const double w1 = tstar - b0f;
    const double w0 = 1.0 - w1;
    const std::size_t base = (static_cast<std::size_t>(e.y) * width +
                              static_cast<std::size_t>(e.x)) *
                             bins;
    const T sign = static_cast<T>(e.p);
    if (w0 > 0.0) grid[base + b0] += sign * static_cast<T>(w0);
    if (w1 > 0.0 && b0 + 1 < bins) {
      grid[base + b0 + 1] += sign * static_cast<T>(w1);
    }
  }
  if (options.normalize) {
    std::vector<T> mags(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      mags[i] = std::fabs(static_cast<double>(grid[i]));
    }
    std::sort(mags.begin(), mags.end());
    // nearest-rank 98th percentile
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.98 * static_cast<double>(mags.size())));
    const T p98 = mags[rank == 0 ? 0 : rank - 1];
    if (p98 > T(0)) {
      for (T& v : grid) v /= p98;
    }
  }
  return Tensor<T>::from({height, width, bins}, std::move(grid));
}

EventStream simulate_events(const std::vector<std::vector<double>>& frames,
                            std::size_t height, std::size_t width, double t0,
                            double t1, const SimulateOptions& options) {
  if (frames.size() < 2) {
    throw ConfigError("simulate_events: need at least two frames");
  }
  if (options.contrast_threshold <= 0) {
    throw ConfigError("simulate_events: contrast threshold must be positive");
  }
  if (t1 <= t0) throw ConfigError("simulate_events: empty time interval");
  const std::size_t npx = height * width;
  for (const auto& f : frames) {
    if (f.size() != npx) {
      throw DataError("simulate_events: frame size mismatch");
    }
    for (double v : f) {
      if (!std::isfinite(v)) {
        throw DataError("simulate_events: non-finite frame value");
      }
    }
  }
  const std::size_t steps = frames.size() - 1;
  const double dt = (t1 - t0) / static_cast<double>(steps);

  std::vector<double> thresholds(npx, options.contrast_threshold);
  if (options.threshold_noise > 0) {
    Rng rng(options.noise_seed);
    for (double& c : thresholds) {
      c = std::max(0.01, c * (1.0 + options.threshold_noise * rng.normal()));
    }
  }

  EventStream stream;
  stream.t0 = t0;
  stream.t1 = t1;
  stream.width = width;
  stream.height = height;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t p = y * width + x;
      const double c = thresholds[p];
      double ref = std::log(frames[0][p] + options.log_eps);
      for (std::size_t s = 0; s < steps; ++s) {
        const double la = std::log(frames[s][p] + options.log_eps);
        const double lb = std::log(frames[s + 1][p] + options.log_eps);
        if (lb == la) continue;
        const double pol = lb > la ? 1.0 : -1.0;
        const double ta = t0 + dt * static_cast<double>(s);
        double cross = ref + pol * c;
        while ((pol > 0 && cross > la && cross <= lb) ||
               (pol < 0 && cross < la && cross >= lb)) {
          const double te = ta + (cross - la) / (lb - la) * dt;
          stream.events.push_back(Event{static_cast<std::uint16_t>(x),
                                        static_cast<std::uint16_t>(y), te,
                                        static_cast<std::int8_t>(pol)});
          ref = cross;
          cross += pol * c;
        }
      }
    }
  }
  std::stable_sort(
      stream.events.begin(), stream.events.end(),
      [](const Event& a, const Event& b) { return a.t < b.t; });
  return stream;
}

namespace {

void put_u16(std::vector<char>& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_f64(std::vector<char>& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordBytes = 13;

}  // namespace

void save_events(const std::string& path, const EventStream& stream) {
  std::vector<char> buf;
  buf.reserve(kHeaderBytes + kRecordBytes * stream.events.size());
  buf.push_back('E');
  buf.push_back('V');
  buf.push_back('T');
  buf.push_back('1');
  put_u16(buf, static_cast<std::uint16_t>(stream.width));
  put_u16(buf, static_cast<std::uint16_t>(stream.height));
  put_f64(buf, 0.0);
  for (const Event& e : stream.events) {
    put_u16(buf, e.x);
    put_u16(buf, e.y);
    put_f64(buf, e.t);
    buf.push_back(static_cast<char>(e.p));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("short write to " + path);
}

EventStream load_events(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot read " + path);
  const std::size_t size = static_cast<std::size_t>(is.tellg());
  is.seekg(0);
  if (size < kHeaderBytes || (size - kHeaderBytes) % kRecordBytes != 0) {
    throw DataError(path + ": malformed event file length");
  }
  std::vector<unsigned char> buf(size);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(size));
  if (!is) throw IoError("short read from " + path);
  if (buf[0] != 'E' || buf[1] != 'V' || buf[2] != 'T' || buf[3] != '1') {
    throw DataError(path + ": bad event file magic");
  }
  EventStream stream;
  stream.width = get_u16(buf.data() + 4);
  stream.height = get_u16(buf.data() + 6);
  const std::size_t count = (size - kHeaderBytes) / kRecordBytes;
  stream.events.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* rec = buf.data() + kHeaderBytes + i * kRecordBytes;
    stream.events[i].x = get_u16(rec);
    stream.events[i].y = get_u16(rec + 2);
    stream.events[i].t = get_f64(rec + 4);
    stream.events[i].p = static_cast<std::int8_t>(rec[12]);
  }
  return stream;
}

template Tensor<float> voxelize<float>(const EventStream&, std::size_t,
                                       std::size_t, std::size_t,
                                       const VoxelizeOptions&);
template Tensor<double> voxelize<double>(const EventStream&, std::size_t,
                                         std::size_t, std::size_t,
                                         const VoxelizeOptions&);

}  // namespace rpeflow
