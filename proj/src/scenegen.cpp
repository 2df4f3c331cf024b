#include "rpeflow/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "rpeflow/rng.hpp"

namespace rpeflow {

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(Vec3 v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Vec3 apply_transposed(Vec3 v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
            m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }
};

// Rodrigues rotation about a unit axis.
Mat3 axis_angle(Vec3 axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis.x, y = axis.y, z = axis.z;
  Mat3 r;
  r.m[0] = t * x * x + c;
  r.m[1] = t * x * y - s * z;
  r.m[2] = t * x * z + s * y;
  r.m[3] = t * x * y + s * z;
  r.m[4] = t * y * y + c;
  r.m[5] = t * y * z - s * x;
  r.m[6] = t * x * z - s * y;
  r.m[7] = t * y * z + s * x;
  r.m[8] = t * z * z + c;
  return r;
}

struct Texture {
  TextureKind kind = TextureKind::Linear;
  double base = 0.5;
  Vec3 gradient;      // per local unit
  Vec3 wave;          // sinusoid frequency vector
  double amplitude = 0.0;
  double phase = 0.0;

  double value(Vec3 local) const {
    double v = base + dot(gradient, local);
    if (kind == TextureKind::Sinusoid) {
      v += amplitude *
           std::sin(2.0 * std::numbers::pi * dot(wave, local) + phase);
    }
    return std::clamp(v, 0.02, 0.98);
  }
};

enum class SurfaceKind { BackgroundPlane, Patch, Sphere };

struct Surface {
  SurfaceKind kind = SurfaceKind::Patch;
  Vec3 center;          // pose at t = 0
  double half_x = 0.2;  // patch extents or sphere radius
  double half_y = 0.2;
  Vec3 rot_axis{0, 0, 1};
  double rot_angle = 0.0;  // total rotation over the frame interval
  Vec3 translation;        // total translation over the frame interval
  Texture texture;

  Mat3 rotation_at(double s) const { return axis_angle(rot_axis, rot_angle * s); }
  Vec3 center_at(double s) const { return center + translation * s; }

  // Rigid motion of a local point from pose 0 to pose s.
  Vec3 world_at(Vec3 local, double s) const {
    return rotation_at(s).apply(local) + center_at(s);
  }
};

struct Hit {
  bool valid = false;
  double depth = 0.0;  // camera z of the hit (ray parameter)
  int surface = -1;    // 0 = background, 1.. = objects
  Vec3 local;          // hit point in the surface's local frame
};

// Intersects the pixel ray (origin 0, direction d with d.z = 1) with one
// surface at motion fraction s.
Hit intersect(const Surface& surf, int surface_id, Vec3 d, double s) {
  Hit hit;
  const Mat3 rot = surf.rotation_at(s);
  const Vec3 c = surf.center_at(s);
  const Vec3 o_local = rot.apply_transposed(Vec3{0, 0, 0} - c);
  const Vec3 d_local = rot.apply_transposed(d);
  if (surf.kind == SurfaceKind::Sphere) {
    const double a = dot(d_local, d_local);
    const double b = 2.0 * dot(o_local, d_local);
    const double cc = dot(o_local, o_local) - surf.half_x * surf.half_x;
    const double disc = b * b - 4 * a * cc;
    if (disc < 0) return hit;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / (2 * a);
    if (t <= 1e-6) t = (-b + sq) / (2 * a);
    if (t <= 1e-6) return hit;
    hit.valid = true;
    hit.depth = t;  // d.z == 1, so the ray parameter is the camera depth
    hit.surface = surface_id;
    hit.local = o_local + d_local * t;
    return hit;
  }
  // plane z_local = 0 (patches and the background plane)
  if (std::fabs(d_local.z) < 1e-12) return hit;
  const double t = -o_local.z / d_local.z;
  if (t <= 1e-6) return hit;
  const Vec3 p = o_local + d_local * t;
  if (surf.kind == SurfaceKind::Patch) {
    if (std::fabs(p.x) > surf.half_x || std::fabs(p.y) > surf.half_y) {
      return hit;
    }
  }
  hit.valid = true;
  hit.depth = t;
  hit.surface = surface_id;
  hit.local = p;
  return hit;
}

struct RenderBuffers {
  std::vector<double> intensity;  // H*W
  std::vector<double> depth;      // H*W
  std::vector<int> id;            // H*W
  std::vector<Vec3> local;        // H*W local hit coordinates
};

RenderBuffers render(const std::vector<Surface>& surfaces, double s,
                     const CameraIntrinsics& cam) {
  const std::size_t h = cam.height, w = cam.width;
  RenderBuffers buf;
  buf.intensity.assign(h * w, 0.0);
  buf.depth.assign(h * w, 0.0);
  buf.id.assign(h * w, -1);
  buf.local.assign(h * w, Vec3{});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Vec3 d{(static_cast<double>(x) - cam.cx) / cam.f,
                   (static_cast<double>(y) - cam.cy) / cam.f, 1.0};
      Hit best;
      for (std::size_t k = 0; k < surfaces.size(); ++k) {
        const Hit hit = intersect(surfaces[k], static_cast<int>(k), d, s);
        if (hit.valid && (!best.valid || hit.depth < best.depth)) {
          best = hit;
        }
      }
      const std::size_t p = y * w + x;
      if (best.valid) {
        buf.intensity[p] = surfaces[best.surface].texture.value(best.local);
        buf.depth[p] = best.depth;
        buf.id[p] = best.surface;
        buf.local[p] = best.local;
      }
    }
  }
  return buf;
}

Vec3 random_unit(Rng& rng) {
  while (true) {
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double n = norm(v);
    if (n > 1e-3 && n <= 1.0) return v * (1.0 / n);
  }
}

struct MotionRanges {
  double rot_lo, rot_hi;    // radians
  double trans_lo, trans_hi;  // fraction of depth
};

MotionRanges ranges_for(SpeedClass speed) {
  constexpr double deg = std::numbers::pi / 180.0;
  if (speed == SpeedClass::Fast) {
    return {8.0 * deg, 15.0 * deg, 0.06, 0.12};
  }
  return {1.0 * deg, 4.0 * deg, 0.02, 0.05};
}

std::vector<Surface> build_scene(const SceneSpec& spec, Rng& rng) {
  const CameraIntrinsics cam = spec.camera();
  std::vector<Surface> surfaces;

  Surface bg;
  bg.kind = SurfaceKind::BackgroundPlane;
  bg.center = {0, 0, 4.0};
  bg.texture.kind = spec.texture;
  bg.texture.base = rng.uniform(0.35, 0.65);
  {
    // keep the linear part inside [0.02, 0.98] over the visible extent
    const double span = 4.0 * static_cast<double>(cam.width) / cam.f * 4.0;
    const double g = rng.uniform(0.1, 0.3) / span;
    const double ang = rng.uniform(0, 2 * std::numbers::pi);
    bg.texture.gradient = {g * std::cos(ang), g * std::sin(ang), 0};
    if (spec.texture == TextureKind::Sinusoid) {
      bg.texture.amplitude = rng.uniform(0.08, 0.2);
      const double period = rng.uniform(6.0, 14.0);  // pixels at bg depth
      const double freq = cam.f / (period * bg.center.z);
      const double wang = rng.uniform(0, 2 * std::numbers::pi);
      bg.texture.wave = {freq * std::cos(wang), freq * std::sin(wang), 0};
      bg.texture.phase = rng.uniform(0, 2 * std::numbers::pi);
    }
  }
  surfaces.push_back(bg);

  const MotionRanges mr = ranges_for(spec.speed);
  // Worst-case motion over both speed classes; using it for the frustum
  // check keeps pose acceptance (and hence the RNG stream) identical across
  // classes for one seed.
  const MotionRanges mr_max = ranges_for(SpeedClass::Fast);
  const double scale_max = std::max(1.0, spec.motion_scale);
  const double min_hw = static_cast<double>(std::min(cam.width, cam.height));
  for (std::size_t k = 0; k < spec.object_count; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 10) {
        throw ConfigError("scenegen: object " + std::to_string(k) +
                          " found no pose inside the frustum");
      }
      Surface obj;
      const bool sphere = !spec.planar_exact && (k % 2 == 1);
      obj.kind = sphere ? SurfaceKind::Sphere : SurfaceKind::Patch;
      const double z = rng.uniform(1.6, 3.0);
      // place the center so the object projects inside the image
      const double margin = 0.30;
      const double img_x = rng.uniform(margin, 1.0 - margin);
      const double img_y = rng.uniform(margin, 1.0 - margin);
      obj.center = {(img_x * cam.width - cam.cx) * z / cam.f,
                    (img_y * cam.height - cam.cy) * z / cam.f, z};
      const double px_size = rng.uniform(0.08, 0.13) * min_hw;
      obj.half_x = px_size * z / cam.f;
      obj.half_y = sphere ? obj.half_x
                          : rng.uniform(0.8, 1.25) * obj.half_x;

      obj.texture.kind = spec.texture;
      obj.texture.base = rng.uniform(0.3, 0.7);
      const double span = 2.0 * std::max(obj.half_x, obj.half_y);
      const double g = rng.uniform(0.15, 0.27) / span;
      const double ang = rng.uniform(0, 2 * std::numbers::pi);
      obj.texture.gradient = {g * std::cos(ang), g * std::sin(ang),
                              sphere ? g * 0.5 : 0.0};
      if (spec.texture == TextureKind::Sinusoid) {
        obj.texture.amplitude = rng.uniform(0.1, 0.22);
        const double period = rng.uniform(5.0, 10.0);
        const double freq = cam.f / (period * z);
        const double wang = rng.uniform(0, 2 * std::numbers::pi);
        obj.texture.wave = {freq * std::cos(wang), freq * std::sin(wang), 0};
        obj.texture.phase = rng.uniform(0, 2 * std::numbers::pi);
      }

      obj.rot_axis = spec.planar_exact ? Vec3{0, 0, 1} : random_unit(rng);
      const double rot_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      obj.rot_angle =
          rot_sign * rng.uniform(mr.rot_lo, mr.rot_hi) * spec.motion_scale;
      const Vec3 dir = random_unit(rng);
      obj.translation = dir * (rng.uniform(mr.trans_lo, mr.trans_hi) * z *
                               spec.motion_scale);
      if (spec.override_rotation) {
        obj.rot_angle = *spec.override_rotation;
      }
      if (spec.override_translation) {
        obj.translation = {(*spec.override_translation)[0],
                           (*spec.override_translation)[1],
                           (*spec.override_translation)[2]};
      }

      // The whole motion must keep the object inside the frustum and in
      // front of the camera; checked against the worst-case magnitudes so
      // acceptance does not depend on the speed class.
      bool ok = true;
      const double radius = 1.5 * std::max(obj.half_x, obj.half_y);
      const Vec3 worst = dir * (mr_max.trans_hi * z * scale_max);
      for (double s : {0.0, 0.5, 1.0}) {
        const Vec3 c = obj.center + worst * s;
        if (c.z - radius < 0.4) ok = false;
        const double u = cam.f * c.x / c.z + cam.cx;
        const double v = cam.f * c.y / c.z + cam.cy;
        const double pr = cam.f * radius / c.z;
        if (u - pr < 1 || u + pr > cam.width - 2 || v - pr < 1 ||
            v + pr > cam.height - 2) {
          ok = false;
        }
      }
      if (!ok) continue;
      surfaces.push_back(obj);
      break;
    }
  }
  return surfaces;
}

void subsample_indices(std::vector<std::size_t>& idx, std::size_t target,
                       Rng& rng) {
  if (idx.size() <= target) return;
  // seeded Fisher-Yates prefix, then back to raster order
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(target);
  std::sort(idx.begin(), idx.end());
}

}  // namespace

void SceneSpec::validate() const {
  if (object_count < 1 || object_count > 5) {
    throw ConfigError("scene spec: object count must be within [1, 5]");
  }
  if (width < 8 || height < 8) {
    throw ConfigError("scene spec: image must be at least 8x8");
  }
  if (substeps < 1) throw ConfigError("scene spec: substeps must be >= 1");
  if (target_points < 8) {
    throw ConfigError("scene spec: need at least 8 points");
  }
  if (contrast_threshold <= 0) {
    throw ConfigError("scene spec: contrast threshold must be positive");
  }
}

CameraIntrinsics SceneSpec::camera() const {
  CameraIntrinsics cam;
  cam.f = focal > 0 ? focal : static_cast<double>(width);
  cam.cx = static_cast<double>(width) / 2.0;
  cam.cy = static_cast<double>(height) / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

Sample generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const CameraIntrinsics cam = spec.camera();
  const auto surfaces = build_scene(spec, rng);

  Sample sample;
  sample.width = spec.width;
  sample.height = spec.height;
  sample.cam = cam;
  sample.substeps = spec.substeps;
  sample.seed = spec.seed;

  // Substep frames for the event simulator; keep the end frames' buffers.
  std::vector<std::vector<double>> frames;
  frames.reserve(spec.substeps + 1);
  RenderBuffers first, last;
  for (std::size_t s = 0; s <= spec.substeps; ++s) {
    const double frac =
        static_cast<double>(s) / static_cast<double>(spec.substeps);
    RenderBuffers buf = render(surfaces, frac, cam);
    frames.push_back(buf.intensity);
    if (s == 0) first = buf;
    if (s == spec.substeps) last = std::move(buf);
  }
  sample.rgb0 = frames.front();
  sample.rgb1 = frames.back();

  SimulateOptions sim;
  sim.contrast_threshold = spec.contrast_threshold;
  sample.events = simulate_events(frames, spec.height, spec.width, 0.0, 1.0, sim);

  const std::size_t npx = spec.width * spec.height;
  sample.valid.assign(npx, 1);
  sample.occ2d.assign(npx, 0);
  sample.opticalflow_gt.assign(npx * 2, 0.0);

  // Per-pixel flow by transporting the frame-0 hit with its surface motion.
  // Both endpoints go through the same projection arithmetic, so a static
  // surface yields exactly zero flow.
  std::vector<double> target_u(npx), target_v(npx), expected_z(npx);
  for (std::size_t p = 0; p < npx; ++p) {
    const int id = first.id[p];
    const Surface& surf = surfaces[static_cast<std::size_t>(id)];
    const Vec3 w0 = surf.world_at(first.local[p], 0.0);
    const Vec3 w1 = surf.world_at(first.local[p], 1.0);
    const double u0 = cam.f * w0.x / w0.z + cam.cx;
    const double v0 = cam.f * w0.y / w0.z + cam.cy;
    const double u1 = cam.f * w1.x / w1.z + cam.cx;
    const double v1 = cam.f * w1.y / w1.z + cam.cy;
    sample.opticalflow_gt[2 * p] = u1 - u0;
    sample.opticalflow_gt[2 * p + 1] = v1 - v0;
    const double x = static_cast<double>(p % spec.width);
    const double y = static_cast<double>(p / spec.width);
    target_u[p] = x + (u1 - u0);
    target_v[p] = y + (v1 - v0);
    expected_z[p] = w1.z;
  }

  // Occlusion: no pure frame-1 correspondence. A pixel is occluded when its
  // target leaves the image, any bilinear tap of the target belongs to a
  // different surface, or the frame-1 winner sits clearly in front.
  for (std::size_t p = 0; p < npx; ++p) {
    const int id = first.id[p];
    const double u = target_u[p], v = target_v[p];
    bool occ = false;
    if (u < 0 || u > spec.width - 1 || v < 0 || v > spec.height - 1) {
      occ = true;
    } else {
      const auto x0 = static_cast<std::size_t>(std::floor(u));
      const auto y0 = static_cast<std::size_t>(std::floor(v));
      for (std::size_t dy = 0; dy < 2 && !occ; ++dy) {
        for (std::size_t dx = 0; dx < 2 && !occ; ++dx) {
          const std::size_t tx = std::min(x0 + dx, spec.width - 1);
          const std::size_t ty = std::min(y0 + dy, spec.height - 1);
          const double wgt = (dx ? u - x0 : 1.0 - (u - x0)) *
                             (dy ? v - y0 : 1.0 - (v - y0));
          if (wgt <= 0.0) continue;
          const std::size_t tp = ty * spec.width + tx;
          if (last.id[tp] != id) occ = true;
          if (last.depth[tp] < expected_z[p] * 0.99) occ = true;
        }
      }
    }
    sample.occ2d[p] = occ ? 1 : 0;
  }

  // Point clouds: one point per visible object pixel, subsampled.
  std::vector<std::size_t> obj0, obj1;
  for (std::size_t p = 0; p < npx; ++p) {
    if (first.id[p] > 0) obj0.push_back(p);
    if (last.id[p] > 0) obj1.push_back(p);
  }
  if (obj0.empty() || obj1.empty()) {
    throw ConfigError("scenegen: no visible object pixels");
  }
  subsample_indices(obj0, spec.target_points, rng);
  subsample_indices(obj1, spec.target_points, rng);

  sample.pc0.reserve(obj0.size() * 3);
  sample.sceneflow_gt.reserve(obj0.size() * 3);
  sample.occ3d.reserve(obj0.size());
  for (std::size_t p : obj0) {
    const Surface& surf = surfaces[static_cast<std::size_t>(first.id[p])];
    const Vec3 w0 = surf.world_at(first.local[p], 0.0);
    const Vec3 w1 = surf.world_at(first.local[p], 1.0);
    sample.pc0.insert(sample.pc0.end(), {w0.x, w0.y, w0.z});
    sample.sceneflow_gt.insert(sample.sceneflow_gt.end(),
                               {w1.x - w0.x, w1.y - w0.y, w1.z - w0.z});
    sample.occ3d.push_back(sample.occ2d[p]);
  }
  sample.pc1.reserve(obj1.size() * 3);
  for (std::size_t p : obj1) {
    const Surface& surf = surfaces[static_cast<std::size_t>(last.id[p])];
    const Vec3 w1 = surf.world_at(last.local[p], 1.0);
    sample.pc1.insert(sample.pc1.end(), {w1.x, w1.y, w1.z});
  }
  return sample;
}

namespace {

void write_f32_file(const std::string& path, const std::vector<double>& v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(f.data()),
           static_cast<std::streamsize>(f.size() * 4));
}

std::vector<double> read_f32_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot read " + path);
  const std::size_t bytes = static_cast<std::size_t>(is.tellg());
  if (bytes % 4 != 0) throw DataError(path + ": truncated f32 file");
  is.seekg(0);
  std::vector<float> f(bytes / 4);
  is.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(bytes));
  return std::vector<double>(f.begin(), f.end());
}

void write_u8_file(const std::string& path,
                   const std::vector<std::uint8_t>& v) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size()));
}

std::vector<std::uint8_t> read_u8_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot read " + path);
  std::vector<std::uint8_t> v(static_cast<std::size_t>(is.tellg()));
  is.seekg(0);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size()));
  return v;
}

}  // namespace

void save_sample(const std::string& dir, const Sample& sample) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);

  nlohmann::json meta;
  meta["width"] = sample.width;
  meta["height"] = sample.height;
  meta["n_points"] = sample.n_points();
  meta["n_points2"] = sample.n_points2();
  meta["substeps"] = sample.substeps;
  meta["seed"] = sample.seed;
  meta["intrinsics"] = {{"f", sample.cam.f},
                        {"cx", sample.cam.cx},
                        {"cy", sample.cam.cy}};
  meta["interval"] = {{"t0", sample.events.t0}, {"t1", sample.events.t1}};
  {
    std::ofstream os(dir + "/meta.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + dir + "/meta.json");
    os << meta.dump(2) << "\n";
  }
  write_f32_file(dir + "/rgb0.f32", sample.rgb0);
  write_f32_file(dir + "/rgb1.f32", sample.rgb1);
  write_f32_file(dir + "/pc0.f32", sample.pc0);
  write_f32_file(dir + "/pc1.f32", sample.pc1);
  write_f32_file(dir + "/sf_gt.f32", sample.sceneflow_gt);
  write_f32_file(dir + "/of_gt.f32", sample.opticalflow_gt);
  write_u8_file(dir + "/occ2d.u8", sample.occ2d);
  write_u8_file(dir + "/occ3d.u8", sample.occ3d);
  write_u8_file(dir + "/valid.u8", sample.valid);
  save_events(dir + "/events.evt", sample.events);
}

Sample load_sample(const std::string& dir) {
  std::ifstream is(dir + "/meta.json");
  if (!is) throw IoError("cannot read " + dir + "/meta.json");
  nlohmann::json meta = nlohmann::json::parse(is);

  Sample sample;
  sample.width = meta.at("width").get<std::size_t>();
  sample.height = meta.at("height").get<std::size_t>();
  sample.substeps = meta.at("substeps").get<std::size_t>();
  sample.seed = meta.at("seed").get<std::uint64_t>();
  sample.cam.f = meta.at("intrinsics").at("f").get<double>();
  sample.cam.cx = meta.at("intrinsics").at("cx").get<double>();
  sample.cam.cy = meta.at("intrinsics").at("cy").get<double>();
  sample.cam.width = sample.width;
  sample.cam.height = sample.height;

  sample.rgb0 = read_f32_file(dir + "/rgb0.f32");
  sample.rgb1 = read_f32_file(dir + "/rgb1.f32");
  sample.pc0 = read_f32_file(dir + "/pc0.f32");
  sample.pc1 = read_f32_file(dir + "/pc1.f32");
  sample.sceneflow_gt = read_f32_file(dir + "/sf_gt.f32");
  sample.opticalflow_gt = read_f32_file(dir + "/of_gt.f32");
  sample.occ2d = read_u8_file(dir + "/occ2d.u8");
  sample.occ3d = read_u8_file(dir + "/occ3d.u8");
  sample.valid = read_u8_file(dir + "/valid.u8");
  sample.events = load_events(dir + "/events.evt");
  sample.events.t0 = meta.at("interval").at("t0").get<double>();
  sample.events.t1 = meta.at("interval").at("t1").get<double>();

  const std::size_t npx = sample.width * sample.height;
  if (sample.rgb0.size() != npx || sample.rgb1.size() != npx ||
      sample.opticalflow_gt.size() != 2 * npx ||
      sample.occ2d.size() != npx || sample.valid.size() != npx ||
      sample.pc0.size() != 3 * meta.at("n_points").get<std::size_t>() ||
      sample.sceneflow_gt.size() != sample.pc0.size() ||
      sample.occ3d.size() != sample.n_points()) {
    throw DataError(dir + ": sample files disagree with meta.json");
  }
  return sample;
}

DatasetManifest make_dataset(std::size_t count, double train_fraction,
                             const std::string& out_dir, const SceneSpec& base,
                             bool mixed_speed) {
  if (count < 1) throw ConfigError("make_dataset: count must be >= 1");
  if (train_fraction < 0 || train_fraction > 1) {
    throw ConfigError("make_dataset: train fraction must be within [0, 1]");
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir);

  DatasetManifest manifest;
  manifest.seed = base.seed;
  const auto train_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(count) * train_fraction));
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = base.seed + i;
    if (mixed_speed) {
      spec.speed = (i % 2 == 1) ? SpeedClass::Fast : SpeedClass::Slow;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04zu", i);
    save_sample(out_dir + "/" + name, generate(spec));
    if (i < train_count) {
      manifest.train.emplace_back(name);
    } else {
      manifest.val.emplace_back(name);
    }
  }
  nlohmann::json j;
  j["train"] = manifest.train;
  j["val"] = manifest.val;
  j["seed"] = manifest.seed;
  j["count"] = count;
  std::ofstream os(out_dir + "/manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + out_dir + "/manifest.json");
  os << j.dump(2) << "\n";
  return manifest;
}

DatasetManifest load_manifest(const std::string& dataset_dir) {
  std::ifstream is(dataset_dir + "/manifest.json");
  if (!is) throw IoError("cannot read " + dataset_dir + "/manifest.json");
  nlohmann::json j = nlohmann::json::parse(is);
  DatasetManifest manifest;
  manifest.train = j.at("train").get<std::vector<std::string>>();
  manifest.val = j.at("val").get<std::vector<std::string>>();
  manifest.seed = j.value("seed", 0ull);
  return manifest;
}

}  // namespace rpeflow
