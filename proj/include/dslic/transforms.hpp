#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dslic/error.hpp"
#include "dslic/image.hpp"
#include "dslic/image_io.hpp"
#include "dslic/rng.hpp"

// Expectation Over Transformation: randomized rotation, scaling, brightness,
// contrast and per-pixel noise, plus differentiable superimposition of the
// patch onto scene images. The backward pass is the exact adjoint of the
// bilinear warp and of the composite chain, so gradients route back to patch
// pixel space.

namespace dslic {

struct EotParams {
  double rot_deg = 20.0;      // rotation drawn from [-rot_deg, +rot_deg]
  double scale_lo = 0.75;     // multiplicative scale range
  double scale_hi = 1.25;
  double bright = 0.1;        // additive brightness from [-bright, +bright]
  double contrast_lo = 0.8;   // multiplicative contrast range
  double contrast_hi = 1.2;
  double noise = 0.1;         // per-pixel uniform noise amplitude
  double patch_scale = 0.3;   // nominal patch side relative to sqrt(box area)
  std::uint64_t seed = 0;
  int samples_per_scene = 4;

  void validate() const {
    if (rot_deg < 0) throw InvalidArgument("eot: rot_deg must be >= 0");
    if (scale_lo <= 0 || scale_hi < scale_lo)
      throw InvalidArgument("eot: bad scale range");
    if (bright < 0) throw InvalidArgument("eot: bright must be >= 0");
    if (contrast_hi < contrast_lo)
      throw InvalidArgument("eot: bad contrast range");
    if (noise < 0) throw InvalidArgument("eot: noise must be >= 0");
    if (patch_scale <= 0) throw InvalidArgument("eot: patch_scale must be > 0");
    if (samples_per_scene < 1)
      throw InvalidArgument("eot: samples_per_scene must be >= 1");
  }
};

struct TransformSample {
  double rot_deg = 0.0;
  double scale = 1.0;
  double brightness = 0.0;
  double contrast = 1.0;
  std::uint64_t noise_seed = 0;
};

// One independent uniform draw per parameter, in a fixed order, so a fixed
// seed reproduces the exact instance list.
inline TransformSample draw_transform(const EotParams& p, Rng& rng) {
  TransformSample t;
  t.rot_deg = rng.uniform(-p.rot_deg, p.rot_deg);
  t.scale = rng.uniform(p.scale_lo, p.scale_hi);
  t.brightness = rng.uniform(-p.bright, p.bright);
  t.contrast = rng.uniform(p.contrast_lo, p.contrast_hi);
  t.noise_seed = rng.next_u64();
  return t;
}

inline std::vector<TransformSample> sample_transforms(const EotParams& p,
                                                      Rng& rng) {
  p.validate();
  std::vector<TransformSample> out;
  out.reserve(static_cast<std::size_t>(p.samples_per_scene));
  for (int i = 0; i < p.samples_per_scene; ++i)
    out.push_back(draw_transform(p, rng));
  return out;
}

// ---- Scene fixtures ----

struct Box {
  double x = 0, y = 0, w = 0, h = 0;
};

struct SceneSpec {
  Image image;
  std::vector<Box> boxes;
  std::string name;
};

// ---- Warp ----

struct Placement {
  Box box;
  TransformSample ts;
  double fwd[4];   // patch -> scene linear map (rotation * scale)
  double inv[4];   // scene -> patch linear map
  double cx_scene, cy_scene;  // box center
  double cx_patch, cy_patch;  // patch center
  int x0, y0, x1, y1;         // support bounds in the scene, half-open
  int patch_h, patch_w;
};

// Scene-sized warped patch plus its ownership mask (the warp of an all-ones
// patch; fractional at bilinear edges, zero outside the support).
struct WarpedPatch {
  Image warped;
  std::vector<double> mask;  // scene.pixels() entries
  Placement place;
};

namespace detail {

// Accumulates the four bilinear taps for patch position (px, py) through
// `fn(pixel_index, weight)`; taps outside the patch are skipped (zero
// padding).
template <typename Fn>
inline void bilinear_taps(double px, double py, int w, int h, Fn&& fn) {
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const double fx = px - x0, fy = py - y0;
  const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                         fx * fy};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int t = 0; t < 4; ++t) {
    if (xs[t] < 0 || xs[t] >= w || ys[t] < 0 || ys[t] >= h) continue;
    if (wts[t] == 0.0) continue;
    fn(ys[t] * w + xs[t], wts[t]);
  }
}

}  // namespace detail

// Scales the patch to side patch_scale*sqrt(box area)*ts.scale, rotates it
// about its center and places it at the box center, resampling bilinearly.
inline WarpedPatch warp_patch(const Image& patch, const TransformSample& ts,
                              const Box& box, double patch_scale, int scene_h,
                              int scene_w) {
  if (box.w <= 0 || box.h <= 0) throw InvalidArgument("warp_patch: empty box");
  if (patch.pixels() < 1) throw InvalidArgument("warp_patch: empty patch");

  Placement pl;
  pl.box = box;
  pl.ts = ts;
  pl.patch_h = patch.height;
  pl.patch_w = patch.width;
  const double side = patch_scale * std::sqrt(box.w * box.h) * ts.scale;
  const double zoom =
      side / std::sqrt(static_cast<double>(patch.width) * patch.height);
  const double theta = ts.rot_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  pl.fwd[0] = zoom * c;
  pl.fwd[1] = -zoom * s;
  pl.fwd[2] = zoom * s;
  pl.fwd[3] = zoom * c;
  const double inv_zoom = 1.0 / zoom;
  pl.inv[0] = inv_zoom * c;
  pl.inv[1] = inv_zoom * s;
  pl.inv[2] = -inv_zoom * s;
  pl.inv[3] = inv_zoom * c;
  pl.cx_scene = box.x + (box.w - 1) / 2.0;
  pl.cy_scene = box.y + (box.h - 1) / 2.0;
  pl.cx_patch = (patch.width - 1) / 2.0;
  pl.cy_patch = (patch.height - 1) / 2.0;

  // Support = forward image of the patch rectangle, one pixel of margin.
  double lox = 1e300, loy = 1e300, hix = -1e300, hiy = -1e300;
  for (const double px : {-1.0, static_cast<double>(patch.width)}) {
    for (const double py : {-1.0, static_cast<double>(patch.height)}) {
      const double rx = px - pl.cx_patch, ry = py - pl.cy_patch;
      const double sx = pl.fwd[0] * rx + pl.fwd[1] * ry + pl.cx_scene;
      const double sy = pl.fwd[2] * rx + pl.fwd[3] * ry + pl.cy_scene;
      lox = std::min(lox, sx);
      hix = std::max(hix, sx);
      loy = std::min(loy, sy);
      hiy = std::max(hiy, sy);
    }
  }
  pl.x0 = std::max(0, static_cast<int>(std::floor(lox)) - 1);
  pl.y0 = std::max(0, static_cast<int>(std::floor(loy)) - 1);
  pl.x1 = std::min(scene_w, static_cast<int>(std::ceil(hix)) + 2);
  pl.y1 = std::min(scene_h, static_cast<int>(std::ceil(hiy)) + 2);
  if (pl.x0 >= pl.x1 || pl.y0 >= pl.y1)
    throw InvalidArgument("warp_patch: warped support lies outside the scene");

  WarpedPatch out;
  out.place = pl;
  out.warped = Image(scene_h, scene_w);
  out.mask.assign(static_cast<std::size_t>(scene_h) * scene_w, 0.0);
  for (int sy = pl.y0; sy < pl.y1; ++sy) {
    for (int sx = pl.x0; sx < pl.x1; ++sx) {
      const double rx = sx - pl.cx_scene, ry = sy - pl.cy_scene;
      const double px = pl.inv[0] * rx + pl.inv[1] * ry + pl.cx_patch;
      const double py = pl.inv[2] * rx + pl.inv[3] * ry + pl.cy_patch;
      double acc[3] = {0, 0, 0};
      double m = 0;
      detail::bilinear_taps(px, py, patch.width, patch.height,
                            [&](int pi, double wt) {
                              const std::size_t b =
                                  static_cast<std::size_t>(pi) * 3;
                              acc[0] += wt * patch.data[b + 0];
                              acc[1] += wt * patch.data[b + 1];
                              acc[2] += wt * patch.data[b + 2];
                              m += wt;
                            });
      const std::size_t o = (static_cast<std::size_t>(sy) * scene_w + sx) * 3;
      out.warped.data[o + 0] = acc[0];
      out.warped.data[o + 1] = acc[1];
      out.warped.data[o + 2] = acc[2];
      out.mask[static_cast<std::size_t>(sy) * scene_w + sx] = m;
    }
  }
  return out;
}

// ---- Composite ----

struct BoxRecord {
  Placement place;
  std::vector<double> mask;        // scene.pixels()
  std::vector<std::uint8_t> gate;  // 1 where the clamp passed gradient, x3 channels
  double contrast = 1.0;
};

struct AppliedPatch {
  Image composited;
  std::vector<BoxRecord> boxes;
};

inline AppliedPatch make_applied(const Image& scene) {
  AppliedPatch a;
  a.composited = scene;
  return a;
}

// out = (1 - mask) * previous + mask * clamp(contrast * warped + brightness
// + noise). Color jitter and noise touch only the patch region; the clamp
// keeps the composite in [0,1] and gates the gradient (zero outside the
// closed interval).
inline void composite(AppliedPatch& a, const WarpedPatch& wp,
                      double noise_amp) {
  const Placement& pl = wp.place;
  const Image& base = a.composited;
  if (!wp.warped.same_shape(base))
    throw InvalidArgument("composite: warped/scene shape mismatch");

  BoxRecord rec;
  rec.place = pl;
  rec.mask = wp.mask;
  rec.contrast = pl.ts.contrast;
  rec.gate.assign(base.data.size(), 0);

  Image out = base;
  Rng noise_rng(pl.ts.noise_seed);
  for (int sy = pl.y0; sy < pl.y1; ++sy) {
    for (int sx = pl.x0; sx < pl.x1; ++sx) {
      const std::size_t pi = static_cast<std::size_t>(sy) * base.width + sx;
      const double m = wp.mask[pi];
      for (int ch = 0; ch < 3; ++ch) {
        const double noise =
            noise_amp > 0 ? noise_rng.uniform(-noise_amp, noise_amp) : 0.0;
        if (m == 0.0) continue;
        const double pre = pl.ts.contrast * wp.warped.data[pi * 3 + ch] +
                           pl.ts.brightness + noise;
        const double post = std::clamp(pre, 0.0, 1.0);
        if (pre >= 0.0 && pre <= 1.0) rec.gate[pi * 3 + ch] = 1;
        out.data[pi * 3 + ch] =
            (1.0 - m) * base.data[pi * 3 + ch] + m * post;
      }
    }
  }
  a.composited = std::move(out);
  a.boxes.push_back(std::move(rec));
}

// Forward convenience: warp + composite the patch into every box of a scene,
// one transform instance per box.
inline AppliedPatch composite_scene(const SceneSpec& scene, const Image& patch,
                                    std::span<const TransformSample> per_box,
                                    const EotParams& eot) {
  if (per_box.size() != scene.boxes.size())
    throw InvalidArgument("composite_scene: one transform per box required");
  AppliedPatch a = make_applied(scene.image);
  for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
    const WarpedPatch wp =
        warp_patch(patch, per_box[b], scene.boxes[b], eot.patch_scale,
                   scene.image.height, scene.image.width);
    composite(a, wp, eot.noise);
  }
  return a;
}

// Routes a scene-shaped upstream gradient back to patch pixel space: through
// each composite in reverse order (mask and contrast scaling, clamp gating)
// and through the exact adjoint of the bilinear warp. Contributions from all
// boxes accumulate.
inline Image backward_to_patch(const AppliedPatch& a, const Image& upstream,
                               int patch_h, int patch_w) {
  if (!upstream.same_shape(a.composited))
    throw InvalidArgument("backward_to_patch: upstream shape mismatch");
  if (a.boxes.empty())
    throw InvalidArgument("backward_to_patch: missing placement records");

  Image g_scene = upstream;
  Image g_patch(patch_h, patch_w);
  for (auto it = a.boxes.rbegin(); it != a.boxes.rend(); ++it) {
    const BoxRecord& rec = *it;
    const Placement& pl = rec.place;
    for (int sy = pl.y0; sy < pl.y1; ++sy) {
      for (int sx = pl.x0; sx < pl.x1; ++sx) {
        const std::size_t pi =
            static_cast<std::size_t>(sy) * g_scene.width + sx;
        const double m = rec.mask[pi];
        if (m == 0.0) continue;
        const double rx = sx - pl.cx_scene, ry = sy - pl.cy_scene;
        const double px = pl.inv[0] * rx + pl.inv[1] * ry + pl.cx_patch;
        const double py = pl.inv[2] * rx + pl.inv[3] * ry + pl.cy_patch;
        for (int ch = 0; ch < 3; ++ch) {
          const double g_post = g_scene.data[pi * 3 + ch] * m;
          const double g_pre =
              rec.gate[pi * 3 + ch] ? g_post * rec.contrast : 0.0;
          if (g_pre != 0.0) {
            detail::bilinear_taps(px, py, patch_w, patch_h,
                                  [&](int ppi, double wt) {
                                    g_patch.data[static_cast<std::size_t>(ppi) *
                                                     3 + ch] += wt * g_pre;
                                  });
          }
          g_scene.data[pi * 3 + ch] *= 1.0 - m;
        }
      }
    }
  }
  return g_patch;
}

// ---- Fixture loading ----

// One CSV per scene: header "image_path,x,y,w,h", one row per target box.
// Paths resolve relative to the CSV's directory; every row must reference
// the same image.
inline SceneSpec load_scene_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open scene fixture: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty scene fixture: " + csv_path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_path,x,y,w,h")
    throw IoError("scene fixture: bad header in " + csv_path);

  SceneSpec scene;
  scene.name = std::filesystem::path(csv_path).stem().string();
  std::string image_path;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string path_field, field;
    if (!std::getline(ss, path_field, ',')) break;
    Box b;
    double* vals[4] = {&b.x, &b.y, &b.w, &b.h};
    for (double* v : vals) {
      if (!std::getline(ss, field, ','))
        throw IoError("scene fixture: short row in " + csv_path);
      try {
        *v = std::stod(field);
      } catch (const std::exception&) {
        throw IoError("scene fixture: non-numeric box field in " + csv_path);
      }
    }
    if (image_path.empty()) {
      image_path = path_field;
    } else if (image_path != path_field) {
      throw IoError("scene fixture: multiple images in one scene: " + csv_path);
    }
    scene.boxes.push_back(b);
  }
  if (scene.boxes.empty())
    throw IoError("scene fixture: no boxes in " + csv_path);

  const auto resolved =
      std::filesystem::path(csv_path).parent_path() / image_path;
  scene.image = read_image(resolved.string());
  for (const Box& b : scene.boxes) {
    if (b.w <= 0 || b.h <= 0)
      throw IoError("scene fixture: degenerate box in " + csv_path);
    if (b.x < 0 || b.y < 0 || b.x + b.w > scene.image.width ||
        b.y + b.h > scene.image.height)
      throw IoError("scene fixture: box outside image in " + csv_path);
  }
  return scene;
}

// All *.csv scenes in a directory, in sorted filename order.
inline std::vector<SceneSpec> load_scene_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a scene directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no scene fixtures (*.csv) in: " + dir);
  std::vector<SceneSpec> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(load_scene_csv(f));
  return scenes;
}

}  // namespace dslic
