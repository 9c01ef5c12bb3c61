#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mlcl/rpmgen/panel.hpp"
#include "mlcl/rpmgen/raster.hpp"

namespace mlcl {

/// One geometric raster transform. Only the fields for `kind` are used.
struct Transform {
  enum class Kind : std::uint8_t { HFlip, VFlip, Transpose, Rotate, GridShuffle, Roll };

  Kind kind = Kind::HFlip;
  double angle_degrees = 0.0;
  int grid = 2;                  // GridShuffle: 2 or 3
  std::vector<int> permutation;  // GridShuffle: output cell i takes input cell permutation[i]
  int dx = 0;                    // Roll: horizontal offset in pixels
  int dy = 0;                    // Roll: vertical offset in pixels

  static Transform of(Kind k) {
    Transform t;
    t.kind = k;
    return t;
  }
  static Transform hflip() { return of(Kind::HFlip); }
  static Transform vflip() { return of(Kind::VFlip); }
  static Transform transpose() { return of(Kind::Transpose); }
  static Transform rotate(double degrees) {
    Transform t = of(Kind::Rotate);
    t.angle_degrees = degrees;
    return t;
  }
  static Transform grid_shuffle(int grid, std::vector<int> perm) {
    Transform t = of(Kind::GridShuffle);
    t.grid = grid;
    t.permutation = std::move(perm);
    return t;
  }
  static Transform roll(int dx, int dy) {
    Transform t = of(Kind::Roll);
    t.dx = dx;
    t.dy = dy;
    return t;
  }

  std::string to_string() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::HFlip: os << "hflip"; break;
      case Kind::VFlip: os << "vflip"; break;
      case Kind::Transpose: os << "transpose"; break;
      case Kind::Rotate: os << "rotate(" << angle_degrees << ")"; break;
      case Kind::GridShuffle:
        os << "grid_shuffle(" << grid << "x" << grid << ":";
        for (std::size_t i = 0; i < permutation.size(); ++i) os << (i ? "," : "") << permutation[i];
        os << ")";
        break;
      case Kind::Roll: os << "roll(" << dx << "," << dy << ")"; break;
    }
    return os.str();
  }

  friend bool operator==(const Transform&, const Transform&) = default;
};

/// Transforms in canonical order: flips, transpose, rotate, grid shuffle, roll.
struct TransformSpec {
  std::vector<Transform> steps;

  bool empty() const { return steps.empty(); }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < steps.size(); ++i) s += (i ? ";" : "") + steps[i].to_string();
    return s.empty() ? "identity" : s;
  }

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct AugmentOptions {
  bool enabled = true;
  /// Restrict rotation to multiples of 90 degrees.
  bool right_angle_rotations = false;
  /// Chance that each transform family enters a sampled TransformSpec.
  double probability = 0.5;
  std::size_t panel_size = 28;
};

inline bool is_permutation_of_cells(const std::vector<int>& perm, int grid) {
  if (perm.size() != static_cast<std::size_t>(grid * grid)) return false;
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (sorted[i] != static_cast<int>(i)) return false;
  return true;
}

inline Raster apply_transform(const Raster& in, const Transform& t) {
  const std::size_t w = in.width, h = in.height;
  Raster out(w, h, kBackground);
  switch (t.kind) {
    case Transform::Kind::HFlip:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(w - 1 - x, y) = in.at(x, y);
      break;
    case Transform::Kind::VFlip:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(x, h - 1 - y) = in.at(x, y);
      break;
    case Transform::Kind::Transpose:
      if (w != h) throw std::invalid_argument("transpose requires a square raster");
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(y, x) = in.at(x, y);
      break;
    case Transform::Kind::Rotate: {
      // Nearest-neighbor inverse mapping about the raster center.
      const double rad = t.angle_degrees * std::numbers::pi / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ox = static_cast<double>(x) - cx, oy = static_cast<double>(y) - cy;
          const double sx = std::round(c * ox + s * oy + cx);
          const double sy = std::round(-s * ox + c * oy + cy);
          if (sx >= 0 && sy >= 0 && sx < static_cast<double>(w) && sy < static_cast<double>(h))
            out.at(x, y) = in.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
        }
      break;
    }
    case Transform::Kind::GridShuffle: {
      if (!is_permutation_of_cells(t.permutation, t.grid)) throw std::invalid_argument("invalid grid permutation");
      out = in;
      // Blocks tile the largest multiple of the grid; the remainder stays put.
      const std::size_t cw = w / static_cast<std::size_t>(t.grid), ch = h / static_cast<std::size_t>(t.grid);
      const auto g = static_cast<std::size_t>(t.grid);
      for (std::size_t dst = 0; dst < g * g; ++dst) {
        const auto src = static_cast<std::size_t>(t.permutation[dst]);
        const std::size_t dx0 = (dst % g) * cw, dy0 = (dst / g) * ch;
        const std::size_t sx0 = (src % g) * cw, sy0 = (src / g) * ch;
        for (std::size_t y = 0; y < ch; ++y)
          for (std::size_t x = 0; x < cw; ++x) out.at(dx0 + x, dy0 + y) = in.at(sx0 + x, sy0 + y);
      }
      break;
    }
    case Transform::Kind::Roll: {
      const auto W = static_cast<long>(w), H = static_cast<long>(h);
      if (t.dx < 0 || t.dy < 0 || t.dx > W || t.dy > H) throw std::invalid_argument("roll offset outside panel size");
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const auto nx = static_cast<std::size_t>((static_cast<long>(x) + t.dx) % W);
          const auto ny = static_cast<std::size_t>((static_cast<long>(y) + t.dy) % H);
          out.at(nx, ny) = in.at(x, y);
        }
      break;
    }
  }
  return out;
}

inline Raster apply_transform(const Raster& in, const TransformSpec& spec) {
  Raster r = in;
  for (const Transform& t : spec.steps) r = apply_transform(r, t);
  return r;
}

/// Random nonempty subset of the six transform kinds, in canonical order.
inline TransformSpec sample_transform(Rng& rng, const AugmentOptions& opts = {}) {
  TransformSpec spec;
  const int side = static_cast<int>(opts.panel_size);
  if (!(opts.probability > 0.0 && opts.probability <= 1.0)) {
    throw std::invalid_argument("augmentation probability must be in (0, 1]");
  }
  auto coin = [&] { return uniform_real(rng, 0.0, 1.0) < opts.probability; };
  while (spec.empty()) {
    if (coin()) spec.steps.push_back(Transform::hflip());
    if (coin()) spec.steps.push_back(Transform::vflip());
    if (coin()) spec.steps.push_back(Transform::transpose());
    if (coin()) {
      const double angle = opts.right_angle_rotations ? 90.0 * uniform_int(rng, 0, 3) : uniform_real(rng, 0.0, 360.0);
      spec.steps.push_back(Transform::rotate(angle));
    }
    if (coin()) {
      const int g = uniform_int(rng, 2, 3);
      std::vector<int> perm(static_cast<std::size_t>(g * g));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      spec.steps.push_back(Transform::grid_shuffle(g, std::move(perm)));
    }
    if (coin()) {
      const int axis = uniform_int(rng, 0, 2);  // 0 horizontal, 1 vertical, 2 both
      const int dx = axis != 1 ? uniform_int(rng, 1, side - 1) : 0;
      const int dy = axis != 0 ? uniform_int(rng, 1, side - 1) : 0;
      spec.steps.push_back(Transform::roll(dx, dy));
    }
  }
  return spec;
}

/// Applies one spec identically to all 16 panels; labels are untouched.
inline RpmInstance apply(const RpmInstance& inst, const TransformSpec& spec) {
  RpmInstance out = inst;
  for (Raster& r : out.rasters) r = apply_transform(r, spec);
  return out;
}

struct AugmentedView {
  RpmInstance instance;
  TransformSpec transform;
};

/// Two independently augmented views of one instance.
inline std::pair<AugmentedView, AugmentedView> make_views(const RpmInstance& inst, Rng& rng,
                                                          const AugmentOptions& opts = {}) {
  if (!opts.enabled) return {{inst, {}}, {inst, {}}};
  AugmentOptions o = opts;
  if (!inst.rasters.empty()) o.panel_size = inst.rasters.front().width;
  TransformSpec a = sample_transform(rng, o);
  TransformSpec b = sample_transform(rng, o);
  return {{apply(inst, a), a}, {apply(inst, b), b}};
}

/// With augmentation, views 2i and 2i+1 both come from instance i (2N
/// total); without, the base batch is returned unchanged.
inline std::vector<AugmentedView> augment_batch(const std::vector<const RpmInstance*>& batch, Rng& rng,
                                                const AugmentOptions& opts) {
  std::vector<AugmentedView> out;
  out.reserve(opts.enabled ? 2 * batch.size() : batch.size());
  for (const RpmInstance* inst : batch) {
    if (!opts.enabled) {
      out.push_back({*inst, {}});
      continue;
    }
    auto [a, b] = make_views(*inst, rng, opts);
    out.push_back(std::move(a));
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace mlcl
