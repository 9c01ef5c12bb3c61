#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "mlcl/rpmgen/panel.hpp"

namespace mlcl {

inline constexpr std::uint8_t kBackground = 0;

/// Foreground intensity of a color level; level 0 is the dimmest.
inline std::uint8_t color_intensity(int color) { return static_cast<std::uint8_t>(75 + 45 * color); }

/// Renders a panel as filled, aliased shapes centered in their grid cells.
/// Shape types: 0 circle, 1 square, 2 triangle, 3 diamond.
inline Raster rasterize(const PanelSpec& panel, RpmConfig config, std::size_t size = 28) {
  Raster r(size, size, kBackground);
  const int side = grid_side(config);
  const double cell = static_cast<double>(size) / side;
  for (const PanelObject& o : panel.objects) {
    const double cx = (o.position % side + 0.5) * cell;
    const double cy = (o.position / side + 0.5) * cell;
    const double radius = 0.5 * cell * (0.35 + 0.13 * o.size);
    const std::uint8_t ink = color_intensity(o.color);
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - radius - 1)));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - radius - 1)));
    const auto x1 = std::min(size, static_cast<std::size_t>(std::ceil(cx + radius + 1)));
    const auto y1 = std::min(size, static_cast<std::size_t>(std::ceil(cy + radius + 1)));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        bool inside = false;
        switch (o.type) {
          case 0: inside = dx * dx + dy * dy <= radius * radius; break;
          case 1: inside = std::max(std::abs(dx), std::abs(dy)) <= 0.8 * radius; break;
          case 2: inside = dy >= -radius && dy <= 0.7 * radius && std::abs(dx) <= (dy + radius) * 0.6; break;
          default: inside = std::abs(dx) + std::abs(dy) <= radius; break;
        }
        if (inside) r.at(x, y) = ink;
      }
    }
  }
  return r;
}

}  // namespace mlcl
