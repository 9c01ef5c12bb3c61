#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mlcl/rules.hpp"

namespace mlcl {

/// Desk-scale panel layouts. Center and Grid2x2 follow the pair grammar;
/// ShapeGrid places shape objects on a 3x3 grid under the triple grammar.
enum class RpmConfig : std::uint8_t { Center = 0, Grid2x2 = 1, ShapeGrid = 2 };

inline std::string_view to_string(RpmConfig c) {
  switch (c) {
    case RpmConfig::Center: return "center";
    case RpmConfig::Grid2x2: return "grid2x2";
    case RpmConfig::ShapeGrid: return "shape_grid";
  }
  return "?";
}

inline RpmConfig parse_config(std::string_view s) {
  if (s == "center" || s == "Center") return RpmConfig::Center;
  if (s == "grid2x2" || s == "2x2Grid") return RpmConfig::Grid2x2;
  if (s == "shape_grid" || s == "ShapeGrid") return RpmConfig::ShapeGrid;
  throw std::invalid_argument("unknown config '" + std::string(s) + "' (expected center, grid2x2 or shape_grid)");
}

inline Grammar grammar_of(RpmConfig c) { return c == RpmConfig::ShapeGrid ? Grammar::TripleStyle : Grammar::PairStyle; }

/// Whether rules are read along rows or along columns. Pair-style matrices
/// are always row-wise.
enum class Orientation : std::uint8_t { Rows = 0, Columns = 1 };

// Ordinal attribute ranges shared by all configs.
inline constexpr int kTypeLevels = 4;
inline constexpr int kSizeLevels = 5;
inline constexpr int kColorLevels = 5;

inline int grid_cells(RpmConfig c) {
  switch (c) {
    case RpmConfig::Center: return 1;
    case RpmConfig::Grid2x2: return 4;
    case RpmConfig::ShapeGrid: return 9;
  }
  return 1;
}

inline int grid_side(RpmConfig c) { return c == RpmConfig::Center ? 1 : c == RpmConfig::Grid2x2 ? 2 : 3; }

struct PanelObject {
  std::uint8_t position = 0;
  std::uint8_t type = 0;
  std::uint8_t size = 0;
  std::uint8_t color = 0;

  friend auto operator<=>(const PanelObject&, const PanelObject&) = default;
};

/// Symbolic content of one panel: objects sorted by grid cell.
struct PanelSpec {
  std::vector<PanelObject> objects;

  std::size_t count() const { return objects.size(); }

  std::uint32_t position_mask() const {
    std::uint32_t m = 0;
    for (const auto& o : objects) m |= 1u << o.position;
    return m;
  }

  void normalize() {
    std::sort(objects.begin(), objects.end());
  }

  /// Positions distinct and attribute ordinals within range for config c.
  bool is_valid(RpmConfig c) const {
    std::uint32_t seen = 0;
    for (const auto& o : objects) {
      if (o.position >= grid_cells(c) || o.type >= kTypeLevels || o.size >= kSizeLevels || o.color >= kColorLevels)
        return false;
      if (seen & (1u << o.position)) return false;
      seen |= 1u << o.position;
    }
    return std::is_sorted(objects.begin(), objects.end());
  }

  friend bool operator==(const PanelSpec&, const PanelSpec&) = default;
};

/// 8-bit grayscale square image.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

inline constexpr std::size_t kContextPanels = 8;
inline constexpr std::size_t kChoicePanels = 8;
inline constexpr std::size_t kPanelsPerInstance = kContextPanels + kChoicePanels;

/// One matrix problem: 8 context panels (row-major, bottom-right missing),
/// 8 answer choices, the governing structure and the 1-based correct index.
struct RpmInstance {
  RpmConfig config = RpmConfig::Center;
  Orientation orientation = Orientation::Rows;
  AbstractStructure structure;
  std::array<PanelSpec, kContextPanels> context;
  std::array<PanelSpec, kChoicePanels> choices;
  /// Panels 0..7 are the context, 8..15 the choices.
  std::vector<Raster> rasters;
  int correct_index = 1;
  std::uint64_t seed = 0;

  std::size_t answer_slot() const { return static_cast<std::size_t>(correct_index - 1); }

  friend bool operator==(const RpmInstance&, const RpmInstance&) = default;
};

/// The full 3x3 matrix completed with choice `slot` (0-based).
inline std::array<PanelSpec, 9> completed_grid(const RpmInstance& inst, std::size_t slot) {
  std::array<PanelSpec, 9> grid;
  std::copy(inst.context.begin(), inst.context.end(), grid.begin());
  grid[8] = inst.choices.at(slot);
  return grid;
}

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent per-instance stream seed, so serial and parallel generation agree.
inline std::uint64_t instance_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  return splitmix64(splitmix64(dataset_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  if (v.empty()) throw std::invalid_argument("pick from empty set");
  return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))];
}

inline int popcount(std::uint32_t m) { return std::popcount(m); }

}  // namespace mlcl
