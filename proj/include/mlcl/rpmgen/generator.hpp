#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mlcl/rpmgen/panel.hpp"
#include "mlcl/rpmgen/raster.hpp"
#include "mlcl/rpmgen/verify.hpp"
#include "mlcl/rules.hpp"

namespace mlcl {

struct GeneratorOptions {
  std::size_t panel_size = 28;
  int max_matrix_retries = 500;
  int max_candidate_attempts = 5000;
};

/// A realized 3x3 matrix; panels[8] is the answer.
struct RealizedMatrix {
  std::array<PanelSpec, 9> panels;
  Orientation orientation = Orientation::Rows;
};

struct CandidateSet {
  std::array<PanelSpec, kChoicePanels> choices;
  int correct_index = 1;
};

namespace gen_detail {

inline std::vector<PairRelation> pair_relations_for(RpmConfig c, PairAttribute a) {
  using R = PairRelation;
  if (c == RpmConfig::Center && (a == PairAttribute::Number || a == PairAttribute::Position)) return {R::Constant};
  if (a == PairAttribute::Type) return {R::Constant, R::Progression, R::DistributeThree};
  return {R::Constant, R::Progression, R::Arithmetic, R::DistributeThree};
}

inline std::vector<TripleRelation> triple_relations_for(TripleAttribute a) {
  using R = TripleRelation;
  if (a == TripleAttribute::Number) return {R::Progression, R::ConsistentUnion};
  return {R::Progression, R::Xor, R::Or, R::And, R::ConsistentUnion};
}

using Cells = std::array<int, 9>;

inline std::uint32_t rotate(std::uint32_t m, int shift, int cells) {
  std::uint32_t out = 0;
  for (int i = 0; i < cells; ++i)
    if (m & (1u << i)) out |= 1u << (((i + shift) % cells + cells) % cells);
  return out;
}

inline std::uint32_t random_mask(Rng& rng, int cells, int min_bits, int max_bits) {
  const int bits = uniform_int(rng, min_bits, std::min(max_bits, cells));
  std::vector<int> idx(static_cast<std::size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uint32_t m = 0;
  for (int i = 0; i < bits; ++i) m |= 1u << idx[static_cast<std::size_t>(i)];
  return m;
}

inline std::array<int, 3> three_distinct(Rng& rng, int lo, int hi) {
  std::vector<int> vals(static_cast<std::size_t>(hi - lo + 1));
  std::iota(vals.begin(), vals.end(), lo);
  std::shuffle(vals.begin(), vals.end(), rng);
  return {vals[0], vals[1], vals[2]};
}

template <typename T>
void fill_permuted_rows(Rng& rng, const std::array<T, 3>& set, std::array<T, 9>& out) {
  for (int row = 0; row < 3; ++row) {
    std::array<T, 3> p = set;
    std::shuffle(p.begin(), p.end(), rng);
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(row * 3 + c)] = p[static_cast<std::size_t>(c)];
  }
}

/// Row-wise values in [lo, hi] following a scalar relation. Progression
/// steps are shared by all rows; arithmetic requires lo >= 1.
inline Cells scalar_rows(Rng& rng, PairRelation rel, int lo, int hi) {
  Cells v{};
  switch (rel) {
    case PairRelation::Constant:
      for (int row = 0; row < 3; ++row) {
        const int x = uniform_int(rng, lo, hi);
        for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(row * 3 + c)] = x;
      }
      break;
    case PairRelation::Progression: {
      std::vector<int> steps;
      for (int d : {-2, -1, 1, 2})
        if (2 * std::abs(d) <= hi - lo) steps.push_back(d);
      const int d = pick(rng, steps);
      for (int row = 0; row < 3; ++row) {
        const int start = d > 0 ? uniform_int(rng, lo, hi - 2 * d) : uniform_int(rng, lo - 2 * d, hi);
        for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(row * 3 + c)] = start + c * d;
      }
      break;
    }
    case PairRelation::Arithmetic: {
      const bool plus = uniform_int(rng, 0, 1) == 1;
      for (int row = 0; row < 3; ++row) {
        int a, b, c;
        if (plus) {
          a = uniform_int(rng, lo, hi - lo);
          b = uniform_int(rng, lo, hi - a);
          c = a + b;
        } else {
          a = uniform_int(rng, 2 * lo, hi);
          b = uniform_int(rng, lo, a - lo);
          c = a - b;
        }
        v[static_cast<std::size_t>(row * 3)] = a;
        v[static_cast<std::size_t>(row * 3 + 1)] = b;
        v[static_cast<std::size_t>(row * 3 + 2)] = c;
      }
      break;
    }
    case PairRelation::DistributeThree: fill_permuted_rows(rng, three_distinct(rng, lo, hi), v); break;
  }
  return v;
}

/// Row-wise occupancy masks over `cells` grid cells following a relation.
inline std::array<std::uint32_t, 9> mask_rows(Rng& rng, PairRelation rel, int cells) {
  std::array<std::uint32_t, 9> m{};
  const std::uint32_t full = (1u << cells) - 1;
  switch (rel) {
    case PairRelation::Constant:
      for (int row = 0; row < 3; ++row) {
        const auto x = random_mask(rng, cells, 1, cells);
        for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(row * 3 + c)] = x;
      }
      break;
    case PairRelation::Progression: {
      const int d = uniform_int(rng, 1, cells - 1);
      for (int row = 0; row < 3; ++row) {
        std::uint32_t x;
        do {
          x = random_mask(rng, cells, 1, cells - 1);
        } while (rotate(x, d, cells) == x);
        for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(row * 3 + c)] = rotate(x, c * d, cells);
      }
      break;
    }
    case PairRelation::Arithmetic: {
      const bool plus = uniform_int(rng, 0, 1) == 1;
      for (int row = 0; row < 3; ++row) {
        std::uint32_t a, b, c;
        do {
          a = random_mask(rng, cells, 1, cells);
          b = random_mask(rng, cells, 1, cells);
          c = plus ? (a | b) : (a & ~b & full);
        } while (c == 0);
        m[static_cast<std::size_t>(row * 3)] = a;
        m[static_cast<std::size_t>(row * 3 + 1)] = b;
        m[static_cast<std::size_t>(row * 3 + 2)] = c;
      }
      break;
    }
    case PairRelation::DistributeThree: {
      std::array<std::uint32_t, 3> set{};
      do {
        for (auto& x : set) x = random_mask(rng, cells, 1, cells);
      } while (set[0] == set[1] || set[1] == set[2] || set[0] == set[2]);
      fill_permuted_rows(rng, set, m);
      break;
    }
  }
  return m;
}

inline std::vector<int> mask_cells(std::uint32_t m) {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i)
    if (m & (1u << i)) out.push_back(i);
  return out;
}

inline std::optional<RealizedMatrix> realize_pair(const AbstractStructure& s, RpmConfig c, Rng& rng) {
  const int cells = grid_cells(c);
  std::array<std::uint32_t, 9> masks{};
  if (auto r = s.find_pair(PairAttribute::Position); r && c != RpmConfig::Center) {
    masks = mask_rows(rng, r->pair_relation(), cells);
  } else if (auto n = s.find_pair(PairAttribute::Number); n && c != RpmConfig::Center) {
    const Cells counts = scalar_rows(rng, n->pair_relation(), 1, cells);
    for (std::size_t i = 0; i < 9; ++i) masks[i] = random_mask(rng, cells, counts[i], counts[i]);
  } else if (c == RpmConfig::Center) {
    masks.fill(1u);
  } else {
    for (auto& m : masks) m = random_mask(rng, cells, 1, cells);
  }

  // Uniform per-panel type/size/color, stored as 0-based levels.
  auto attribute_levels = [&](PairAttribute a, int levels) -> Cells {
    Cells v{};
    if (auto r = s.find_pair(a)) {
      if (a == PairAttribute::Type) {
        v = scalar_rows(rng, r->pair_relation(), 0, levels - 1);
      } else {
        v = scalar_rows(rng, r->pair_relation(), 1, levels);
        for (int& x : v) x -= 1;
      }
    } else {
      for (int& x : v) x = uniform_int(rng, 0, levels - 1);
    }
    return v;
  };
  const Cells types = attribute_levels(PairAttribute::Type, kTypeLevels);
  const Cells sizes = attribute_levels(PairAttribute::Size, kSizeLevels);
  const Cells colors = attribute_levels(PairAttribute::Color, kColorLevels);

  RealizedMatrix m;
  for (std::size_t i = 0; i < 9; ++i) {
    for (int pos : mask_cells(masks[i])) {
      m.panels[i].objects.push_back(PanelObject{static_cast<std::uint8_t>(pos), static_cast<std::uint8_t>(types[i]),
                                                static_cast<std::uint8_t>(sizes[i]),
                                                static_cast<std::uint8_t>(colors[i])});
    }
    m.panels[i].normalize();
  }
  return m;
}

inline std::optional<RealizedMatrix> realize_triple(const AbstractStructure& s, RpmConfig c, Rng& rng) {
  // Per-panel value sets (bitmask over levels) for governed attributes.
  auto value_sets = [&](TripleAttribute a, int levels) -> std::optional<std::array<std::uint32_t, 9>> {
    auto r = s.find_triple(a);
    if (!r) return std::nullopt;
    std::array<std::uint32_t, 9> sets{};
    switch (r->triple_relation()) {
      case TripleRelation::Progression: {
        const Cells v = scalar_rows(rng, PairRelation::Progression, 0, levels - 1);
        for (std::size_t i = 0; i < 9; ++i) sets[i] = 1u << v[i];
        break;
      }
      case TripleRelation::ConsistentUnion: {
        Cells v{};
        fill_permuted_rows(rng, three_distinct(rng, 0, levels - 1), v);
        for (std::size_t i = 0; i < 9; ++i) sets[i] = 1u << v[i];
        break;
      }
      default:
        for (int row = 0; row < 3; ++row) {
          std::uint32_t a1, b1, out;
          do {
            a1 = random_mask(rng, levels, 1, 2);
            b1 = random_mask(rng, levels, 1, 2);
            out = r->triple_relation() == TripleRelation::Xor  ? (a1 ^ b1)
                  : r->triple_relation() == TripleRelation::Or ? (a1 | b1)
                                                                : (a1 & b1);
          } while (out == 0);
          sets[static_cast<std::size_t>(row * 3)] = a1;
          sets[static_cast<std::size_t>(row * 3 + 1)] = b1;
          sets[static_cast<std::size_t>(row * 3 + 2)] = out;
        }
    }
    return sets;
  };
  const auto type_sets = value_sets(TripleAttribute::Type, kTypeLevels);
  const auto size_sets = value_sets(TripleAttribute::Size, kSizeLevels);
  const auto color_sets = value_sets(TripleAttribute::Color, kColorLevels);

  // Each panel needs at least as many objects as the largest value set it shows.
  std::array<int, 9> need{};
  for (std::size_t i = 0; i < 9; ++i)
    for (const auto& sets : {type_sets, size_sets, color_sets})
      if (sets) need[i] = std::max(need[i], static_cast<int>(mask_cells((*sets)[i]).size()));
  auto row_need = [&](int row) { return std::max({need[row * 3], need[row * 3 + 1], need[row * 3 + 2], 1}); };
  const int all_need = std::max({row_need(0), row_need(1), row_need(2)});
  constexpr int max_draws = 10000;

  constexpr int cells = 9;
  std::array<std::uint32_t, 9> masks{};

  if (auto r = s.find_triple(TripleAttribute::Position)) {
    switch (r->triple_relation()) {
      case TripleRelation::Progression: {
        const int d = uniform_int(rng, 1, cells - 1);
        for (int row = 0; row < 3; ++row) {
          std::uint32_t x;
          do {
            x = random_mask(rng, cells, row_need(row), 4);
          } while (rotate(x, d, cells) == x);
          for (int col = 0; col < 3; ++col) masks[static_cast<std::size_t>(row * 3 + col)] = rotate(x, col * d, cells);
        }
        break;
      }
      case TripleRelation::Xor:
      case TripleRelation::Or:
      case TripleRelation::And:
        for (int row = 0; row < 3; ++row) {
          std::uint32_t a, b, out;
          const auto [na, nb, no] = std::array<int, 3>{need[row * 3], need[row * 3 + 1], need[row * 3 + 2]};
          int draws = 0;
          do {
            if (++draws > max_draws) return std::nullopt;
            a = random_mask(rng, cells, std::max(na, 1), 5);
            b = random_mask(rng, cells, std::max(nb, 1), 5);
            out = r->triple_relation() == TripleRelation::Xor  ? (a ^ b)
                  : r->triple_relation() == TripleRelation::Or ? (a | b)
                                                                : (a & b);
          } while (out == 0 || std::popcount(out) < no);
          masks[static_cast<std::size_t>(row * 3)] = a;
          masks[static_cast<std::size_t>(row * 3 + 1)] = b;
          masks[static_cast<std::size_t>(row * 3 + 2)] = out;
        }
        break;
      case TripleRelation::ConsistentUnion: {
        std::array<std::uint32_t, 3> set{};
        do {
          for (auto& x : set) x = random_mask(rng, cells, all_need, 5);
        } while (set[0] == set[1] || set[1] == set[2] || set[0] == set[2]);
        fill_permuted_rows(rng, set, masks);
        break;
      }
    }
  } else if (auto n = s.find_triple(TripleAttribute::Number)) {
    Cells counts{};
    if (n->triple_relation() == TripleRelation::Progression) {
      counts = scalar_rows(rng, PairRelation::Progression, 1, 6);
    } else {
      fill_permuted_rows(rng, three_distinct(rng, 1, 6), counts);
    }
    for (std::size_t i = 0; i < 9; ++i) {
      if (counts[i] < need[i]) return std::nullopt;
      masks[i] = random_mask(rng, cells, counts[i], counts[i]);
    }
  } else {
    for (std::size_t i = 0; i < 9; ++i) masks[i] = random_mask(rng, cells, std::max(need[i], 1), 6);
  }

  // Values for n objects covering every member of `set` at least once.
  auto assign = [&](std::size_t n, const std::optional<std::array<std::uint32_t, 9>>& sets, std::size_t panel,
                    int levels) -> std::optional<std::vector<int>> {
    std::vector<int> out(n);
    if (!sets) {
      for (int& x : out) x = uniform_int(rng, 0, levels - 1);
      return out;
    }
    const auto members = mask_cells((*sets)[panel]);
    if (members.size() > n) return std::nullopt;
    for (std::size_t i = 0; i < n; ++i) out[i] = i < members.size() ? members[i] : pick(rng, members);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  };

  RealizedMatrix m;
  for (std::size_t i = 0; i < 9; ++i) {
    const auto positions = mask_cells(masks[i]);
    const auto t = assign(positions.size(), type_sets, i, kTypeLevels);
    const auto sz = assign(positions.size(), size_sets, i, kSizeLevels);
    const auto col = assign(positions.size(), color_sets, i, kColorLevels);
    if (!t || !sz || !col) return std::nullopt;
    for (std::size_t k = 0; k < positions.size(); ++k) {
      m.panels[i].objects.push_back(PanelObject{static_cast<std::uint8_t>(positions[k]),
                                                static_cast<std::uint8_t>((*t)[k]), static_cast<std::uint8_t>((*sz)[k]),
                                                static_cast<std::uint8_t>((*col)[k])});
    }
    m.panels[i].normalize();
  }
  if (uniform_int(rng, 0, 1) == 1) {
    m.orientation = Orientation::Columns;
    std::array<PanelSpec, 9> t;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t col = 0; col < 3; ++col) t[col * 3 + r] = m.panels[r * 3 + col];
    m.panels = std::move(t);
  }
  (void)c;
  return m;
}

/// Attributes a distractor may perturb: those named by the structure that
/// have more than one admissible value in this config.
inline std::vector<std::uint8_t> perturbable_attributes(const AbstractStructure& s, RpmConfig c) {
  std::vector<std::uint8_t> out;
  for (const Rule& r : s.rules()) {
    if (r.grammar == Grammar::PairStyle && c == RpmConfig::Center &&
        (r.pair_attribute() == PairAttribute::Number || r.pair_attribute() == PairAttribute::Position))
      continue;
    if (std::find(out.begin(), out.end(), r.attribute) == out.end()) out.push_back(r.attribute);
  }
  return out;
}

/// Shape-grid appearance attributes no rule talks about. Distractors may
/// vary these on top of a governed perturbation, which keeps them wrong but
/// gives enough distinct panels for one-rule structures.
inline std::vector<std::uint8_t> free_attributes(const AbstractStructure& s, RpmConfig c) {
  std::vector<std::uint8_t> out;
  if (grammar_of(c) != Grammar::TripleStyle) return out;
  for (auto a : {TripleAttribute::Size, TripleAttribute::Type, TripleAttribute::Color})
    if (!s.find_triple(a)) out.push_back(static_cast<std::uint8_t>(a));
  return out;
}

inline std::uint8_t different_level(Rng& rng, std::uint8_t current, int levels) {
  int v;
  do {
    v = uniform_int(rng, 0, levels - 1);
  } while (v == current);
  return static_cast<std::uint8_t>(v);
}

inline void perturb_pair(PanelSpec& p, PairAttribute a, RpmConfig c, Rng& rng) {
  const int cells = grid_cells(c);
  const PanelObject proto = p.objects.front();
  auto place = [&](std::uint32_t mask) {
    p.objects.clear();
    for (int pos : mask_cells(mask)) {
      PanelObject o = proto;
      o.position = static_cast<std::uint8_t>(pos);
      p.objects.push_back(o);
    }
  };
  switch (a) {
    case PairAttribute::Type: {
      const auto v = different_level(rng, proto.type, kTypeLevels);
      for (auto& o : p.objects) o.type = v;
      break;
    }
    case PairAttribute::Size: {
      const auto v = different_level(rng, proto.size, kSizeLevels);
      for (auto& o : p.objects) o.size = v;
      break;
    }
    case PairAttribute::Color: {
      const auto v = different_level(rng, proto.color, kColorLevels);
      for (auto& o : p.objects) o.color = v;
      break;
    }
    case PairAttribute::Number: {
      int n;
      do {
        n = uniform_int(rng, 1, cells);
      } while (n == static_cast<int>(p.count()));
      place(random_mask(rng, cells, n, n));
      break;
    }
    case PairAttribute::Position: {
      std::uint32_t m;
      do {
        m = random_mask(rng, cells, 1, cells);
      } while (m == p.position_mask());
      place(m);
      break;
    }
  }
  p.normalize();
}

inline void perturb_triple(PanelSpec& p, TripleAttribute a, Rng& rng) {
  constexpr int cells = 9;
  auto free_cells = [&] {
    std::vector<int> out;
    for (int i = 0; i < cells; ++i)
      if (!(p.position_mask() & (1u << i))) out.push_back(i);
    return out;
  };
  auto random_object = [&]() -> PanelObject& {
    return p.objects[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(p.count()) - 1))];
  };
  switch (a) {
    case TripleAttribute::Number: {
      const auto free = free_cells();
      const bool grow = p.count() <= 1 || (!free.empty() && uniform_int(rng, 0, 1) == 1);
      if (grow && !free.empty()) {
        PanelObject o = random_object();
        o.position = static_cast<std::uint8_t>(pick(rng, free));
        p.objects.push_back(o);
      } else if (p.count() > 1) {
        p.objects.erase(p.objects.begin() + uniform_int(rng, 0, static_cast<int>(p.count()) - 1));
      }
      break;
    }
    case TripleAttribute::Position: {
      const auto free = free_cells();
      if (free.empty()) {
        p.objects.pop_back();
      } else {
        random_object().position = static_cast<std::uint8_t>(pick(rng, free));
      }
      break;
    }
    default: {
      auto field = [a](PanelObject& o) -> std::uint8_t& {
        return a == TripleAttribute::Type ? o.type : a == TripleAttribute::Size ? o.size : o.color;
      };
      const int levels = a == TripleAttribute::Type ? kTypeLevels : a == TripleAttribute::Size ? kSizeLevels : kColorLevels;
      const std::uint8_t first = field(p.objects.front());
      const bool uniform = std::all_of(p.objects.begin(), p.objects.end(),
                                       [&](PanelObject& o) { return field(o) == first; });
      if (uniform && (p.count() == 1 || uniform_int(rng, 0, 1) == 0)) {
        const auto v = different_level(rng, first, levels);
        for (auto& o : p.objects) field(o) = v;
      } else {
        auto& o = random_object();
        field(o) = different_level(rng, field(o), levels);
      }
    }
  }
  p.normalize();
}

}  // namespace gen_detail

/// Rules the given config can produce: a subset of enumerate_rule_space.
inline std::vector<Rule> active_rule_space(RpmConfig c) {
  std::vector<Rule> out;
  if (grammar_of(c) == Grammar::PairStyle) {
    for (std::size_t a = 0; a < kPairAttributes; ++a)
      for (auto rel : gen_detail::pair_relations_for(c, static_cast<PairAttribute>(a)))
        out.push_back(Rule::pair(rel, static_cast<PairAttribute>(a)));
  } else {
    for (std::size_t a = 0; a < kTripleAttributes; ++a)
      for (auto rel : gen_detail::triple_relations_for(static_cast<TripleAttribute>(a)))
        out.push_back(Rule::triple(rel, ObjectKind::Shape, static_cast<TripleAttribute>(a)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Samples a structure for a config.
///
/// Center: one rule for each of the five attributes (Number and Position are
/// Constant). Grid2x2: one rule for either Number or Position, plus Type,
/// Size and Color. ShapeGrid: 1-4 shape rules on distinct attributes, at
/// most one of number/position.
inline AbstractStructure sample_structure(RpmConfig c, Rng& rng) {
  std::vector<Rule> rules;
  if (grammar_of(c) == Grammar::PairStyle) {
    std::vector<PairAttribute> attrs = {PairAttribute::Type, PairAttribute::Size, PairAttribute::Color};
    if (c == RpmConfig::Center) {
      attrs.push_back(PairAttribute::Number);
      attrs.push_back(PairAttribute::Position);
    } else {
      attrs.push_back(uniform_int(rng, 0, 1) ? PairAttribute::Number : PairAttribute::Position);
    }
    for (auto a : attrs) rules.push_back(Rule::pair(pick(rng, gen_detail::pair_relations_for(c, a)), a));
    return AbstractStructure(Grammar::PairStyle, std::move(rules));
  }
  std::vector<TripleAttribute> pool = {TripleAttribute::Type, TripleAttribute::Size, TripleAttribute::Color,
                                       uniform_int(rng, 0, 1) ? TripleAttribute::Number : TripleAttribute::Position};
  std::shuffle(pool.begin(), pool.end(), rng);
  const int k = uniform_int(rng, 1, 4);
  for (int i = 0; i < k; ++i) {
    const auto a = pool[static_cast<std::size_t>(i)];
    rules.push_back(Rule::triple(pick(rng, gen_detail::triple_relations_for(a)), ObjectKind::Shape, a));
  }
  return AbstractStructure(Grammar::TripleStyle, std::move(rules));
}

/// Fills a 3x3 grid so that every line satisfies every rule; ungoverned
/// attributes are random. Retries a bounded number of times.
inline RealizedMatrix realize_matrix(const AbstractStructure& s, RpmConfig c, Rng& rng,
                                     const GeneratorOptions& opts = {}) {
  if (s.empty()) throw std::invalid_argument("cannot realize an empty structure");
  if (s.grammar() != grammar_of(c)) throw std::invalid_argument("structure grammar does not match config");
  for (int attempt = 0; attempt < opts.max_matrix_retries; ++attempt) {
    auto m = grammar_of(c) == Grammar::PairStyle ? gen_detail::realize_pair(s, c, rng)
                                                 : gen_detail::realize_triple(s, c, rng);
    if (m && satisfies_all(s, m->panels, c, m->orientation)) return *m;
  }
  throw std::runtime_error("could not realize structure " + s.to_string() + " after " +
                           std::to_string(opts.max_matrix_retries) + " attempts");
}

/// Seven distractors made by perturbing 1-2 governed attributes of the
/// answer (sometimes also a free one), each rejected by the checker, all eight pairwise distinct. The
/// answer lands at a uniformly random slot.
inline CandidateSet generate_candidates(const PanelSpec& answer, const AbstractStructure& s,
                                        const std::array<PanelSpec, kContextPanels>& context, RpmConfig c,
                                        Orientation o, Rng& rng, const GeneratorOptions& opts = {}) {
  std::array<PanelSpec, 9> grid;
  std::copy(context.begin(), context.end(), grid.begin());
  grid[8] = answer;
  if (!satisfies_all(s, grid, c, o)) throw std::invalid_argument("answer panel does not satisfy the structure");
  const auto attrs = gen_detail::perturbable_attributes(s, c);
  if (attrs.empty()) throw std::runtime_error("structure has no perturbable attribute");
  const auto free = gen_detail::free_attributes(s, c);

  std::vector<PanelSpec> distractors;
  for (int attempt = 0; attempt < opts.max_candidate_attempts && distractors.size() < kChoicePanels - 1; ++attempt) {
    PanelSpec cand = answer;
    std::vector<std::uint8_t> chosen = attrs;
    std::shuffle(chosen.begin(), chosen.end(), rng);
    const int k = uniform_int(rng, 1, std::min<int>(2, static_cast<int>(chosen.size())));
    for (int i = 0; i < k; ++i) {
      if (grammar_of(c) == Grammar::PairStyle) {
        gen_detail::perturb_pair(cand, static_cast<PairAttribute>(chosen[static_cast<std::size_t>(i)]), c, rng);
      } else {
        gen_detail::perturb_triple(cand, static_cast<TripleAttribute>(chosen[static_cast<std::size_t>(i)]), rng);
      }
    }
    if (!free.empty() && uniform_int(rng, 0, 1) == 1)
      gen_detail::perturb_triple(cand, static_cast<TripleAttribute>(pick(rng, free)), rng);
    if (cand.objects.empty() || !cand.is_valid(c) || cand == answer) continue;
    if (std::find(distractors.begin(), distractors.end(), cand) != distractors.end()) continue;
    grid[8] = cand;
    if (satisfies_all(s, grid, c, o)) continue;
    distractors.push_back(std::move(cand));
  }
  if (distractors.size() < kChoicePanels - 1) {
    throw std::runtime_error("could not produce 7 distinct rejected distractors for " + s.to_string());
  }
  CandidateSet out;
  out.correct_index = uniform_int(rng, 1, static_cast<int>(kChoicePanels));
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < kChoicePanels; ++slot) {
    out.choices[slot] = slot + 1 == static_cast<std::size_t>(out.correct_index) ? answer : distractors[next++];
  }
  return out;
}

inline void render_instance(RpmInstance& inst, std::size_t panel_size) {
  inst.rasters.clear();
  inst.rasters.reserve(kPanelsPerInstance);
  for (const auto& p : inst.context) inst.rasters.push_back(rasterize(p, inst.config, panel_size));
  for (const auto& p : inst.choices) inst.rasters.push_back(rasterize(p, inst.config, panel_size));
}

/// One complete instance from its own seed.
inline RpmInstance generate_instance(RpmConfig c, std::uint64_t seed, const GeneratorOptions& opts = {}) {
  Rng rng(seed);
  RpmInstance inst;
  inst.config = c;
  inst.seed = seed;
  inst.structure = sample_structure(c, rng);
  for (int attempt = 0;; ++attempt) {
    const RealizedMatrix m = realize_matrix(inst.structure, c, rng, opts);
    std::copy_n(m.panels.begin(), kContextPanels, inst.context.begin());
    inst.orientation = m.orientation;
    try {
      const CandidateSet cands = generate_candidates(m.panels[8], inst.structure, inst.context, c, m.orientation, rng, opts);
      inst.choices = cands.choices;
      inst.correct_index = cands.correct_index;
      break;
    } catch (const std::runtime_error&) {
      if (attempt + 1 >= opts.max_matrix_retries) throw;
    }
  }
  render_instance(inst, opts.panel_size);
  return inst;
}

/// `count` instances, instance i seeded from (dataset_seed, i). The result
/// does not depend on `workers`.
inline std::vector<RpmInstance> generate_dataset(RpmConfig c, std::size_t count, std::uint64_t dataset_seed,
                                                 const GeneratorOptions& opts = {}, std::size_t workers = 1) {
  std::vector<RpmInstance> out(count);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < count; i += stride) out[i] = generate_instance(c, instance_seed(dataset_seed, i), opts);
  };
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace mlcl
