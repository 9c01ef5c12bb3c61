#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mlcl/rpmgen/panel.hpp"
#include "mlcl/rules.hpp"

// Symbolic rule checker. It reads attributes off completed 3x3 grids and
// does not share code or state with the generator.

namespace mlcl {

namespace verify_detail {

using Line = std::array<std::size_t, 3>;

inline std::array<Line, 3> lines(Orientation o) {
  if (o == Orientation::Rows) return {{{0, 1, 2}, {3, 4, 5}, {6, 7, 8}}};
  return {{{0, 3, 6}, {1, 4, 7}, {2, 5, 8}}};
}

inline std::uint32_t rotate_mask(std::uint32_t m, int shift, int cells) {
  std::uint32_t out = 0;
  for (int i = 0; i < cells; ++i)
    if (m & (1u << i)) out |= 1u << ((i + shift) % cells);
  return out;
}

// Per-panel value of an attribute; nullopt when the attribute is undefined
// for that panel (e.g. mixed sizes where one uniform size is required).
using Values = std::array<std::optional<std::int64_t>, 9>;

inline bool all_defined(const Values& v) {
  return std::all_of(v.begin(), v.end(), [](const auto& x) { return x.has_value(); });
}

inline bool scalar_constant(const Values& v, const std::array<Line, 3>& ls) {
  for (const auto& l : ls)
    if (*v[l[0]] != *v[l[1]] || *v[l[1]] != *v[l[2]]) return false;
  return true;
}

inline bool scalar_progression(const Values& v, const std::array<Line, 3>& ls) {
  const std::int64_t d = *v[ls[0][1]] - *v[ls[0][0]];
  if (d == 0) return false;
  for (const auto& l : ls)
    if (*v[l[1]] - *v[l[0]] != d || *v[l[2]] - *v[l[1]] != d) return false;
  return true;
}

inline bool scalar_arithmetic(const Values& v, const std::array<Line, 3>& ls) {
  for (int sign : {+1, -1}) {
    bool ok = true;
    for (const auto& l : ls) ok = ok && *v[l[2]] == *v[l[0]] + sign * *v[l[1]];
    if (ok) return true;
  }
  return false;
}

inline std::array<std::int64_t, 3> sorted_line(const Values& v, const Line& l) {
  std::array<std::int64_t, 3> s{*v[l[0]], *v[l[1]], *v[l[2]]};
  std::sort(s.begin(), s.end());
  return s;
}

// Every line is a permutation of one shared multiset; with `distinct` the
// multiset must hold three different values.
inline bool permuted_lines(const Values& v, const std::array<Line, 3>& ls, bool distinct) {
  const auto first = sorted_line(v, ls[0]);
  if (distinct && (first[0] == first[1] || first[1] == first[2])) return false;
  for (const auto& l : ls)
    if (sorted_line(v, l) != first) return false;
  return true;
}

inline bool mask_progression(const Values& v, const std::array<Line, 3>& ls, int cells) {
  for (int d = 1; d < cells; ++d) {
    bool ok = true;
    for (const auto& l : ls) {
      const auto a = static_cast<std::uint32_t>(*v[l[0]]);
      const auto b = static_cast<std::uint32_t>(*v[l[1]]);
      const auto c = static_cast<std::uint32_t>(*v[l[2]]);
      ok = ok && a != b && rotate_mask(a, d, cells) == b && rotate_mask(b, d, cells) == c;
    }
    if (ok) return true;
  }
  return false;
}

enum class SetOp { Xor, Or, And, Difference };

inline std::uint32_t apply(SetOp op, std::uint32_t a, std::uint32_t b) {
  switch (op) {
    case SetOp::Xor: return a ^ b;
    case SetOp::Or: return a | b;
    case SetOp::And: return a & b;
    case SetOp::Difference: return a & ~b;
  }
  return 0;
}

inline bool set_operation(const Values& v, const std::array<Line, 3>& ls, SetOp op) {
  for (const auto& l : ls) {
    const auto a = static_cast<std::uint32_t>(*v[l[0]]);
    const auto b = static_cast<std::uint32_t>(*v[l[1]]);
    const auto c = static_cast<std::uint32_t>(*v[l[2]]);
    if (c == 0 || apply(op, a, b) != c) return false;
  }
  return true;
}

inline std::optional<std::int64_t> uniform_attribute(const PanelSpec& p, PairAttribute a) {
  if (p.objects.empty()) return std::nullopt;
  auto read = [a](const PanelObject& o) -> std::int64_t {
    switch (a) {
      case PairAttribute::Type: return o.type;
      case PairAttribute::Size: return o.size + 1;
      case PairAttribute::Color: return o.color + 1;
      default: return 0;
    }
  };
  const std::int64_t v = read(p.objects.front());
  for (const auto& o : p.objects)
    if (read(o) != v) return std::nullopt;
  return v;
}

inline Values pair_values(const std::array<PanelSpec, 9>& grid, PairAttribute a) {
  Values v;
  for (std::size_t i = 0; i < 9; ++i) {
    const PanelSpec& p = grid[i];
    switch (a) {
      case PairAttribute::Number: v[i] = static_cast<std::int64_t>(p.count()); break;
      case PairAttribute::Position:
        v[i] = p.objects.empty() ? std::nullopt : std::optional<std::int64_t>(p.position_mask());
        break;
      default: v[i] = uniform_attribute(p, a); break;
    }
  }
  return v;
}

inline bool check_pair_rule(const Rule& r, const std::array<PanelSpec, 9>& grid, RpmConfig config) {
  const auto ls = lines(Orientation::Rows);
  const Values v = pair_values(grid, r.pair_attribute());
  if (!all_defined(v)) return false;
  const bool is_mask = r.pair_attribute() == PairAttribute::Position;
  switch (r.pair_relation()) {
    case PairRelation::Constant: return scalar_constant(v, ls);
    case PairRelation::Progression:
      return is_mask ? mask_progression(v, ls, grid_cells(config)) : scalar_progression(v, ls);
    case PairRelation::Arithmetic:
      if (is_mask) return set_operation(v, ls, SetOp::Or) || set_operation(v, ls, SetOp::Difference);
      return scalar_arithmetic(v, ls);
    case PairRelation::DistributeThree: return permuted_lines(v, ls, true);
  }
  return false;
}

inline std::uint32_t value_set(const PanelSpec& p, TripleAttribute a) {
  std::uint32_t s = 0;
  for (const auto& o : p.objects) {
    switch (a) {
      case TripleAttribute::Type: s |= 1u << o.type; break;
      case TripleAttribute::Size: s |= 1u << o.size; break;
      case TripleAttribute::Color: s |= 1u << o.color; break;
      default: break;
    }
  }
  return s;
}

inline bool check_triple_rule(const Rule& r, const std::array<PanelSpec, 9>& grid, Orientation o) {
  if (r.object_kind() == ObjectKind::Line) {
    throw std::invalid_argument("line-object rules are not supported by the shape-grid checker: " + r.to_string());
  }
  const auto ls = lines(o);
  const TripleAttribute a = r.triple_attribute();
  const TripleRelation rel = r.triple_relation();
  Values v;
  for (std::size_t i = 0; i < 9; ++i) {
    const PanelSpec& p = grid[i];
    if (p.objects.empty()) {
      v[i] = std::nullopt;
      continue;
    }
    switch (a) {
      case TripleAttribute::Number:
        // Set relations see the count as a singleton set.
        v[i] = (rel == TripleRelation::Progression || rel == TripleRelation::ConsistentUnion)
                   ? static_cast<std::int64_t>(p.count())
                   : static_cast<std::int64_t>(1u << p.count());
        break;
      case TripleAttribute::Position: v[i] = p.position_mask(); break;
      default: {
        const std::uint32_t s = value_set(p, a);
        if (rel == TripleRelation::Progression || rel == TripleRelation::ConsistentUnion) {
          // Requires one value per panel.
          v[i] = popcount(s) == 1 ? std::optional<std::int64_t>(std::countr_zero(s)) : std::nullopt;
        } else {
          v[i] = s;
        }
      }
    }
  }
  if (!all_defined(v)) return false;
  switch (rel) {
    case TripleRelation::Progression:
      return a == TripleAttribute::Position ? mask_progression(v, ls, 9) : scalar_progression(v, ls);
    case TripleRelation::Xor: return set_operation(v, ls, SetOp::Xor);
    case TripleRelation::Or: return set_operation(v, ls, SetOp::Or);
    case TripleRelation::And: return set_operation(v, ls, SetOp::And);
    case TripleRelation::ConsistentUnion: return permuted_lines(v, ls, true);
  }
  return false;
}

}  // namespace verify_detail

/// Whether one rule holds on a completed grid.
inline bool rule_holds(const Rule& r, const std::array<PanelSpec, 9>& grid, RpmConfig config, Orientation o) {
  if (r.grammar != grammar_of(config)) throw std::invalid_argument("rule grammar does not match config");
  return r.grammar == Grammar::PairStyle ? verify_detail::check_pair_rule(r, grid, config)
                                         : verify_detail::check_triple_rule(r, grid, o);
}

inline bool satisfies_all(const AbstractStructure& s, const std::array<PanelSpec, 9>& grid, RpmConfig config,
                          Orientation o) {
  if (s.empty()) throw std::invalid_argument("cannot verify against an empty structure");
  for (const Rule& r : s.rules())
    if (!rule_holds(r, grid, config, o)) return false;
  return true;
}

struct CandidateReport {
  int index = 0;  // 1-based
  std::vector<std::pair<Rule, bool>> rules;
  bool satisfies_all = false;

  std::vector<Rule> violated() const {
    std::vector<Rule> out;
    for (const auto& [r, ok] : rules)
      if (!ok) out.push_back(r);
    return out;
  }
};

/// Per-candidate, per-rule evaluation of an instance.
inline std::vector<CandidateReport> verify_report(const RpmInstance& inst) {
  if (inst.structure.empty()) throw std::invalid_argument("cannot verify against an empty structure");
  std::vector<CandidateReport> out;
  for (std::size_t slot = 0; slot < kChoicePanels; ++slot) {
    const auto grid = completed_grid(inst, slot);
    CandidateReport rep{static_cast<int>(slot + 1), {}, true};
    for (const Rule& r : inst.structure.rules()) {
      const bool ok = rule_holds(r, grid, inst.config, inst.orientation);
      rep.rules.emplace_back(r, ok);
      rep.satisfies_all = rep.satisfies_all && ok;
    }
    out.push_back(std::move(rep));
  }
  return out;
}

/// 1-based indices of the choices that satisfy every rule.
inline std::vector<int> verify(const RpmInstance& inst) {
  std::vector<int> out;
  for (const auto& rep : verify_report(inst))
    if (rep.satisfies_all) out.push_back(rep.index);
  return out;
}

}  // namespace mlcl
