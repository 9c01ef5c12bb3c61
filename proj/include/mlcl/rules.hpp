#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mlcl {

/// Pair-style rules are [relation, attribute] (optionally tagged with a
/// substructure); triple-style rules are [relation, object, attribute].
enum class Grammar : std::uint8_t { PairStyle = 0, TripleStyle = 1 };

enum class PairRelation : std::uint8_t { Constant, Progression, Arithmetic, DistributeThree };
enum class PairAttribute : std::uint8_t { Number, Position, Type, Size, Color };

enum class TripleRelation : std::uint8_t { Progression, Xor, Or, And, ConsistentUnion };
enum class ObjectKind : std::uint8_t { Shape, Line };
enum class TripleAttribute : std::uint8_t { Size, Type, Color, Position, Number };

inline constexpr std::size_t kPairRelations = 4;
inline constexpr std::size_t kPairAttributes = 5;
inline constexpr std::size_t kPairSubstructures = 2;
inline constexpr std::size_t kTripleRelations = 5;
inline constexpr std::size_t kObjectKinds = 2;
inline constexpr std::size_t kTripleAttributes = 5;

inline constexpr std::array<std::string_view, kPairRelations> kPairRelationNames = {
    "Constant", "Progression", "Arithmetic", "Distribute_Three"};
inline constexpr std::array<std::string_view, kPairAttributes> kPairAttributeNames = {"Number", "Position", "Type",
                                                                                      "Size", "Color"};
inline constexpr std::array<std::string_view, kTripleRelations> kTripleRelationNames = {
    "progression", "XOR", "OR", "AND", "consistent_union"};
inline constexpr std::array<std::string_view, kObjectKinds> kObjectNames = {"shape", "line"};
inline constexpr std::array<std::string_view, kTripleAttributes> kTripleAttributeNames = {"size", "type", "color",
                                                                                          "position", "number"};

inline std::string_view to_string(Grammar g) { return g == Grammar::PairStyle ? "pair" : "triple"; }

inline Grammar parse_grammar(std::string_view s) {
  if (s == "pair" || s == "PairStyle") return Grammar::PairStyle;
  if (s == "triple" || s == "TripleStyle") return Grammar::TripleStyle;
  throw std::invalid_argument("unknown grammar '" + std::string(s) + "' (expected pair or triple)");
}

/// A single abstract rule. Ordering is lexicographic over
/// (grammar, substructure, relation, attribute, object).
struct Rule {
  Grammar grammar = Grammar::PairStyle;
  std::uint8_t substructure = 0;
  std::uint8_t relation = 0;
  std::uint8_t attribute = 0;
  std::uint8_t object = 0;

  static Rule pair(PairRelation r, PairAttribute a, std::uint8_t substructure = 0) {
    Rule rule{Grammar::PairStyle, substructure, static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(a), 0};
    rule.validate();
    return rule;
  }

  static Rule triple(TripleRelation r, ObjectKind o, TripleAttribute a) {
    Rule rule{Grammar::TripleStyle, 0, static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(a),
              static_cast<std::uint8_t>(o)};
    rule.validate();
    return rule;
  }

  PairRelation pair_relation() const { return static_cast<PairRelation>(relation); }
  PairAttribute pair_attribute() const { return static_cast<PairAttribute>(attribute); }
  TripleRelation triple_relation() const { return static_cast<TripleRelation>(relation); }
  TripleAttribute triple_attribute() const { return static_cast<TripleAttribute>(attribute); }
  ObjectKind object_kind() const { return static_cast<ObjectKind>(object); }

  bool is_valid() const {
    if (grammar == Grammar::PairStyle) {
      if (relation >= kPairRelations || attribute >= kPairAttributes || substructure >= kPairSubstructures) return false;
      if (object != 0) return false;
      return !(pair_relation() == PairRelation::Arithmetic && pair_attribute() == PairAttribute::Type);
    }
    return relation < kTripleRelations && attribute < kTripleAttributes && object < kObjectKinds && substructure == 0;
  }

  void validate() const {
    if (!is_valid()) throw std::invalid_argument("invalid rule " + to_string());
  }

  std::string to_string() const {
    auto name = [](auto& names, std::size_t i) -> std::string {
      return i < names.size() ? std::string(names[i]) : "?" + std::to_string(i);
    };
    if (grammar == Grammar::PairStyle) {
      std::string s = "[" + name(kPairRelationNames, relation) + "," + name(kPairAttributeNames, attribute) + "]";
      if (substructure != 0) s += "@" + std::to_string(substructure);
      return s;
    }
    return "[" + name(kTripleRelationNames, relation) + "," + name(kObjectNames, object) + "," +
           name(kTripleAttributeNames, attribute) + "]";
  }

  friend auto operator<=>(const Rule&, const Rule&) = default;
};

inline std::size_t max_rules(Grammar g) { return g == Grammar::PairStyle ? 10 : 4; }

/// A deduplicated, sorted set of rules from one grammar.
class AbstractStructure {
 public:
  AbstractStructure() = default;
  AbstractStructure(Grammar g, std::vector<Rule> rules) : grammar_(g), rules_(std::move(rules)) {
    for (const Rule& r : rules_) {
      if (r.grammar != g) throw std::invalid_argument("structure mixes grammars: " + r.to_string());
      r.validate();
    }
    std::sort(rules_.begin(), rules_.end());
    rules_.erase(std::unique(rules_.begin(), rules_.end()), rules_.end());
  }

  Grammar grammar() const { return grammar_; }
  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }

  bool contains(const Rule& r) const { return std::binary_search(rules_.begin(), rules_.end(), r); }

  /// Rules governing the given pair-style attribute in the given substructure.
  std::optional<Rule> find_pair(PairAttribute a, std::uint8_t substructure = 0) const {
    for (const Rule& r : rules_)
      if (r.pair_attribute() == a && r.substructure == substructure) return r;
    return std::nullopt;
  }

  std::optional<Rule> find_triple(TripleAttribute a, ObjectKind o = ObjectKind::Shape) const {
    for (const Rule& r : rules_)
      if (r.triple_attribute() == a && r.object_kind() == o) return r;
    return std::nullopt;
  }

  AbstractStructure united(const AbstractStructure& other) const {
    if (other.grammar_ != grammar_ && !other.empty() && !empty()) {
      throw std::invalid_argument("cannot unite structures from different grammars");
    }
    std::vector<Rule> all = rules_;
    all.insert(all.end(), other.rules_.begin(), other.rules_.end());
    return AbstractStructure(empty() ? other.grammar_ : grammar_, std::move(all));
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < rules_.size(); ++i) s += (i ? "," : "") + rules_[i].to_string();
    return s + "}";
  }

  friend bool operator==(const AbstractStructure&, const AbstractStructure&) = default;

 private:
  Grammar grammar_ = Grammar::PairStyle;
  std::vector<Rule> rules_;
};

enum class EncodingScheme : std::uint8_t { Dense = 0, Sparse = 1 };

inline std::string_view to_string(EncodingScheme s) { return s == EncodingScheme::Dense ? "dense" : "sparse"; }

inline EncodingScheme parse_scheme(std::string_view s) {
  if (s == "dense") return EncodingScheme::Dense;
  if (s == "sparse") return EncodingScheme::Sparse;
  throw std::invalid_argument("unknown encoding scheme '" + std::string(s) + "' (expected dense or sparse)");
}

/// Fixed-length binary rule encoding.
struct MetaTarget {
  EncodingScheme scheme = EncodingScheme::Sparse;
  Grammar grammar = Grammar::PairStyle;
  std::vector<std::uint8_t> bits;

  std::size_t length() const { return bits.size(); }
  std::size_t popcount() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

  std::string to_bitstring() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const MetaTarget&, const MetaTarget&) = default;
};

inline std::size_t encoding_length(Grammar g, EncodingScheme s) {
  if (s == EncodingScheme::Dense) return g == Grammar::TripleStyle ? 12 : 9;
  return g == Grammar::TripleStyle ? 50 : 38;
}

inline MetaTarget meta_target_from_bitstring(std::string_view bits, Grammar g, EncodingScheme s) {
  if (bits.size() != encoding_length(g, s)) {
    throw std::invalid_argument("bit-string length " + std::to_string(bits.size()) + " does not match " +
                                std::string(to_string(s)) + " " + std::string(to_string(g)) + " length " +
                                std::to_string(encoding_length(g, s)));
  }
  MetaTarget m{s, g, {}};
  for (char c : bits) {
    if (c != '0' && c != '1') throw std::invalid_argument("bit-string contains non-binary character");
    m.bits.push_back(c == '1' ? 1 : 0);
  }
  return m;
}

/// Every rule of a grammar, in sparse-index order.
///
/// Pair-style: 19 valid (relation, attribute) combinations, i.e. the 4 x 5
/// grid without (Arithmetic, Type), once per substructure slot (38 total).
/// Single-substructure configurations only use slot 0.
/// Triple-style: relation-major, then attribute, then object (50 total).
inline std::vector<Rule> enumerate_rule_space(Grammar g) {
  std::vector<Rule> out;
  if (g == Grammar::PairStyle) {
    for (std::uint8_t sub = 0; sub < kPairSubstructures; ++sub)
      for (std::size_t r = 0; r < kPairRelations; ++r)
        for (std::size_t a = 0; a < kPairAttributes; ++a) {
          Rule rule{Grammar::PairStyle, sub, static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(a), 0};
          if (rule.is_valid()) out.push_back(rule);
        }
  } else {
    for (std::size_t r = 0; r < kTripleRelations; ++r)
      for (std::size_t a = 0; a < kTripleAttributes; ++a)
        for (std::size_t o = 0; o < kObjectKinds; ++o)
          out.push_back(Rule{Grammar::TripleStyle, 0, static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(a),
                             static_cast<std::uint8_t>(o)});
  }
  return out;
}

namespace detail {

inline const std::map<Rule, std::size_t>& sparse_index(Grammar g) {
  static const std::map<Rule, std::size_t> pair = [] {
    std::map<Rule, std::size_t> m;
    auto space = enumerate_rule_space(Grammar::PairStyle);
    for (std::size_t i = 0; i < space.size(); ++i) m.emplace(space[i], i);
    return m;
  }();
  static const std::map<Rule, std::size_t> triple = [] {
    std::map<Rule, std::size_t> m;
    auto space = enumerate_rule_space(Grammar::TripleStyle);
    for (std::size_t i = 0; i < space.size(); ++i) m.emplace(space[i], i);
    return m;
  }();
  return g == Grammar::PairStyle ? pair : triple;
}

// Dense slots. Triple-style: (shape, line, color, number, position, size,
// type, progression, XOR, OR, AND, consistent union). Pair-style:
// (Constant, Progression, Arithmetic, Distribute_Three, Number, Position,
// Type, Size, Color).
inline std::vector<std::size_t> dense_slots(const Rule& r) {
  if (r.grammar == Grammar::PairStyle) return {r.relation, kPairRelations + r.attribute};
  static constexpr std::array<std::size_t, kTripleAttributes> attribute_slot = {5, 6, 2, 4, 3};
  return {r.object, attribute_slot[r.attribute], 7 + static_cast<std::size_t>(r.relation)};
}

}  // namespace detail

inline std::size_t sparse_index_of(const Rule& r) { return detail::sparse_index(r.grammar).at(r); }

inline MetaTarget encode_dense(const AbstractStructure& s) {
  if (s.empty()) throw std::invalid_argument("cannot encode an empty structure");
  MetaTarget m{EncodingScheme::Dense, s.grammar(),
               std::vector<std::uint8_t>(encoding_length(s.grammar(), EncodingScheme::Dense), 0)};
  for (const Rule& r : s.rules())
    for (std::size_t slot : detail::dense_slots(r)) m.bits[slot] = 1;
  return m;
}

inline MetaTarget encode_sparse(const AbstractStructure& s) {
  if (s.empty()) throw std::invalid_argument("cannot encode an empty structure");
  MetaTarget m{EncodingScheme::Sparse, s.grammar(),
               std::vector<std::uint8_t>(encoding_length(s.grammar(), EncodingScheme::Sparse), 0)};
  for (const Rule& r : s.rules()) m.bits[sparse_index_of(r)] = 1;
  return m;
}

inline MetaTarget encode(const AbstractStructure& s, EncodingScheme scheme) {
  return scheme == EncodingScheme::Dense ? encode_dense(s) : encode_sparse(s);
}

inline AbstractStructure decode_sparse(const MetaTarget& m) {
  if (m.scheme == EncodingScheme::Dense) throw std::invalid_argument("dense encoding is not invertible");
  if (m.bits.size() != encoding_length(m.grammar, EncodingScheme::Sparse)) {
    throw std::invalid_argument("sparse meta-target has wrong length " + std::to_string(m.bits.size()));
  }
  const auto space = enumerate_rule_space(m.grammar);
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i] > 1) throw std::invalid_argument("meta-target bits must be 0 or 1");
    if (m.bits[i]) rules.push_back(space[i]);
  }
  if (rules.empty()) throw std::invalid_argument("sparse meta-target encodes no rules");
  return AbstractStructure(m.grammar, std::move(rules));
}

/// Two distinct structures with bit-identical dense encodings, found by
/// exhaustive search over all structures of one or two rules.
inline std::pair<AbstractStructure, AbstractStructure> find_dense_collision(Grammar g) {
  const auto space = enumerate_rule_space(g);
  std::map<std::vector<std::uint8_t>, AbstractStructure> seen;
  auto visit = [&](AbstractStructure s) -> std::optional<std::pair<AbstractStructure, AbstractStructure>> {
    auto bits = encode_dense(s).bits;
    auto [it, inserted] = seen.emplace(std::move(bits), s);
    if (!inserted && !(it->second == s)) return std::make_pair(it->second, std::move(s));
    return std::nullopt;
  };
  for (std::size_t i = 0; i < space.size(); ++i)
    if (auto hit = visit(AbstractStructure(g, {space[i]}))) return *hit;
  for (std::size_t i = 0; i < space.size(); ++i)
    for (std::size_t j = i + 1; j < space.size(); ++j)
      if (auto hit = visit(AbstractStructure(g, {space[i], space[j]}))) return *hit;
  throw std::logic_error("no dense collision among structures of size <= 2");
}

}  // namespace mlcl
