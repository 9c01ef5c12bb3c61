#include <gtest/gtest.h>

#include <random>
#include <set>
#include <string>

#include "mlcl/rules.hpp"

namespace {

using namespace mlcl;

using TR = TripleRelation;
using TA = TripleAttribute;
using PR = PairRelation;
using PA = PairAttribute;

AbstractStructure random_structure(Grammar g, std::mt19937_64& rng, std::size_t min_size, std::size_t max_size) {
  auto space = enumerate_rule_space(g);
  std::uniform_int_distribution<std::size_t> size_dist(min_size, max_size);
  std::shuffle(space.begin(), space.end(), rng);
  space.resize(size_dist(rng));
  return AbstractStructure(g, space);
}

TEST(RuleSpace, Sizes) {
  EXPECT_EQ(enumerate_rule_space(Grammar::TripleStyle).size(), 50u);
  EXPECT_EQ(enumerate_rule_space(Grammar::PairStyle).size(), 38u);
}

TEST(RuleSpace, EntriesAreDistinctAndValid) {
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle}) {
    auto space = enumerate_rule_space(g);
    std::set<Rule> unique(space.begin(), space.end());
    EXPECT_EQ(unique.size(), space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
      EXPECT_TRUE(space[i].is_valid());
      EXPECT_EQ(sparse_index_of(space[i]), i);
    }
  }
}

TEST(RuleSpace, ArithmeticTypeExcluded) {
  for (const Rule& r : enumerate_rule_space(Grammar::PairStyle))
    EXPECT_FALSE(r.pair_relation() == PR::Arithmetic && r.pair_attribute() == PA::Type) << r.to_string();
  EXPECT_THROW(Rule::pair(PR::Arithmetic, PA::Type), std::invalid_argument);
}

TEST(DenseEncoding, TripleExample) {
  AbstractStructure s(Grammar::TripleStyle, {Rule::triple(TR::Or, ObjectKind::Shape, TA::Type),
                                             Rule::triple(TR::And, ObjectKind::Line, TA::Color)});
  EXPECT_EQ(encode_dense(s).to_bitstring(), "111000100110");
  EXPECT_EQ(encode_dense(AbstractStructure(Grammar::TripleStyle, {Rule::triple(TR::Or, ObjectKind::Shape, TA::Type)}))
                .to_bitstring(),
            "100000100100");
  EXPECT_EQ(encode_dense(AbstractStructure(Grammar::TripleStyle, {Rule::triple(TR::And, ObjectKind::Line, TA::Color)}))
                .to_bitstring(),
            "011000000010");
}

TEST(DenseEncoding, PairSlots) {
  AbstractStructure s(Grammar::PairStyle, {Rule::pair(PR::Progression, PA::Size), Rule::pair(PR::Constant, PA::Number)});
  // (Constant, Progression, Arithmetic, Distribute_Three, Number, Position, Type, Size, Color)
  EXPECT_EQ(encode_dense(s).to_bitstring(), "110010010");
}

TEST(DenseEncoding, IsOrOfComponents) {
  std::mt19937_64 rng(1);
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle}) {
    for (int trial = 0; trial < 200; ++trial) {
      auto s = random_structure(g, rng, 1, 6);
      auto whole = encode_dense(s);
      std::vector<std::uint8_t> acc(whole.length(), 0);
      for (const Rule& r : s.rules()) {
        auto part = encode_dense(AbstractStructure(g, {r}));
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] |= part.bits[i];
      }
      EXPECT_EQ(whole.bits, acc);
    }
  }
}

TEST(SparseEncoding, PopcountEqualsRuleCount) {
  std::mt19937_64 rng(2);
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle}) {
    for (int trial = 0; trial < 200; ++trial) {
      auto s = random_structure(g, rng, 1, 8);
      auto m = encode_sparse(s);
      EXPECT_EQ(m.length(), encoding_length(g, EncodingScheme::Sparse));
      EXPECT_EQ(m.popcount(), s.size());
    }
  }
}

TEST(SparseEncoding, RoundTripExhaustiveUpToTwoRules) {
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle}) {
    const auto space = enumerate_rule_space(g);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < space.size(); ++i) {
      AbstractStructure one(g, {space[i]});
      ASSERT_EQ(decode_sparse(encode_sparse(one)), one);
      ++checked;
      for (std::size_t j = i + 1; j < space.size(); ++j) {
        AbstractStructure two(g, {space[i], space[j]});
        ASSERT_EQ(decode_sparse(encode_sparse(two)), two);
        ++checked;
      }
    }
    EXPECT_EQ(checked, space.size() + space.size() * (space.size() - 1) / 2);
  }
}

TEST(SparseEncoding, RoundTripRandomLarger) {
  std::mt19937_64 rng(3);
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle})
    for (int trial = 0; trial < 1000; ++trial) {
      auto s = random_structure(g, rng, 3, 12);
      ASSERT_EQ(decode_sparse(encode_sparse(s)), s) << s.to_string();
    }
}

TEST(Decode, DenseIsRejected) {
  AbstractStructure s(Grammar::TripleStyle, {Rule::triple(TR::Xor, ObjectKind::Shape, TA::Size)});
  try {
    decode_sparse(encode_dense(s));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "dense encoding is not invertible");
  }
}

TEST(Decode, WrongLengthAndEmptyRejected) {
  MetaTarget m{EncodingScheme::Sparse, Grammar::PairStyle, std::vector<std::uint8_t>(37, 0)};
  EXPECT_THROW(decode_sparse(m), std::invalid_argument);
  m.bits.assign(38, 0);
  EXPECT_THROW(decode_sparse(m), std::invalid_argument);
}

TEST(DenseCollision, FoundAndVerifiedPerGrammar) {
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle}) {
    auto [a, b] = find_dense_collision(g);
    EXPECT_FALSE(a == b);
    EXPECT_EQ(encode_dense(a), encode_dense(b)) << a.to_string() << " vs " << b.to_string();
    EXPECT_NE(encode_sparse(a), encode_sparse(b));
  }
}

TEST(DenseCollision, TripleNeedsTwoRules) {
  // Single triple-style rules set exactly one object, attribute and relation slot, so they never collide.
  auto [a, b] = find_dense_collision(Grammar::TripleStyle);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(b.size(), 2u);
}

TEST(Bitstring, ParseRoundTripAndErrors) {
  auto m = meta_target_from_bitstring("111000100110", Grammar::TripleStyle, EncodingScheme::Dense);
  EXPECT_EQ(m.to_bitstring(), "111000100110");
  EXPECT_THROW(meta_target_from_bitstring("1110", Grammar::TripleStyle, EncodingScheme::Dense), std::invalid_argument);
  EXPECT_THROW(meta_target_from_bitstring("11100010011x", Grammar::TripleStyle, EncodingScheme::Dense),
               std::invalid_argument);
}

TEST(Structure, SortedDedupedAndGrammarChecked) {
  Rule a = Rule::pair(PR::Constant, PA::Color), b = Rule::pair(PR::Progression, PA::Number);
  AbstractStructure s(Grammar::PairStyle, {b, a, b});
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.rules().front(), a);
  EXPECT_THROW(AbstractStructure(Grammar::TripleStyle, {a}), std::invalid_argument);
  EXPECT_EQ(s.to_string(), "{[Constant,Color],[Progression,Number]}");
}

}  // namespace
