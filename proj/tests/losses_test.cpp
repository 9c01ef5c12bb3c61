#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mlcl/losses.hpp"
#include "mlcl/losses_oracle.hpp"
#include "mlcl/rules.hpp"
#include "mlcl/numerics/gradcheck.hpp"

namespace {

using namespace mlcl;

Tensor unit_rows(std::size_t n, std::size_t p, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Tensor t({n, p});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(p);
    for (auto& x : v) x = d(rng);
    auto u = l2_normalize(v);
    std::copy(u.begin(), u.end(), t.row(i).begin());
  }
  return t;
}

std::vector<LabelSet> random_labels(std::size_t n, std::size_t universe, std::size_t max_size, std::mt19937_64& rng) {
  std::vector<LabelSet> out(n);
  std::uniform_int_distribution<std::size_t> size(1, max_size), label(0, universe - 1);
  for (auto& l : out) {
    const std::size_t k = size(rng);
    while (l.size() < k) {
      const std::size_t x = label(rng);
      if (std::find(l.begin(), l.end(), x) == l.end()) l.push_back(x);
    }
  }
  return out;
}

ContrastBatch random_batch(std::size_t n, double tau, std::mt19937_64& rng, std::size_t max_labels = 3) {
  ContrastBatch b;
  b.z = unit_rows(n, 8, rng);
  b.z_neg = unit_rows(n * kIncorrectPerInstance, 8, rng);
  b.labelsets = random_labels(n, 6, max_labels, rng);
  b.temperature = tau;
  return b;
}

TEST(PositiveMask, IntersectionWithoutDiagonal) {
  auto m = build_positive_mask({{1, 2}, {2}, {3}, {3, 1}});
  EXPECT_FALSE(m(0, 0));
  EXPECT_TRUE(m(0, 1));
  EXPECT_TRUE(m(0, 3));
  EXPECT_FALSE(m(1, 2));
  EXPECT_TRUE(m(2, 3));
  EXPECT_EQ(m.count(0), 2u);
  EXPECT_EQ(m.count(1), 1u);
  EXPECT_THROW(build_positive_mask({{1}}), std::invalid_argument);
  EXPECT_THROW(build_positive_mask({{1}, {}}), std::invalid_argument);
}

TEST(Losses, MatchOracleOnRandomBatches) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> bsize(2, 16);
  for (double tau : {0.05, 0.1, 0.5, 1.0}) {
    for (int trial = 0; trial < 25; ++trial) {
      auto b = random_batch(bsize(rng), tau, rng);
      const double o = oracle::brute_force_mlc_oracle(b);
      EXPECT_NEAR(mlc_loss(b), o, 1e-12 * std::max(1.0, std::abs(o)));
      const double on = oracle::brute_force_mlc_oracle(b, true);
      EXPECT_NEAR(mlc_loss_with_negatives(b), on, 1e-12 * std::max(1.0, std::abs(on)));
      ContrastiveOptions other;
      other.negative_scope = NegativeScope::OtherInstances;
      other.normalization = PositiveNormalization::Literal;
      const double oo = oracle::brute_force_mlc_oracle(b, true, other);
      EXPECT_NEAR(mlc_loss_with_negatives(b, other), oo, 1e-12 * std::max(1.0, std::abs(oo)));
    }
  }
}

TEST(Losses, MlcEqualsSupconOnSingletons) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto b = random_batch(10, 0.1, rng, 1);
    EXPECT_EQ(mlc_loss(b), supcon_loss(b));
  }
}

TEST(Losses, SupconRejectsMultiLabel) {
  std::mt19937_64 rng(7);
  auto b = random_batch(4, 0.1, rng);
  b.labelsets[0] = {0, 1};
  EXPECT_THROW(supcon_loss(b), std::invalid_argument);
}

TEST(Losses, PreconditionErrors) {
  std::mt19937_64 rng(8);
  auto b = random_batch(4, 0.0, rng);
  EXPECT_THROW(mlc_loss(b), std::invalid_argument);
  b.temperature = 0.1;
  b.z(0, 0) += 0.5;
  EXPECT_THROW(mlc_loss(b), std::invalid_argument);
  b = random_batch(4, 0.1, rng);
  b.z_neg.reset();
  EXPECT_THROW(mlc_loss_with_negatives(b), std::invalid_argument);
}

TEST(Losses, NoPositivesGivesZero) {
  std::mt19937_64 rng(9);
  auto b = random_batch(5, 0.1, rng);
  b.labelsets = {{0}, {1}, {2}, {3}, {4}};
  EXPECT_EQ(mlc_loss(b), 0.0);
  EXPECT_EQ(mlc_loss_with_negatives(b), 0.0);
}

TEST(Losses, ExtraNegativesNeverDecreaseLoss) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = random_batch(8, 0.1, rng);
    EXPECT_GE(mlc_loss_with_negatives(b), mlc_loss(b));
  }
}

TEST(Losses, PermutationEquivariant) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_batch(9, 0.5, rng);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ContrastBatch p = b;
    for (std::size_t i = 0; i < 9; ++i) {
      std::copy(b.z.row(perm[i]).begin(), b.z.row(perm[i]).end(), p.z.row(i).begin());
      p.labelsets[i] = b.labelsets[perm[i]];
      for (std::size_t k = 0; k < kIncorrectPerInstance; ++k) {
        auto src = b.z_neg->row(perm[i] * kIncorrectPerInstance + k);
        std::copy(src.begin(), src.end(), p.z_neg->row(i * kIncorrectPerInstance + k).begin());
      }
    }
    EXPECT_NEAR(mlc_loss(p), mlc_loss(b), 1e-12);
    EXPECT_NEAR(mlc_loss_with_negatives(p), mlc_loss_with_negatives(b), 1e-12);
  }
}

// Gradient of the loss with respect to the similarity of one hard negative
// (the non-positive with the largest similarity to the anchor).
double hard_negative_weight(const ContrastBatch& b, double tau) {
  Graph g;
  Var z = g.constant(b.z);
  Var sim = g.variable(matmul_nt(z, z).value());
  Var scaled = scale(sim, 1.0 / tau);
  auto mask = build_positive_mask(b.labelsets);
  g.backward(masked_contrastive(scaled, std::nullopt, mask, {tau}));
  std::size_t best = 1;
  double best_sim = -2;
  for (std::size_t k = 1; k < b.z.rows(); ++k)
    if (!mask(0, k) && b.z.row(0).size() && sim.value()(0, k) > best_sim) {
      best_sim = sim.value()(0, k);
      best = k;
    }
  return std::abs(g.grad(sim.id)(0, best));
}

TEST(Losses, LowerTemperatureWeightsHardNegativesMore) {
  std::mt19937_64 rng(12);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto b = random_batch(8, 0.1, rng, 1);
    b.labelsets = {{0}, {0}, {1}, {1}, {2}, {2}, {3}, {3}};
    // Pull a negative close to the anchor to make it hard.
    std::vector<double> mix(8);
    for (std::size_t k = 0; k < 8; ++k) mix[k] = b.z(0, k) + 0.3 * b.z(3, k);
    auto u = l2_normalize(mix);
    std::copy(u.begin(), u.end(), b.z.row(3).begin());
    const double w_high = hard_negative_weight(b, 0.5);
    const double w_low = hard_negative_weight(b, 0.1);
    EXPECT_GT(w_low, w_high);
    ++checked;
  }
  EXPECT_EQ(checked, 50);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto b = random_batch(6, 0.2, rng);
  Parameter raw("z", b.z), raw_neg("z_neg", *b.z_neg);
  auto mask = build_positive_mask(b.labelsets);
  for (auto scope : {NegativeScope::AllInstances, NegativeScope::OtherInstances}) {
    ContrastiveOptions opts{0.2, PositiveNormalization::PositiveCount, scope};
    auto r = check_gradients({&raw, &raw_neg}, [&](Graph& g) {
      return contrastive_loss(l2_normalize_rows(g.parameter(raw)), l2_normalize_rows(g.parameter(raw_neg)), mask, opts);
    });
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric;
  }
}

TEST(AuxLoss, MatchesDirectBce) {
  Tensor logits = Tensor::vector({0.3, -1.2, 2.0, 0.0});
  MetaTarget t{EncodingScheme::Dense, Grammar::PairStyle, {1, 0, 1, 0}};
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double expected = -(std::log(sig(0.3)) + std::log(1 - sig(-1.2)) + std::log(sig(2.0)) + std::log(1 - sig(0.0))) / 4;
  EXPECT_NEAR(aux_loss(logits, t), expected, 1e-14);
  EXPECT_THROW(aux_loss(Tensor::vector({1, 2}), t), std::invalid_argument);
  EXPECT_TRUE(std::isfinite(aux_loss(Tensor::vector({800, -800, 800, -800}), t)));
}

TEST(AuxLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  Parameter x("x", unit_rows(3, 9, rng));
  Tensor targets({3, 9});
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = (i % 3 == 0) ? 1.0 : 0.0;
  auto r = check_gradients({&x}, [&](Graph& g) { return bce_with_logits(scale(g.parameter(x), 3.0), targets); });
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(AnswerLoss, MatchesNegativeLogSoftmax) {
  Tensor s = Tensor::vector({0.1, 0.5, -0.2, 1.0, 0.0, 0.3, -1.0, 0.7});
  double z = 0;
  for (double v : s.data()) z += std::exp(v);
  EXPECT_NEAR(ce_answer_loss(s, 4), -(1.0 - std::log(z)), 1e-14);
  EXPECT_THROW(ce_answer_loss(s, 0), std::invalid_argument);
  EXPECT_THROW(ce_answer_loss(s, 9), std::invalid_argument);
  EXPECT_THROW(ce_answer_loss(Tensor::vector({1, 2}), 1), std::invalid_argument);
}

TEST(AnswerLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  Parameter s("s", unit_rows(4, 8, rng));
  auto r = check_gradients({&s}, [&](Graph& g) { return softmax_cross_entropy(g.parameter(s), {1, 8, 3, 3}); });
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(WorkedExamples, TwoInstancesSharingALabelGiveZero) {
  std::mt19937_64 rng(21);
  ContrastBatch b{unit_rows(2, 8, rng), std::nullopt, {{0, 3}, {3}}, 0.1};
  EXPECT_NEAR(mlc_loss(b, {0.1}), 0.0, 1e-15);
}

TEST(WorkedExamples, ZeroAuxLogitsGiveLogTwo) {
  const auto t = encode_sparse(AbstractStructure(Grammar::PairStyle, {Rule::pair(PairRelation::Constant, PairAttribute::Type)}));
  EXPECT_NEAR(aux_loss(Tensor({t.length()}), t), std::log(2.0), 1e-15);
}

TEST(WorkedExamples, UniformScoresGiveLogEight) {
  Tensor s({8});
  s.fill(0.7);
  for (int c = 1; c <= 8; ++c) EXPECT_NEAR(ce_answer_loss(s, c), std::log(8.0), 1e-15);
}

TEST(CombinedLoss, WeightsAndValidation) {
  EXPECT_DOUBLE_EQ(combined_loss(1.0, 10.0, 2.0, 0.5), 7.0);
  EXPECT_DOUBLE_EQ(combined_loss(0.0, 10.0, 2.0, 0.5), 5.0);
  EXPECT_THROW(combined_loss(-1.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

}  // namespace
