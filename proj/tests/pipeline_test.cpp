#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mlcl/pipeline/checkpoint.hpp"
#include "mlcl/pipeline/config.hpp"
#include "mlcl/pipeline/report.hpp"
#include "mlcl/pipeline/train.hpp"
#include "mlcl/rpmgen/generator.hpp"

namespace {

using namespace mlcl;

const std::vector<RpmInstance>& small_center() {
  static const auto data = generate_dataset(RpmConfig::Center, 48, 7);
  return data;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.linear_epochs = 3;
  c.linear_batch_size = 8;
  c.network.panel_hidden = 16;
  c.network.panel_dim = 8;
  c.network.line_hidden = 16;
  c.network.line_dim = 8;
  c.network.feature_hidden = 16;
  c.network.feature_dim = 8;
  c.network.proj_hidden = 16;
  c.network.proj_dim = 8;
  c.network.rule_hidden = 16;
  c.network.groups = 2;
  return c;
}

// ---------------------------------------------------------------- config

TEST(Config, ParsesKeysAndComments) {
  auto c = TrainConfig::parse("# comment\nbeta = 5\n  temperature=0.5  # trailing\nconfig = shape_grid\n");
  EXPECT_DOUBLE_EQ(c.beta, 5.0);
  EXPECT_DOUBLE_EQ(c.temperature, 0.5);
  EXPECT_EQ(c.config, RpmConfig::ShapeGrid);
  EXPECT_EQ(c.network_shape().rule_dim, 50u);
}

TEST(Config, UnknownKeyListsValidKeys) {
  TrainConfig c;
  try {
    c.apply_override("betta=3");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("betta"), std::string::npos);
    EXPECT_NE(msg.find("temperature"), std::string::npos);
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
  }
}

TEST(Config, RejectsBadValues) {
  TrainConfig c;
  EXPECT_THROW(c.apply_override("beta=ten"), ConfigError);
  EXPECT_THROW(c.apply_override("negatives=maybe"), ConfigError);
  EXPECT_THROW(c.apply_override("no_equals_sign"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("temperature = 0\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("batch_size = 1\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("just words\n"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  TrainConfig c;
  c.apply_override("learning_rate=0.000123456789");
  c.apply_override("negative_scope=others");
  c.apply_override("scheme=dense");
  const auto again = TrainConfig::parse(c.to_text());
  EXPECT_EQ(again.to_text(), c.to_text());
  EXPECT_EQ(again.learning_rate, c.learning_rate);
  EXPECT_EQ(again.negative_scope, NegativeScope::OtherInstances);
}

// ------------------------------------------------------------ checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto shape = tiny_config().network_shape();
  NetworkSet a(shape, 1), b(shape, 2);
  ASSERT_NE(parameter_hash(a.all_parameters()), parameter_hash(b.all_parameters()));
  decode_checkpoint(encode_checkpoint(a.all_parameters()), b.all_parameters());
  EXPECT_EQ(parameter_hash(a.all_parameters()), parameter_hash(b.all_parameters()));
}

TEST(Checkpoint, DetectsCorruptionAndMismatch) {
  const auto shape = tiny_config().network_shape();
  NetworkSet a(shape, 1);
  auto bytes = encode_checkpoint(a.all_parameters());
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped, a.all_parameters()), CheckpointError);
  auto cut = bytes;
  cut.resize(cut.size() - 9);
  EXPECT_THROW(decode_checkpoint(cut, a.all_parameters()), CheckpointError);

  auto wider = tiny_config();
  wider.network.feature_dim = 12;
  NetworkSet other(wider.network_shape(), 1);
  EXPECT_THROW(decode_checkpoint(bytes, other.all_parameters()), CheckpointError);
}

// ---------------------------------------------------------------- encoder

TEST(Encoder, FeaturesAreUnitRowsInChoiceOrder) {
  NetworkSet net(tiny_config().network_shape(), 3);
  const auto& inst = small_center()[0];
  const Tensor h = encode_instance(net, complete_candidates(inst));
  ASSERT_EQ(h.rows(), 8u);
  for (std::size_t r = 0; r < 8; ++r) EXPECT_NEAR(norm(h.row(r)), 1.0, 1e-12);

  // Swapping two choices swaps the corresponding feature rows.
  RpmInstance swapped = inst;
  std::swap(swapped.rasters[8], swapped.rasters[11]);
  const Tensor hs = encode_instance(net, complete_candidates(swapped));
  for (std::size_t k = 0; k < h.cols(); ++k) {
    EXPECT_DOUBLE_EQ(hs(0, k), h(3, k));
    EXPECT_DOUBLE_EQ(hs(3, k), h(0, k));
    EXPECT_DOUBLE_EQ(hs(5, k), h(5, k));
  }
}

TEST(Encoder, BatchEncodingMatchesSingleInstances) {
  NetworkSet net(tiny_config().network_shape(), 3);
  InstanceRefs three = {&small_center()[0], &small_center()[1], &small_center()[2]};
  const Tensor batch = compute_features(net, three, 2, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor one = encode_instance(net, complete_candidates(*three[i]));
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t k = 0; k < one.cols(); ++k) EXPECT_DOUBLE_EQ(batch(i * 8 + r, k), one(r, k));
  }
}

TEST(Encoder, RejectsMismatchedContexts) {
  NetworkSet net(tiny_config().network_shape(), 3);
  auto m = complete_candidates(small_center()[0]);
  m[4].rasters[2] = small_center()[1].rasters[2];
  EXPECT_THROW(encode_instance(net, m), std::invalid_argument);
  m.pop_back();
  EXPECT_THROW(encode_instance(net, m), std::invalid_argument);
}

TEST(Encoder, RuleHeadHasOneLogitPerTarget) {
  auto cfg = tiny_config();
  NetworkSet net(cfg.network_shape(), 3);
  const Tensor h = encode_instance(net, complete_candidates(small_center()[0]));
  EXPECT_EQ(rule_head_predict(net, h).size(), 38u);
  EXPECT_THROW(rule_head_predict(net, slice_rows(h, 0, 7)), std::invalid_argument);
}

TEST(Encoder, TargetNamesMatchEncodingWidths) {
  for (Grammar g : {Grammar::PairStyle, Grammar::TripleStyle})
    for (EncodingScheme s : {EncodingScheme::Dense, EncodingScheme::Sparse})
      EXPECT_EQ(target_names(g, s).size(), encoding_length(g, s));
}

// --------------------------------------------------------------- training

TEST(Split, IsStableAndNearTenPercent) {
  const auto data = generate_dataset(RpmConfig::Center, 400, 11);
  const auto a = split_dataset(data, 10);
  const auto b = split_dataset(data, 10);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.train.size() + a.validation.size(), data.size());
  EXPECT_GT(a.validation.size(), 20u);
  EXPECT_LT(a.validation.size(), 60u);
  // Membership depends on the instance, not its position.
  std::vector<RpmInstance> reversed(data.rbegin(), data.rend());
  EXPECT_EQ(split_dataset(reversed, 10).validation.size(), a.validation.size());
}

TEST(Training, PretrainIsDeterministicAndFinite) {
  const auto cfg = tiny_config();
  const auto split = split_dataset(small_center(), 20);
  NetworkSet n1(cfg.network_shape(), cfg.seed), n2(cfg.network_shape(), cfg.seed);
  const auto r1 = pretrain_contrastive(n1, split.train, split.validation, cfg);
  const auto r2 = pretrain_contrastive(n2, split.train, split.validation, cfg);
  ASSERT_EQ(r1.epochs.size(), 2u);
  EXPECT_TRUE(std::isfinite(r1.epochs[0].train_loss));
  EXPECT_GT(r1.epochs[0].train_contrastive, 0.0);
  EXPECT_GT(r1.epochs[0].train_aux, 0.0);
  EXPECT_EQ(r1.scalars(), r2.scalars());
  EXPECT_EQ(parameter_hash(n1.all_parameters()), parameter_hash(n2.all_parameters()));
}

TEST(Training, LinearEvalFreezesEncoder) {
  const auto cfg = tiny_config();
  const auto split = split_dataset(small_center(), 20);
  NetworkSet net(cfg.network_shape(), cfg.seed);
  const auto before_rule = parameter_hash(net.rule_parameters());
  const auto rep = linear_eval(net, split.train, split.validation, split.validation, cfg);
  EXPECT_EQ(rep.encoder_hash_before, rep.encoder_hash_after);
  EXPECT_EQ(before_rule, parameter_hash(net.rule_parameters()));
  EXPECT_GE(rep.test_accuracy, 0.0);
  EXPECT_LE(rep.test_accuracy, 1.0);
}

TEST(Training, SupervisedModesRun) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto split = split_dataset(small_center(), 20);
  for (auto mode : {SupervisedMode::Ce, SupervisedMode::CeAuxDense, SupervisedMode::CeAuxSparse}) {
    auto c = cfg;
    if (mode == SupervisedMode::CeAuxDense) c.scheme = EncodingScheme::Dense;
    NetworkSet net(c.network_shape(), c.seed);
    const auto rep = train_supervised(net, split.train, split.validation, split.validation, c, mode);
    EXPECT_EQ(rep.epochs.size(), 1u);
    EXPECT_EQ(rep.rule_metrics.empty(), mode == SupervisedMode::Ce) << to_string(mode);
    if (mode == SupervisedMode::Ce) {
      EXPECT_EQ(rep.epochs[0].train_aux, 0.0);
    }
  }
}

TEST(Training, DenseModeNeedsDenseHead) {
  const auto cfg = tiny_config();  // sparse head
  const auto split = split_dataset(small_center(), 20);
  NetworkSet net(cfg.network_shape(), cfg.seed);
  EXPECT_THROW(train_supervised(net, split.train, split.validation, split.validation, cfg, SupervisedMode::CeAuxDense),
               std::invalid_argument);
}

TEST(Training, DivergenceIsReported) {
  auto cfg = tiny_config();
  cfg.learning_rate = 1e300;
  cfg.epochs = 3;
  const auto split = split_dataset(small_center(), 20);
  NetworkSet net(cfg.network_shape(), cfg.seed);
  EXPECT_THROW(pretrain_contrastive(net, split.train, split.validation, cfg), DivergenceError);
}

TEST(Ablation, GridShapes) {
  EXPECT_EQ(sweep_grid().size(), 60u);
  EXPECT_EQ(directional_variants().size(), 4u);
  for (const auto& cell : sweep_grid()) EXPECT_NO_THROW(with_overrides(TrainConfig{}, cell.overrides)) << cell.label;
}

TEST(Report, JsonRoundTrip) {
  RunReport r;
  r.phase = "linear_eval";
  r.mode = "mlcl";
  r.seed = 9;
  r.epochs.push_back({1, 0.5, 0.25, 0.125, 0.0, 0.75, 0.5, 0.25});
  r.rule_metrics.push_back({"[Constant,Color]", 1.0, 0.5, 12});
  r.test_accuracy = 0.375;
  r.encoder_hash_before = r.encoder_hash_after = 0xFFFFFFFFFFFFFFFFull;
  nlohmann::json j = r;
  const auto back = j.get<RunReport>();
  EXPECT_EQ(back.scalars(), r.scalars());
  EXPECT_EQ(back.encoder_hash_after, r.encoder_hash_after);
  EXPECT_EQ(back.rule_metrics[0].rule, "[Constant,Color]");
}

}  // namespace
