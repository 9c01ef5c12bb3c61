#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "mlcl/rpmgen/dataset_io.hpp"
#include "mlcl/rpmgen/generator.hpp"
#include "mlcl/rpmgen/verify.hpp"

namespace {

using namespace mlcl;

const RpmConfig kConfigs[] = {RpmConfig::Center, RpmConfig::Grid2x2, RpmConfig::ShapeGrid};

PanelSpec single(std::uint8_t type, std::uint8_t size, std::uint8_t color) {
  return PanelSpec{{PanelObject{0, type, size, color}}};
}

// Center grid whose size follows rows (a, a+1, a+2) and everything else constant.
std::array<PanelSpec, 9> progression_grid() {
  std::array<PanelSpec, 9> g;
  for (std::uint8_t r = 0; r < 3; ++r)
    for (std::uint8_t c = 0; c < 3; ++c) g[r * 3 + c] = single(1, static_cast<std::uint8_t>(r + c), 2);
  return g;
}

TEST(Verify, PairRulesOnHandBuiltGrid) {
  auto g = progression_grid();
  using PR = PairRelation;
  using PA = PairAttribute;
  auto holds = [&](PR r, PA a) { return rule_holds(Rule::pair(r, a), g, RpmConfig::Center, Orientation::Rows); };
  EXPECT_TRUE(holds(PR::Progression, PA::Size));
  EXPECT_FALSE(holds(PR::Constant, PA::Size));
  EXPECT_TRUE(holds(PR::Constant, PA::Type));
  EXPECT_TRUE(holds(PR::Constant, PA::Color));
  EXPECT_TRUE(holds(PR::Constant, PA::Number));
  EXPECT_FALSE(holds(PR::Progression, PA::Color));
  g[8].objects[0].size = 3;
  EXPECT_FALSE(holds(PR::Progression, PA::Size));
}

TEST(Verify, DistributeThreeAndArithmetic) {
  std::array<PanelSpec, 9> g;
  const std::uint8_t colors[3][3] = {{0, 2, 4}, {2, 4, 0}, {4, 0, 2}};
  // Levels count from 1 for arithmetic: (1,1,2), (2,1,3), (1,3,4).
  const std::uint8_t sizes[3][3] = {{0, 0, 1}, {1, 0, 2}, {0, 2, 3}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g[r * 3 + c] = single(0, sizes[r][c], colors[r][c]);
  using PR = PairRelation;
  using PA = PairAttribute;
  EXPECT_TRUE(rule_holds(Rule::pair(PR::DistributeThree, PA::Color), g, RpmConfig::Center, Orientation::Rows));
  EXPECT_TRUE(rule_holds(Rule::pair(PR::Arithmetic, PA::Size), g, RpmConfig::Center, Orientation::Rows));
  g[8].objects[0].color = 0;
  EXPECT_FALSE(rule_holds(Rule::pair(PR::DistributeThree, PA::Color), g, RpmConfig::Center, Orientation::Rows));
}

TEST(Verify, EmptyStructureThrows) {
  RpmInstance inst = generate_instance(RpmConfig::Center, 1);
  inst.structure = AbstractStructure();
  EXPECT_THROW(verify(inst), std::invalid_argument);
}

class Generator : public ::testing::TestWithParam<RpmConfig> {};

TEST_P(Generator, UniqueAnswerAndConsistentMetadata) {
  const RpmConfig c = GetParam();
  const auto data = generate_dataset(c, 200, 17);
  const auto active = active_rule_space(c);
  for (const auto& inst : data) {
    ASSERT_EQ(verify(inst), std::vector<int>{inst.correct_index}) << inst.structure.to_string();
    ASSERT_EQ(inst.rasters.size(), kPanelsPerInstance);
    for (const Rule& r : inst.structure.rules())
      EXPECT_TRUE(std::binary_search(active.begin(), active.end(), r)) << r.to_string();
    std::set<std::vector<PanelObject>> distinct;
    for (const auto& p : inst.choices) {
      EXPECT_TRUE(p.is_valid(c));
      distinct.insert(p.objects);
    }
    EXPECT_EQ(distinct.size(), kChoicePanels);
  }
}

TEST_P(Generator, SeedDeterminesInstance) {
  const RpmConfig c = GetParam();
  EXPECT_EQ(generate_instance(c, 99), generate_instance(c, 99));
  EXPECT_EQ(generate_dataset(c, 12, 5, {}, 1), generate_dataset(c, 12, 5, {}, 3));
}

TEST_P(Generator, RejectsAnswerThatViolatesStructure) {
  const RpmConfig c = GetParam();
  RpmInstance inst = generate_instance(c, 3);
  Rng rng(1);
  const PanelSpec wrong = inst.choices[inst.correct_index == 1 ? 1 : 0];
  EXPECT_THROW(generate_candidates(wrong, inst.structure, inst.context, c, inst.orientation, rng),
               std::invalid_argument);
}

INSTANTIATE_TEST_SUITE_P(AllConfigs, Generator, ::testing::ValuesIn(kConfigs),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Generator, CorrectIndexRoughlyUniform) {
  const auto data = generate_dataset(RpmConfig::Center, 800, 8);
  std::array<int, 8> hist{};
  for (const auto& inst : data) ++hist[inst.answer_slot()];
  const double p = 1.0 / 8.0, n = 800.0, sd = std::sqrt(n * p * (1 - p));
  for (int h : hist) EXPECT_LE(std::abs(h - n * p), 3 * sd);
}

TEST(Generator, ActiveRuleSpaceSizes) {
  EXPECT_EQ(active_rule_space(RpmConfig::Center).size(), 13u);
  EXPECT_EQ(active_rule_space(RpmConfig::Grid2x2).size(), 19u);
  EXPECT_EQ(active_rule_space(RpmConfig::ShapeGrid).size(), 22u);
}

TEST(Generator, StructureGrammarMismatchThrows) {
  Rng rng(0);
  AbstractStructure triple(Grammar::TripleStyle,
                           {Rule::triple(TripleRelation::Or, ObjectKind::Shape, TripleAttribute::Type)});
  EXPECT_THROW(realize_matrix(triple, RpmConfig::Center, rng), std::invalid_argument);
}

TEST(Raster, ShapesUseColorIntensityOnBackground) {
  PanelSpec p = single(0, 4, 3);
  Raster r = rasterize(p, RpmConfig::Center, 28);
  ASSERT_EQ(r.pixels.size(), 28u * 28u);
  std::set<int> values(r.pixels.begin(), r.pixels.end());
  EXPECT_EQ(values, (std::set<int>{kBackground, color_intensity(3)}));
  EXPECT_EQ(r.at(0, 0), kBackground);
  EXPECT_EQ(r.at(14, 14), color_intensity(3));
}

TEST(Raster, LargerSizeCoversMorePixels) {
  auto ink = [](const Raster& r) { return std::count_if(r.pixels.begin(), r.pixels.end(), [](auto v) { return v != 0; }); };
  for (std::uint8_t t = 0; t < kTypeLevels; ++t)
    EXPECT_LT(ink(rasterize(single(t, 1, 2), RpmConfig::Center)), ink(rasterize(single(t, 4, 2), RpmConfig::Center)));
}

class DatasetIo : public ::testing::Test {
 protected:
  std::filesystem::path path = std::filesystem::temp_directory_path() / "mlcl_rpmgen_test.bin";
  void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(DatasetIo, RoundTrip) {
  for (RpmConfig c : kConfigs) {
    const auto data = generate_dataset(c, 10, 4);
    write_dataset(data, c, 28, path.string());
    const Dataset ds = read_dataset(path.string());
    EXPECT_EQ(ds.header.config, c);
    EXPECT_EQ(ds.header.count, 10u);
    EXPECT_EQ(ds.instances, data);
  }
}

TEST_F(DatasetIo, TypedErrors) {
  const auto data = generate_dataset(RpmConfig::Center, 3, 4);
  auto bytes = encode_dataset(data, RpmConfig::Center, 28);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  EXPECT_THROW(decode_dataset(truncated), DatasetTruncatedError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_dataset(bad_magic), DatasetFormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_dataset(bad_version), DatasetVersionError);

  auto corrupt = bytes;
  corrupt[bytes.size() - 200] ^= 0xFF;
  try {
    decode_dataset(corrupt);
    FAIL();
  } catch (const DatasetChecksumError& e) {
    EXPECT_EQ(e.instance, 2u);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_dataset(trailing), DatasetFormatError);

  EXPECT_THROW(read_dataset("/nonexistent/dir/none.bin"), DatasetError);
}

}  // namespace
