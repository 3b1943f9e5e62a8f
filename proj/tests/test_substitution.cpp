#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "lorentz/patch.hpp"
#include "lorentz/statistics.hpp"
#include "oracles.hpp"

using namespace lorentz;

namespace {

std::shared_ptr<const SubstitutionSystem> halfhex() {
  static auto s = std::make_shared<const SubstitutionSystem>(half_hex());
  return s;
}

std::string data_file(const std::string& rel) {
  std::ifstream in(std::string(LORENTZ_DATA_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(HalfHex, MatrixIsTheKnownSymmetricRule) {
  const std::vector<std::vector<long long>> expected{{1, 0, 1, 1, 1, 0}, {0, 1, 0, 1, 1, 1}, {1, 0, 1, 0, 1, 1},
                                                     {1, 1, 0, 1, 0, 1}, {1, 1, 1, 0, 1, 0}, {0, 1, 1, 1, 0, 1}};
  EXPECT_EQ(halfhex()->matrix(), expected);
  EXPECT_NO_THROW(validate(*halfhex()));
}

TEST(HalfHex, PerronEigenvalueIsExpansionSquared) {
  const PerronData pd = perron(halfhex()->matrix());
  EXPECT_NEAR(pd.eigenvalue, 4.0, 1e-9);
  const auto [lam, left] = oracle::power_iteration(halfhex()->matrix());
  EXPECT_NEAR(pd.eigenvalue, lam, 1e-9);
  for (std::size_t i = 0; i < left.size(); ++i) EXPECT_NEAR(pd.left[i], left[i], 1e-9);
}

TEST(ExpandPatch, OneGenerationGivesFourTiles) {
  for (int p = 0; p < 6; ++p) EXPECT_EQ(expand_patch(seed_patch(halfhex(), p), 1).size(), 4u);
}

TEST(ExpandPatch, ZeroGenerationsIsIdentity) {
  const PatchRegion s = seed_patch(halfhex(), 2);
  const PatchRegion e = expand_patch(s, 0);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e.tiles()[0].proto, 2);
  EXPECT_EQ(e.tiles()[0].translation, s.tiles()[0].translation);
}

TEST(ExpandPatch, ThreeGenerationsGiveSixtyFourTiles) { EXPECT_EQ(expand_patch(seed_patch(halfhex(), 0), 3).size(), 64u); }

TEST(ExpandPatch, TileCountsEqualMatrixPowerRows) {
  const auto R = halfhex()->matrix();
  for (int p = 0; p < 6; ++p)
    for (int g = 1; g <= 6; ++g) EXPECT_EQ(tile_counts(supertile_patch(halfhex(), p, g)), oracle::row_of_power(R, p, g)) << p << " " << g;
}

TEST(ExpandPatch, SupertilesAreValidTilings) {
  for (int p = 0; p < 6; ++p) EXPECT_NO_THROW(validate_patch(supertile_patch(halfhex(), p, 4)));
}

TEST(PatchFrequencies, SymmetricTwoByTwo) {
  const auto f = patch_frequencies({{2, 1}, {1, 2}}, {1.0, 1.0});
  EXPECT_NEAR(f[0], 0.5, 1e-12);
  EXPECT_NEAR(f[1], 0.5, 1e-12);
}

TEST(PatchFrequencies, SinglePrototileIsInverseArea) {
  const auto f = patch_frequencies({{4}}, {2.5});
  EXPECT_NEAR(f[0], 1.0 / 2.5, 1e-12);
}

TEST(PatchFrequencies, HalfHexMatchesGenerationSixCounts) {
  const PatchRegion p = supertile_patch(halfhex(), 0, 6);
  const auto counts = tile_counts(p);
  const auto freq = patch_frequencies(*halfhex());
  double area = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) area += halfhex()->prototiles[p.tiles()[i].proto].area();
  for (std::size_t i = 0; i < counts.size(); ++i) EXPECT_NEAR(counts[i] / area, freq[i], 0.02 * freq[i]) << i;
}

TEST(Primitivity, DetectsReducibleMatrix) {
  EXPECT_FALSE(is_primitive({{1, 1}, {0, 1}}));
  EXPECT_TRUE(is_primitive(halfhex()->matrix()));
  EXPECT_THROW(deviation_spectrum({{1, 1}, {0, 1}}), NonPrimitive);
}

TEST(Validate, RejectsAMissingChild) {
  SubstitutionSystem s = half_hex();
  s.rule[0].pop_back();
  EXPECT_THROW(validate(s), RuleInconsistency);
}

TEST(RuleFile, RoundTripsEveryBuiltin) {
  for (const SubstitutionSystem& s : {half_hex(), square_grid(), rhombus_product()}) {
    const SubstitutionSystem t = parse_rule_text(format_rule_file(s));
    EXPECT_EQ(t.matrix(), s.matrix());
    EXPECT_EQ(t.expansion, s.expansion);
    ASSERT_EQ(t.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      ASSERT_EQ(t.prototiles[i].polygon.size(), s.prototiles[i].polygon.size());
      for (std::size_t k = 0; k < s.prototiles[i].polygon.size(); ++k) {
        EXPECT_NEAR(t.prototiles[i].polygon[k].x, s.prototiles[i].polygon[k].x, 1e-12);
        EXPECT_NEAR(t.prototiles[i].polygon[k].y, s.prototiles[i].polygon[k].y, 1e-12);
      }
      EXPECT_EQ(t.prototiles[i].sites.size(), s.prototiles[i].sites.size());
    }
    EXPECT_NO_THROW(validate(t));
  }
}

TEST(RuleFile, ShippedFilesMatchBuiltins) {
  EXPECT_EQ(parse_rule_text(data_file("rules/halfhex.rule")).matrix(), half_hex().matrix());
  EXPECT_EQ(parse_rule_text(data_file("rules/square.rule")).matrix(), square_grid().matrix());
  EXPECT_EQ(parse_rule_text(data_file("rules/rhombus_product.rule")).matrix(), rhombus_product().matrix());
}

TEST(RuleFile, RejectsMalformedText) {
  EXPECT_THROW(parse_rule_text("expansion = two\n"), ParseError);
  std::string t = format_rule_file(half_hex());
  t.replace(t.find("expansion = 2"), 13, "expansion = 2.5");
  EXPECT_THROW(parse_rule_text(t), ParseError);
}

TEST(RhombusProduct, SpectrumIsSixteenEightEightFour) {
  const auto d = deviation_spectrum(rhombus_product().matrix());
  ASSERT_EQ(d.entries.size(), 3u);
  EXPECT_NEAR(d.perron, 16.0, 1e-9);
  EXPECT_NEAR(d.entries[1].modulus, 8.0, 1e-9);
  EXPECT_EQ(d.entries[1].multiplicity, 2);
  EXPECT_NEAR(d.entries[2].modulus, 4.0, 1e-9);
  EXPECT_NEAR(d.subleading(), 1.5, 1e-12);
  EXPECT_NO_THROW(validate_patch(supertile_patch(std::make_shared<const SubstitutionSystem>(rhombus_product()), 1, 3)));
}
