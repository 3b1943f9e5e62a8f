#include <gtest/gtest.h>

#include "lorentz/scatterer.hpp"
#include "fields.hpp"
#include "oracles.hpp"

using namespace lorentz;

namespace {

std::shared_ptr<const PatchRegion> halfhex_patch(int gen) {
  static auto sys = std::make_shared<const SubstitutionSystem>(half_hex());
  return std::make_shared<const PatchRegion>(supertile_patch(sys, 0, gen));
}

using testfields::kStar;

double brute_min_separation(const ScattererField& f) {
  double s = 1e300;
  for (std::size_t i = 0; i < f.instances.size(); ++i)
    for (std::size_t j = i + 1; j < f.instances.size(); ++j)
      s = std::min(s, norm(f.instances[i].center - f.instances[j].center) - f.radius(static_cast<int>(i)) - f.radius(static_cast<int>(j)));
  return s;
}

}  // namespace

TEST(Assignment, ParsesRulesInOrder) {
  const Assignment a = parse_assignment_text(kStar);
  EXPECT_EQ(a.depth, 1.0);
  ASSERT_EQ(a.rules.size(), 4u);
  EXPECT_EQ(*a.rules[0].selector.star, 6);
  EXPECT_DOUBLE_EQ(a.rules[3].model->radius, 0.44);
  PatternClass c;
  c.star = 4;
  EXPECT_DOUBLE_EQ(a.lookup(c)->radius, 0.46);
}

TEST(Assignment, RejectsMalformedLines) {
  EXPECT_THROW(parse_assignment_text("class * -> circle r=0.4\n"), ParseError);
  EXPECT_THROW(parse_assignment_text("depth = 1\nclass * circle r=0.4\n"), ParseError);
  EXPECT_THROW(parse_assignment_text("depth = 1\nclass * -> circle\n"), ParseError);
  EXPECT_THROW(parse_assignment_text("depth = 1\nclass colour=3 -> circle r=0.4\n"), ParseError);
}

TEST(Field, ConstantAssignmentIsPeriodic) {
  ScattererField f = instantiate_field(halfhex_patch(5), Assignment::constant(0.0, 0.45));
  const auto t = find_lattice_translation(f, 3.0, {f.populated.center, 5.0});
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(norm(*t), 1.0, 1e-12);
}

TEST(Field, ConstantAssignmentOnTheSquareGridIsPeriodic) {
  auto sys = std::make_shared<const SubstitutionSystem>(square_grid());
  ScattererField f = instantiate_field(std::make_shared<const PatchRegion>(supertile_patch(sys, 0, 4)), Assignment::constant(0.0, 0.3));
  const auto t = find_lattice_translation(f, 2.0, {f.populated.center, 3.0});
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(norm(*t), 1.0, 1e-12);
}

TEST(Field, StarAssignmentHasNoShortPeriod) {
  ScattererField f = instantiate_field(halfhex_patch(6), parse_assignment_text(kStar));
  EXPECT_FALSE(find_lattice_translation(f, 6.0, {f.populated.center, 10.0}).has_value());
}

TEST(Field, SameClassMeansSameModel) {
  ScattererField f = instantiate_field(halfhex_patch(5), parse_assignment_text(kStar));
  std::map<int, double> r;
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    auto [it, fresh] = r.emplace(f.instances[i].cls, f.radius(static_cast<int>(i)));
    EXPECT_EQ(it->second, f.radius(static_cast<int>(i)));
  }
}

TEST(Field, NoneOmitsExactlyThatClass) {
  ScattererField all = instantiate_field(halfhex_patch(5), parse_assignment_text("depth = 1\nclass * -> circle r=0.45\n"));
  ScattererField some = instantiate_field(halfhex_patch(5), parse_assignment_text("depth = 1\nclass star=6 -> none\nclass * -> circle r=0.45\n"));
  std::size_t star6 = 0;
  for (const Instance& in : all.instances) star6 += all.classes->at(in.cls).star == 6;
  EXPECT_GT(star6, 0u);
  EXPECT_EQ(some.instances.size(), all.instances.size() - star6);
  for (const Instance& in : some.instances) EXPECT_NE(some.classes->at(in.cls).star, 6);
}

TEST(Separation, TwoUnitCirclesThreeApart) {
  const ScattererField f = ScattererField::from_instances({{0, 0}, {3, 0}}, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(min_separation(f), 1.0);
}

TEST(Separation, MatchesAllPairsOnTheStarField) {
  ScattererField f = instantiate_field(halfhex_patch(4), parse_assignment_text(kStar));
  EXPECT_NEAR(min_separation(f), brute_min_separation(f), 1e-12);
  EXPECT_NEAR(min_separation(f), 0.065, 1e-12);
}

TEST(Certificate, SquareGridWithSmallDisksHasAnAxisCorridor) {
  auto sys = std::make_shared<const SubstitutionSystem>(square_grid());
  ScattererField f = instantiate_field(std::make_shared<const PatchRegion>(supertile_patch(sys, 0, 6)), Assignment::constant(0.0, 0.2));
  const auto cert = certify_category_A(f);
  ASSERT_FALSE(cert.verified());
  const Vec2 d = cert.witness_direction;
  EXPECT_NEAR(std::max(std::abs(d.x), std::abs(d.y)), 1.0, 1e-12);
}

TEST(Certificate, StarFieldIsStableUnderDoubledResolution) {
  ScattererField f = instantiate_field(halfhex_patch(6), parse_assignment_text(kStar));
  const auto c1 = certify_category_A(f);
  ASSERT_TRUE(c1.verified());
  EXPECT_GT(c1.sep_min, 0.0);
  EXPECT_GT(c1.K_min, 0.0);
  SweepOptions fine;
  fine.n_directions = 1440;
  fine.spacing_fraction = 0.125;
  ScattererField g = instantiate_field(halfhex_patch(6), parse_assignment_text(kStar));
  const auto c2 = certify_category_A(g, fine);
  ASSERT_TRUE(c2.verified());
  EXPECT_NEAR(c2.M, c1.M, 0.05 * c1.M);
  EXPECT_NEAR(c1.K_min, 1.0 / 0.475, 1e-12);
  EXPECT_NEAR(c1.K_max, 1.0 / 0.44, 1e-12);
}

TEST(Certificate, OverlapIsANoCornersViolation) {
  ScattererField f = instantiate_field(halfhex_patch(4), Assignment::constant(0.0, 0.55));
  try {
    certify_category_A(f);
    FAIL() << "expected DegenerateField";
  } catch (const DegenerateField& e) {
    EXPECT_NE(std::string(e.what()).find("no-corners"), std::string::npos);
  }
}

TEST(Chart, UnitCircle) {
  const ChartPoint c = circle_chart({2, 3}, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(c.point.x, 3.0);
  EXPECT_DOUBLE_EQ(c.point.y, 3.0);
  EXPECT_DOUBLE_EQ(c.curvature, 1.0);
  const ScattererField f = ScattererField::from_instances({{0, 0}}, {1.0});
  EXPECT_DOUBLE_EQ(f.perimeter(0), 2 * kPi);
}

TEST(Chart, CircleCurvatureIsInverseRadius) {
  for (double r : {0.3, 0.45, 2.0}) EXPECT_DOUBLE_EQ(circle_chart({0, 0}, r, 0.7).curvature, 1.0 / r);
}

TEST(Spline, CurvatureMatchesFiniteDifferences) {
  std::vector<double> p;
  for (int k = 0; k < 24; ++k) p.push_back(0.5 + 0.06 * std::cos(2 * kTwoPi * k / 24) + 0.03 * std::sin(3 * kTwoPi * k / 24));
  const SplineScatterer s(p);
  const double h = 1e-4;
  for (int k = 0; k < 50; ++k) {
    const double rho = s.perimeter() * (k + 0.37) / 50;
    const Vec2 a = s.chart(rho - h).point, b = s.chart(rho).point, c = s.chart(rho + h).point;
    const double fd = norm((a - b * 2.0 + c) / (h * h));
    EXPECT_NEAR(s.chart(rho).curvature, fd, 1e-6 * 1e2) << rho;
    // Unit speed in arclength.
    EXPECT_NEAR(norm(c - a) / (2 * h), 1.0, 1e-7);
  }
  EXPECT_LT(s.curvature_jump_at_knots(), 1e-6);
  EXPECT_GT(s.min_curvature(), 0.0);
}
