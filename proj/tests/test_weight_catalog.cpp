#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "steklov/weight_catalog.hpp"
#include "support.hpp"

using namespace steklov;

namespace {

double ts_integral(const std::function<double(double)>& f, double a, double b) {
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, a, b, 1e-14);
}

}  // namespace

TEST(CatalogProfile, PowerWeightClosedForm) {
  for (double q : {1.5, 2.0, 4.0}) {
    const auto w = example_2_3(q);
    const auto prof = analytic_rearrangement(w);
    EXPECT_DOUBLE_EQ(prof.total_measure, 2.0);
    for (double t : {1e-9, 1e-3, 0.1, 0.49})
      EXPECT_NEAR(prof(t), std::pow(2.0 / t, 1.0 / q), 1e-12 * prof(t));
    EXPECT_EQ(prof(0.5), 0.0);
    EXPECT_EQ(prof(1.9), 0.0);
  }
}

TEST(CatalogProfile, MajorantExponentFollowsDimension) {
  // N = 3, p = 2: exponent (p-1)/(N-1) = 1/2, so f* t^(1/2) is constant on the support.
  const auto prof = analytic_rearrangement(example_2_2_majorant(2.0, 0.25, 3));
  const double c = prof(1e-6) * std::sqrt(1e-6);
  for (double t : {1e-4, 1e-2, 0.2}) EXPECT_NEAR(prof(t) * std::sqrt(t), c, 1e-12 * c);
  EXPECT_DOUBLE_EQ(prof.near_zero.exponent, 0.5);
  EXPECT_DOUBLE_EQ(example_2_2_majorant(1.5).box_exponent(), 0.5);
}

TEST(CatalogProfile, LogWeightMatchesLevelSetMeasure) {
  // Distribution of |x log x|^-s on (-R, R) by bisection on x |log x| = y^(-1/s).
  const auto w = example_2_2(1.5);
  const auto prof = analytic_rearrangement(w);
  const double s = 0.5;
  for (double t : {1e-6, 1e-3, 0.05, 0.3}) {
    const double y = prof(t);
    const double target = std::pow(y, -1.0 / s);
    double lo = 0.0, hi = 0.25;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (mid * std::abs(std::log(mid)) < target ? lo : hi) = mid;
    }
    EXPECT_NEAR(2 * lo, t, 1e-12 * t);
  }
  EXPECT_THROW(analytic_rearrangement(example_2_2(1.5, 0.4)), Unsupported);
}

TEST(CatalogProfile, CircleWeightAgainstSampledMesh) {
  const auto prof = analytic_rearrangement(example_2_1());
  const auto samp = decreasing_rearrangement(sample_on_boundary(example_2_1(), make_disk(1024)));
  for (double t : {0.3, 1.0, 2.5, 4.0, 6.0}) EXPECT_NEAR(samp(t), prof(t), 0.02 * prof(t));
}

TEST(CatalogIntegral, ClosedFormsAgainstQuadrature) {
  EXPECT_NEAR(analytic_integral(example_2_1()),
              4 * ts_integral([](double th) { return 1.0 / std::sqrt(std::sin(th)); }, 0, std::numbers::pi / 2),
              1e-10);
  for (double q : {1.5, 2.0, 4.0})
    for (double R : {0.1, 0.25}) {
      const double expect = 2.0 * std::pow(R, 1.0 - 1.0 / q) * q / (q - 1.0);
      EXPECT_NEAR(analytic_integral(example_2_3(q, R)), expect, 1e-13 * expect);
    }
  const double s = 0.5;
  const double g2 = 2 * ts_integral([s](double x) { return std::pow(x * std::abs(std::log(x)), -s); }, 0, 0.25);
  EXPECT_NEAR(analytic_integral(example_2_2(1.5)), g2, 1e-9 * g2);
  EXPECT_NEAR(analytic_integral(constant_weight(3.0)), 3.0, 0);
}

TEST(CatalogSampling, BoxIntegralsAreExact) {
  for (int n : {8, 20, 64}) {
    const Mesh m = make_box(0.25, n);
    for (const auto& w : {example_2_3(2.0), example_2_3(4.0), example_2_2_majorant(1.5), example_2_2(1.5)})
      EXPECT_NEAR(boundary_integral(sample_on_boundary(w, m)), analytic_integral(w), 1e-9 * analytic_integral(w))
          << w.name << " n=" << n;
  }
}

TEST(CatalogSampling, SupportedOnBottomSideOnly) {
  const Mesh m = make_box(0.25, 10);
  const auto f = sample_on_boundary(example_2_3(2.0), m);
  const auto& X = m.vertices();
  for (std::size_t e = 0; e < f.size(); ++e) {
    const auto [a, b] = m.boundary_edges()[e];
    const bool bottom = X[a].y == 0.0 && X[b].y == 0.0;
    if (bottom)
      EXPECT_GT(f.values()[e], 0.0);
    else
      EXPECT_EQ(f.values()[e], 0.0);
  }
}

TEST(CatalogSampling, CircleIntegralConverges) {
  const double I = analytic_integral(example_2_1());
  EXPECT_NEAR(boundary_integral(sample_on_boundary(example_2_1(), make_disk(256))), I, 0.01 * I);
  EXPECT_NEAR(boundary_integral(sample_on_boundary(example_2_1(), make_disk(2048))), I, 0.002 * I);
}

TEST(CatalogSampling, DomainMismatchRejected) {
  EXPECT_THROW(sample_on_boundary(example_2_3(2.0), make_square(4)), InvalidArgument);
  EXPECT_THROW(sample_on_boundary(example_2_1(), make_box(0.25, 4)), InvalidArgument);
  EXPECT_THROW(sample_on_boundary(example_2_3(2.0, 0.3), make_box(0.25, 4)), InvalidArgument);
  EXPECT_NO_THROW(sample_on_boundary(constant_weight(2.0), make_square(3)));
}

TEST(Composite, DefaultCoefficientHalvesTheIntegral) {
  for (const auto& base : {example_2_3(2.0), example_2_3(4.0), example_2_2(1.5)}) {
    const auto w = composite(base);
    EXPECT_NEAR(analytic_integral(w), -0.5 * analytic_integral(base), 1e-12 * analytic_integral(base));
    const Mesh m = make_box(0.25, 16);
    const auto f = sample_on_boundary(w, m);
    const double ib = boundary_integral(sample_on_boundary(base, m));
    EXPECT_NEAR(boundary_integral(f), -0.5 * ib, 1e-12 * ib);
    EXPECT_NEAR(resolved_negative_coefficient(w, m), 1.5 * ib / m.perimeter(), 1e-14);
  }
  const auto g1 = composite(example_2_1());
  const Mesh d = make_disk(128);
  EXPECT_NEAR(boundary_integral(sample_on_boundary(g1, d)),
              -0.5 * boundary_integral(sample_on_boundary(example_2_1(), d)), 1e-12);
}

TEST(Composite, ExplicitCoefficientAndScale) {
  const Mesh m = make_box(0.25, 8);
  const auto w = composite(example_2_3(2.0), 0.7, 2.0);
  const auto f = sample_on_boundary(w, m);
  const auto b = sample_on_boundary(example_2_3(2.0), m);
  for (std::size_t e = 0; e < f.size(); ++e) EXPECT_DOUBLE_EQ(f.values()[e], 2.0 * b.values()[e] - 0.7);
  EXPECT_NEAR(analytic_integral(w), 2.0 * 2.0 - 0.7 * 2.0, 1e-13);
}

TEST(Composite, InvalidConstructions) {
  EXPECT_THROW(composite(constant_weight(1.0)), InvalidArgument);
  EXPECT_THROW(composite(composite(example_2_3(2.0))), InvalidArgument);
  EXPECT_THROW(composite(example_2_3(2.0), -1.0), InvalidArgument);
  EXPECT_THROW(composite(example_2_3(2.0), 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(example_2_3(1.0), InvalidArgument);
  EXPECT_THROW(example_2_2(2.0), InvalidArgument);
  EXPECT_THROW(example_2_2(1.5, 0.6), InvalidArgument);
  EXPECT_THROW(constant_weight(std::nan("")), InvalidArgument);
}

TEST(Membership, CatalogVerdicts) {
  EXPECT_EQ(catalog_membership(example_2_1(), 'F', 2.0).verdict, Verdict::non_member);
  EXPECT_EQ(catalog_membership(example_2_3(2.0), 'F', 2.0).verdict, Verdict::non_member);
  EXPECT_EQ(catalog_membership(example_2_3(4.0), 'F', 2.0).verdict, Verdict::member);
  EXPECT_EQ(catalog_membership(example_2_3(2.0), 'G', 1.0).verdict, Verdict::member);
  EXPECT_EQ(catalog_membership(example_2_2(1.5), 'F', 2.0).verdict, Verdict::member);
  EXPECT_EQ(catalog_membership(example_2_2(1.5), 'F', 2.0).method, "majorant-integral");
  EXPECT_EQ(catalog_membership(example_2_2_majorant(1.5), 'F', 2.0).verdict, Verdict::non_member);
  EXPECT_EQ(catalog_membership(constant_weight(-2.0), 'G', 1.0).verdict, Verdict::member);
  EXPECT_THROW(catalog_membership(example_2_2(1.5), 'F', 3.0), Unsupported);
  EXPECT_THROW(catalog_membership(example_2_3(2.0), 'H', 1.0), InvalidArgument);
}

TEST(Membership, CompositeInheritsBase) {
  const auto r = catalog_membership(composite(example_2_3(4.0)), 'F', 2.0);
  EXPECT_EQ(r.verdict, Verdict::member);
  EXPECT_EQ(r.method, "grid-limit(base)");
}

TEST(Admissibility, CatalogExamples) {
  EXPECT_TRUE(admissibility(composite(example_2_3(2.0)), 2.0).admissible);
  EXPECT_TRUE(admissibility(composite(example_2_3(4.0)), 1.5).admissible);
  EXPECT_TRUE(admissibility(composite(example_2_2(1.5)), 1.5).admissible);
  EXPECT_FALSE(admissibility(composite(example_2_3(2.0)), 1.5).admissible);
  EXPECT_FALSE(admissibility(composite(example_2_1()), 1.5).admissible);
  const auto raw = admissibility(example_2_3(2.0), 2.0);
  EXPECT_FALSE(raw.admissible);
  EXPECT_GT(raw.integral_g, 0.0);
  const auto neg = admissibility(constant_weight(-1.0), 2.0);
  EXPECT_FALSE(neg.gplus_nontrivial);
  EXPECT_FALSE(neg.admissible);
  EXPECT_FALSE(admissibility(constant_weight(1.0), 2.0).admissible);
  EXPECT_EQ(admissibility(composite(example_2_3(2.0)), 2.0).regime, Regime::n_equals_p);
  EXPECT_EQ(admissibility(composite(example_2_3(4.0)), 1.5).regime, Regime::n_greater_p);
}

TEST(Admissibility, ScaleInvariance) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> S(0.01, 100.0);
  for (const auto& [w, p] : {std::pair{composite(example_2_3(2.0)), 2.0}, {composite(example_2_3(4.0)), 1.5},
                             {composite(example_2_3(2.0)), 1.5}, {constant_weight(1.0), 2.0}}) {
    const auto base = admissibility(w, p);
    for (int k = 0; k < 10; ++k) {
      const double s = S(rng);
      const auto r = admissibility(scaled(w, s), p);
      EXPECT_EQ(r.admissible, base.admissible);
      EXPECT_NEAR(r.integral_g, s * base.integral_g, 1e-12 * std::abs(s * base.integral_g));
    }
  }
}

TEST(Admissibility, SampledData) {
  const Mesh m = make_box(0.25, 20);
  const auto r = admissibility(sample_on_boundary(composite(example_2_3(2.0)), m), 2.0);
  EXPECT_TRUE(r.admissible);
  EXPECT_LT(r.integral_g, 0.0);
  const auto pos = admissibility(sample_on_boundary(example_2_3(2.0), m), 2.0);
  EXPECT_FALSE(pos.admissible);
}

TEST(Admissibility, ExponentRange) {
  EXPECT_THROW(admissibility(composite(example_2_3(2.0)), 2.5), InvalidArgument);
  EXPECT_THROW(admissibility(composite(example_2_3(2.0)), 1.0), InvalidArgument);
  EXPECT_THROW(admissibility(composite(example_2_2_majorant(2.0, 0.25, 3)), 2.0, 3), Unsupported);
}

TEST(Geometry, Perimeters) {
  EXPECT_DOUBLE_EQ(domain_perimeter(example_2_1()), 2 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(domain_perimeter(example_2_3(2.0, 0.25)), 2.0);
  EXPECT_NEAR(make_box(0.25, 6).perimeter(), 2.0, 1e-14);
  EXPECT_THROW(domain_perimeter(constant_weight(1.0)), Unsupported);
}
