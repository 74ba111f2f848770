#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "steklov/eigensolver.hpp"
#include "steklov/weight_catalog.hpp"
#include "support.hpp"

using namespace steklov;

namespace {

struct Setup {
  MeshPtr mesh;
  std::shared_ptr<FemSpace> V;
  BoundaryFunction g;
};

Setup box_setup(int n, const WeightSpec& w) {
  auto m = share(make_box(0.25, n));
  auto V = std::make_shared<FemSpace>(m);
  return {m, V, sample_on_boundary(w, *m)};
}

/// Random sign-indefinite weight with negative integral and positive part on a few edges.
BoundaryFunction random_admissible(const Mesh& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> v(m.num_boundary_edges());
  for (auto& x : v) x = U(rng) < 0.3 ? 1 + 2 * U(rng) : -U(rng);
  BoundaryFunction g(m, v);
  while (!(boundary_integral(g) < 0)) {
    for (auto& x : v) x -= 0.2;
    g = BoundaryFunction(m, v);
  }
  return g;
}

}  // namespace

TEST(Oracle, LibraryOracleMatchesIndependentOracle) {
  std::mt19937_64 rng(61);
  for (int k = 0; k < 8; ++k) {
    const auto m = share(testing_support::random_mesh(rng, 3, 8));
    FemSpace V(m);
    const auto g = random_admissible(*m, rng);
    const auto a = dense_oracle_p2(V, g);
    const auto b = testing_support::dense_p2_oracle(*m, g);
    ASSERT_TRUE(a.has_principal);
    EXPECT_NEAR(a.lambda1, b.lambda1, 1e-9 * b.lambda1);
    EXPECT_NEAR(a.lambda1_rayleigh, a.lambda1, 1e-8 * a.lambda1);
    EXPECT_GT(a.lambda2, a.lambda1);
  }
}

TEST(FirstEigenpair, P2AgreesWithDenseOracle) {
  std::mt19937_64 rng(62);
  for (int k = 0; k < 5; ++k) {
    const auto m = share(testing_support::random_mesh(rng, 3, 8));
    FemSpace V(m);
    const auto g = random_admissible(*m, rng);
    const auto res = first_eigenpair(V, g, 2.0);
    const auto o = testing_support::dense_p2_oracle(*m, g);
    EXPECT_NEAR(res.lambda1, o.lambda1, 1e-6 * o.lambda1);
    const double cosine = std::abs(res.phi1.coefficients.normalized().dot(o.phi1.normalized()));
    EXPECT_GT(cosine, 1 - 1e-6);
  }
  const auto s = box_setup(12, composite(example_2_3(2.0)));
  const auto res = first_eigenpair(*s.V, s.g, 2.0);
  EXPECT_NEAR(res.lambda1, testing_support::dense_p2_oracle(*s.mesh, s.g).lambda1, 1e-6 * res.lambda1);
}

TEST(FirstEigenpair, WeightScaling) {
  const auto s = box_setup(10, composite(example_2_3(2.0)));
  const double l = first_eigenpair(*s.V, s.g, 1.5).lambda1;
  for (double c : {0.5, 4.0}) {
    const BoundaryFunction gc = s.g.scaled(c);
    EigenOptions opt;
    EXPECT_NEAR(first_eigenpair(*s.V, gc, 1.5, opt).lambda1, l / c, 1e-6 * l / c);
  }
}

TEST(FirstEigenpair, RejectsInadmissibleData) {
  const auto m = share(make_box(0.25, 8));
  FemSpace V(m);
  EXPECT_THROW(first_eigenpair(V, sample_on_boundary(example_2_3(2.0), *m), 2.0), InadmissibleWeight);
  EXPECT_THROW(first_eigenpair(V, BoundaryFunction::constant(*m, 1.0), 2.0), InadmissibleWeight);
  EXPECT_THROW(first_eigenpair(V, BoundaryFunction::constant(*m, -1.0), 2.0), InadmissibleWeight);
  const auto g = sample_on_boundary(composite(example_2_3(2.0)), *m);
  EXPECT_THROW(first_eigenpair(V, g, 2.5), InvalidArgument);
  EXPECT_THROW(first_eigenpair(V, g, 1.0), InvalidArgument);
  EigenOptions none;
  none.seeds = 0;
  EXPECT_THROW(first_eigenpair(V, g, 2.0, none), InvalidArgument);
}

TEST(FirstEigenpair, PrincipalAndNormalized) {
  for (double p : {2.0, 1.5}) {
    const auto s = box_setup(12, composite(example_2_3(p == 2.0 ? 2.0 : 4.0)));
    const auto res = first_eigenpair(*s.V, s.g, p);
    EXPECT_TRUE(principality_check(res).positive);
    EXPECT_NEAR(boundary_G(*s.V, res.phi1.coefficients, s.g, p), 1.0, 1e-10);
    EXPECT_GT(res.phi1.coefficients.sum(), 0.0);
    EXPECT_NEAR(energy_J(*s.V, res.phi1.coefficients, p, res.epsilon_used), res.lambda1, 1e-9 * res.lambda1);
    EXPECT_LE(res.residual_norm, EigenOptions{}.tolerance);
  }
}

TEST(Principality, SecondEigenvectorChangesSign) {
  const auto s = box_setup(12, composite(example_2_3(2.0)));
  const auto o = dense_oracle_p2(*s.V, s.g);
  ASSERT_GT(o.phi2.size(), 0);
  const auto r = principality_check(Field{s.mesh, o.phi2});
  EXPECT_FALSE(r.positive);
  EXPECT_LT(r.min_value, 0.0);
  EXPECT_TRUE(principality_check(Field{s.mesh, -o.phi1}).positive);
  EXPECT_TRUE(principality_check(Field{s.mesh, -o.phi1}).sign_flipped);
}

TEST(FirstEigenpair, SeedsAlignAtP15) {
  const auto s = box_setup(12, composite(example_2_3(4.0)));
  const auto res = first_eigenpair(*s.V, s.g, 1.5);
  const auto probe = simplicity_isolation_probe(*s.V, s.g, 1.5, res);
  EXPECT_GE(probe.seeds_converged, 2);
  EXPECT_EQ(probe.seeds_aligned, probe.seeds_converged);
  EXPECT_FALSE(probe.isolation_reported);
  EXPECT_LT(res.seed_agreement, 1e-6);
  const auto r2 = first_eigenpair(*s.V, s.g, 2.0);
  const auto p2 = simplicity_isolation_probe(*s.V, s.g, 2.0, r2);
  EXPECT_TRUE(p2.isolation_reported);
  EXPECT_GT(p2.oracle_gap, 0.0);
}

TEST(FirstEigenpair, Deterministic) {
  const auto s = box_setup(10, composite(example_2_3(4.0)));
  EigenOptions opt;
  opt.rng_seed = 7;
  const auto a = first_eigenpair(*s.V, s.g, 1.5, opt);
  const auto b = first_eigenpair(*s.V, s.g, 1.5, opt);
  EXPECT_EQ(a.lambda1, b.lambda1);
  EXPECT_EQ(a.phi1.coefficients, b.phi1.coefficients);
}

TEST(FirstEigenpair, MinimalOverRandomFeasibleFields) {
  std::mt19937_64 rng(63);
  for (double p : {2.0, 1.5}) {
    const auto s = box_setup(10, composite(example_2_3(p == 2.0 ? 2.0 : 4.0)));
    const auto res = first_eigenpair(*s.V, s.g, p);
    std::uniform_real_distribution<double> U(-1, 1);
    int tried = 0;
    for (int k = 0; k < 500; ++k) {
      Vec phi(s.V->size());
      for (auto& x : phi) x = U(rng);
      phi += (k % 5) * res.phi1.coefficients;
      const double G = boundary_G(*s.V, phi, s.g, p);
      if (!(G > 0)) continue;
      ++tried;
      const double R = energy_J(*s.V, phi, p, res.epsilon_used) / G;
      EXPECT_GE(R, res.lambda1 * (1 - 1e-9));
      // Rayleigh quotient is 0-homogeneous.
      const double R2 = energy_J(*s.V, 3.3 * phi, p, 3.3 * res.epsilon_used) / boundary_G(*s.V, 3.3 * phi, s.g, p);
      EXPECT_NEAR(R2, R, 1e-9 * R);
    }
    EXPECT_GT(tried, 50);
  }
}

TEST(FirstEigenpair, DescentIsMonotone) {
  const auto s = box_setup(10, composite(example_2_3(4.0)));
  const auto res = first_eigenpair(*s.V, s.g, 1.5);
  for (const auto& seed : res.seeds) {
    if (!seed.converged) continue;
    EXPECT_LE(seed.max_quotient_increase, 1e-12) << seed.index;
    EXPECT_LE(seed.residual_norm, 10 * EigenOptions{}.tolerance);
  }
}

TEST(Oracle, SizeCap) {
  const auto m = share(make_square(45));  // 2116 vertices
  FemSpace V(m);
  EXPECT_THROW(dense_oracle_p2(V, BoundaryFunction::constant(*m, -1.0)), InvalidArgument);
}
