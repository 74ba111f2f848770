#pragma once

// Test-side oracles. Each one reaches its answer by a route independent of the library:
// definitions instead of sorting, different quadrature families, separate P1 assembly.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "steklov/fem_core.hpp"
#include "steklov/mesh.hpp"
#include "steklov/rearrangement.hpp"

namespace testing_support {

using steklov::BoundaryFunction;
using steklov::Mesh;
using steklov::Point;
using steklov::StepProfile;

/// Structured square with vertices jittered by up to a quarter cell; boundary vertices
/// move along their side only, corners stay fixed.
inline Mesh random_mesh(std::mt19937_64& rng, int n_min = 2, int n_max = 10) {
  std::uniform_int_distribution<int> N(n_min, n_max);
  const int n = N(rng);
  const Mesh base = steklov::make_square(n);
  std::uniform_real_distribution<double> U(-0.25 / n, 0.25 / n);
  auto v = base.vertices();
  for (auto& P : v) {
    const bool bx = P.x < 1e-12 || P.x > 1 - 1e-12;
    const bool by = P.y < 1e-12 || P.y > 1 - 1e-12;
    if (bx && by) continue;
    if (!bx) P.x += U(rng);
    if (!by) P.y += U(rng);
  }
  return Mesh::from_arrays(v, base.triangles());
}

inline BoundaryFunction random_function(const Mesh& m, std::mt19937_64& rng, double lo, double hi,
                                        double zero_fraction = 0.0) {
  std::uniform_real_distribution<double> U(lo, hi), Z(0.0, 1.0);
  std::vector<double> v(m.num_boundary_edges());
  for (double& x : v) x = Z(rng) < zero_fraction ? 0.0 : U(rng);
  return BoundaryFunction(m, v);
}

/// Random nonincreasing step profile with m steps on (0, T].
inline StepProfile random_profile(std::mt19937_64& rng, int m, double T) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> cuts(m - 1), levels(m);
  for (double& c : cuts) c = U(rng) * T;
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> b{0.0};
  for (double c : cuts)
    if (c > b.back() + 1e-9 * T && c < T * (1 - 1e-9)) b.push_back(c);
  b.push_back(T);
  levels.resize(b.size() - 1);
  for (double& l : levels) l = 5.0 * U(rng);
  std::sort(levels.begin(), levels.end(), std::greater<>());
  return StepProfile(b, levels);
}

/// alpha_f(s) by a direct sum over edges.
inline double brute_distribution(const BoundaryFunction& f, double s) {
  double a = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e)
    if (std::abs(f.values()[e]) > s) a += f.measures()[e];
  return a;
}

/// f*(t) = inf{s >= 0 : alpha_f(s) < t}; the infimum is one of 0 or the |values|.
inline double brute_rearranged_value(const BoundaryFunction& f, double t) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> cand{0.0};
  for (double v : f.values()) cand.push_back(std::abs(v));
  for (double s : cand)
    if (brute_distribution(f, s) < t) best = std::min(best, s);
  return best;
}

inline double l1(double t) { return 1.0 + std::abs(std::log(t)); }

/// (integral_0^T [t^(1/p) l1^alpha f*]^q dt/t)^(1/q) with tanh-sinh on every step, split at t = 1.
inline double lz_quasi_norm(const StepProfile& prof, double p, double q, double alpha) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double ip = std::isinf(p) ? 0.0 : 1.0 / p;
  double acc = 0.0;
  const auto& b = prof.breakpoints();
  for (std::size_t i = 0; i < prof.steps(); ++i) {
    const double v = prof.levels()[i];
    if (v == 0.0) continue;
    auto f = [&](double t) { return std::pow(t, ip * q - 1.0) * std::pow(l1(t), alpha * q); };
    std::vector<double> cuts{b[i]};
    if (b[i] < 1.0 && 1.0 < b[i + 1]) cuts.push_back(1.0);
    cuts.push_back(b[i + 1]);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      acc += std::pow(v, q) * ts.integrate(f, cuts[k], cuts[k + 1], 1e-15);
  }
  return std::pow(acc, 1.0 / q);
}

/// Same integral with f** = (1/t) integral_0^t f*, Gauss-Kronrod away from 0 and tanh-sinh near it.
inline double lz_norm_double_star(const StepProfile& prof, double p, double q, double alpha) {
  const auto& b = prof.breakpoints();
  std::vector<double> cum(b.size(), 0.0);
  for (std::size_t i = 0; i < prof.steps(); ++i) cum[i + 1] = cum[i] + prof.levels()[i] * (b[i + 1] - b[i]);
  auto fss = [&](double t) {
    std::size_t i = 0;
    while (i + 1 < b.size() - 1 && b[i + 1] < t) ++i;
    return (cum[i] + prof.levels()[i] * (t - b[i])) / t;
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  double acc = 0.0;
  std::vector<double> cuts(b.begin(), b.end());
  if (1.0 < b.back()) cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    auto f = [&](double t) { return std::pow(std::pow(t, 1.0 / p) * std::pow(l1(t), alpha) * fss(t), q) / t; };
    acc += ts.integrate(f, cuts[k], cuts[k + 1], 1e-15);
  }
  return std::pow(acc, 1.0 / q);
}

/// Central difference of a scalar functional along a direction.
inline double directional(const std::function<double(const Eigen::VectorXd&)>& F, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& d, double h) {
  return (F(x + h * d) - F(x - h * d)) / (2 * h);
}

inline Eigen::VectorXd directional_vec(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                                       const Eigen::VectorXd& x, const Eigen::VectorXd& d, double h) {
  return (F(x + h * d) - F(x - h * d)) / (2 * h);
}

/// Dense P1 stiffness and weighted boundary mass assembled from the mesh arrays alone.
struct DenseP1 {
  Eigen::MatrixXd K, B;
};

inline DenseP1 assemble_dense(const Mesh& m, const BoundaryFunction& g) {
  const std::size_t n = m.num_vertices();
  DenseP1 out{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  const auto& V = m.vertices();
  for (const auto& t : m.triangles()) {
    Eigen::Matrix3d C;
    for (int a = 0; a < 3; ++a) C.row(a) << 1.0, V[t[a]].x, V[t[a]].y;
    const double area = 0.5 * std::abs(C.determinant());
    const Eigen::Matrix3d Ci = C.inverse();  // columns: coefficients of the barycentric functions
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c)
        out.K(t[a], t[c]) += area * (Ci(1, a) * Ci(1, c) + Ci(2, a) * Ci(2, c));
  }
  const auto& E = m.boundary_edges();
  for (std::size_t e = 0; e < E.size(); ++e) {
    const double w = g.values()[e] * m.edge_lengths()[e] / 6.0;
    const int i = E[e][0], j = E[e][1];
    out.B(i, i) += 2 * w;
    out.B(j, j) += 2 * w;
    out.B(i, j) += w;
    out.B(j, i) += w;
  }
  return out;
}

struct DenseSpectrum {
  std::vector<double> eigenvalues;  ///< finite real eigenvalues, sorted
  double lambda1 = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd phi1;
};

/// K u = lambda B u by eliminating interior unknowns and a dense QZ on the boundary pencil.
/// lambda_1 is the smallest positive eigenvalue whose boundary trace keeps one sign.
inline DenseSpectrum dense_p2_oracle(const Mesh& m, const BoundaryFunction& g) {
  const auto [K, B] = assemble_dense(m, g);
  const int n = static_cast<int>(m.num_vertices());
  std::vector<int> bd = m.boundary_vertices(), in;
  std::vector<char> isb(n, 0);
  for (int v : bd) isb[v] = 1;
  for (int v = 0; v < n; ++v)
    if (!isb[v]) in.push_back(v);
  const int nb = static_cast<int>(bd.size()), ni = static_cast<int>(in.size());
  Eigen::MatrixXd Kbb(nb, nb), Kbi(nb, ni), Kii(ni, ni), Bbb(nb, nb);
  for (int a = 0; a < nb; ++a) {
    for (int c = 0; c < nb; ++c) {
      Kbb(a, c) = K(bd[a], bd[c]);
      Bbb(a, c) = B(bd[a], bd[c]);
    }
    for (int c = 0; c < ni; ++c) Kbi(a, c) = K(bd[a], in[c]);
  }
  for (int a = 0; a < ni; ++a)
    for (int c = 0; c < ni; ++c) Kii(a, c) = K(in[a], in[c]);
  Eigen::MatrixXd S = Kbb;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  if (ni > 0) {
    ldlt.compute(Kii);
    S -= Kbi * ldlt.solve(Kbi.transpose());
  }
  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges(S, Bbb, true);
  DenseSpectrum out;
  const auto alphas = ges.alphas();
  const auto betas = ges.betas();
  double best = std::numeric_limits<double>::infinity();
  int best_k = -1;
  for (int k = 0; k < nb; ++k) {
    if (std::abs(betas[k]) < 1e-12 * std::max(1.0, std::abs(alphas[k]))) continue;
    const std::complex<double> lam = alphas[k] / betas[k];
    if (std::abs(lam.imag()) > 1e-8 * std::max(1.0, std::abs(lam.real()))) continue;
    out.eigenvalues.push_back(lam.real());
    if (lam.real() > 1e-9) {
      Eigen::VectorXd u = ges.eigenvectors().col(k).real();
      const double mx = u.cwiseAbs().maxCoeff();
      const bool one_sign = (u.array() > 1e-10 * mx).all() || (u.array() < -1e-10 * mx).all();
      if (one_sign && lam.real() < best) {
        best = lam.real();
        best_k = k;
      }
    }
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  if (best_k >= 0) {
    out.lambda1 = best;
    Eigen::VectorXd ub = ges.eigenvectors().col(best_k).real();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < nb; ++a) u[bd[a]] = ub[a];
    if (ni > 0) {
      const Eigen::VectorXd ui = -ldlt.solve(Kbi.transpose() * ub);
      for (int a = 0; a < ni; ++a) u[in[a]] = ui[a];
    }
    out.phi1 = u;
  }
  return out;
}

}  // namespace testing_support
