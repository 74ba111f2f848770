#pragma once

// P1 finite elements for the weighted Steklov p-Laplacian:
//   J(phi) = int_Omega (|grad phi|^2 + eps^2)^(p/2)
//   G(phi) = int_boundary g |phi|^p
//   F(phi) = f r(phi),  r(s) = |s|^(gamma-2) s,  with potential (1/gamma) int f |phi|^gamma
// and the weak residual  J'(phi)/p - lambda (G'(phi)/p + F(phi)), whose zeros are the
// discrete solutions; dividing J' and G' by p keeps lambda free of derivative conventions.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/quadrature/gauss.hpp>

#include "steklov/error.hpp"
#include "steklov/mesh.hpp"
#include "steklov/util.hpp"

namespace steklov {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

namespace detail {

/// 8-point Gauss-Legendre nodes and weights on [0, 1].
struct EdgeRule {
  std::array<double, 8> x{}, w{};
  EdgeRule() {
    using G = boost::math::quadrature::gauss<double, 8>;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t k = 0; k < 4; ++k) {
      x[2 * k] = 0.5 * (1 - a[k]);
      x[2 * k + 1] = 0.5 * (1 + a[k]);
      w[2 * k] = w[2 * k + 1] = 0.5 * wt[k];
    }
  }
};

inline const EdgeRule& edge_rule() {
  static const EdgeRule rule;
  return rule;
}

/// Degree-5 seven-point rule on triangles, barycentric points with weights summing to 1.
struct TriangleRule {
  std::array<std::array<double, 3>, 7> b{};
  std::array<double, 7> w{};
  TriangleRule() {
    const double s = std::sqrt(15.0);
    const double a1 = (6 - s) / 21, a2 = (6 + s) / 21;
    const double w1 = (155 - s) / 1200, w2 = (155 + s) / 1200;
    b[0] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    w[0] = 9.0 / 40;
    b[1] = {a1, a1, 1 - 2 * a1};
    b[2] = {a1, 1 - 2 * a1, a1};
    b[3] = {1 - 2 * a1, a1, a1};
    b[4] = {a2, a2, 1 - 2 * a2};
    b[5] = {a2, 1 - 2 * a2, a2};
    b[6] = {1 - 2 * a2, a2, a2};
    for (int k = 1; k <= 3; ++k) w[k] = w1;
    for (int k = 4; k <= 6; ++k) w[k] = w2;
  }
};

inline const TriangleRule& triangle_rule() {
  static const TriangleRule rule;
  return rule;
}

/// |s|^e with 0^e = 0 for e > 0 and a tiny floor for e < 0.
inline double abs_pow(double s, double e) {
  const double a = std::abs(s);
  if (e < 0) return std::pow(std::max(a, 1e-150), e);
  return a == 0.0 ? (e == 0.0 ? 1.0 : 0.0) : std::pow(a, e);
}

}  // namespace detail

/// Precomputed P1 geometry on a mesh: basis gradients, stiffness, mass, and the H^1 Riesz
/// factorization used by dual norms and Sobolev gradients.
class FemSpace {
 public:
  struct Element {
    std::array<int, 3> v;
    double area;
    std::array<Eigen::Vector2d, 3> grad;  ///< gradients of the three hat functions
  };

  explicit FemSpace(MeshPtr mesh) : mesh_(std::move(mesh)) {
    const auto& X = mesh_->vertices();
    const std::size_t n = mesh_->num_vertices();
    elements_.reserve(mesh_->num_triangles());
    std::vector<Eigen::Triplet<double>> kt, mt;
    for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
      const auto& tri = mesh_->triangles()[t];
      Element el;
      el.v = tri;
      el.area = mesh_->triangle_areas()[t];
      for (int i = 0; i < 3; ++i) {
        const auto& P = X[tri[(i + 1) % 3]];
        const auto& Q = X[tri[(i + 2) % 3]];
        // Gradient of the hat at vertex i is the inward normal of the opposite side over 2A.
        el.grad[i] = Eigen::Vector2d(P.y - Q.y, Q.x - P.x) / (2 * el.area);
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          kt.emplace_back(tri[i], tri[j], el.area * el.grad[i].dot(el.grad[j]));
          mt.emplace_back(tri[i], tri[j], el.area / 12.0 * (i == j ? 2.0 : 1.0));
        }
      elements_.push_back(el);
    }
    K_.resize(n, n);
    M_.resize(n, n);
    K_.setFromTriplets(kt.begin(), kt.end());
    M_.setFromTriplets(mt.begin(), mt.end());
    H_ = K_ + M_;
    h1_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(H_);
    if (h1_->info() != Eigen::Success) throw ConvergenceError("H^1 Gram matrix factorization failed");
  }

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  std::size_t size() const { return mesh_->num_vertices(); }
  const std::vector<Element>& elements() const { return elements_; }
  const SpMat& stiffness() const { return K_; }
  const SpMat& mass() const { return M_; }
  const SpMat& h1_matrix() const { return H_; }

  /// Riesz representer r of a dual vector v: (K + M) r = v.
  Vec riesz(const Vec& v) const { return h1_->solve(v); }
  double h1_inner(const Vec& a, const Vec& b) const { return a.dot(H_ * b); }
  double h1_norm(const Vec& a) const { return std::sqrt(std::max(0.0, h1_inner(a, a))); }

  Eigen::Vector2d gradient(const Vec& phi, const Element& el) const {
    return phi[el.v[0]] * el.grad[0] + phi[el.v[1]] * el.grad[1] + phi[el.v[2]] * el.grad[2];
  }

  void check(const Vec& phi) const {
    if (static_cast<std::size_t>(phi.size()) != size())
      throw InvalidArgument("field has " + std::to_string(phi.size()) + " coefficients for " +
                            std::to_string(size()) + " vertices");
  }
  void check(const BoundaryFunction& g) const {
    if (g.size() != mesh_->num_boundary_edges() || g.measures() != mesh_->edge_lengths())
      throw InvalidArgument("boundary function does not belong to this mesh");
  }

 private:
  MeshPtr mesh_;
  std::vector<Element> elements_;
  SpMat K_, M_, H_;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> h1_;
};

/// Nodal coefficients of a P1 function on a mesh.
struct Field {
  MeshPtr mesh;
  Vec coefficients;
};

// ---------------------------------------------------------------------------
// Domain functional J

/// Area-weighted mean of |grad phi|.
inline double mean_gradient(const FemSpace& V, const Vec& phi) {
  double s = 0.0, a = 0.0;
  for (const auto& el : V.elements()) {
    s += el.area * V.gradient(phi, el).norm();
    a += el.area;
  }
  return s / a;
}

/// 1e-8 times the mean gradient magnitude, floored at 1e-12.
inline double default_epsilon(const FemSpace& V, const Vec& phi) {
  return 1e-8 * std::max(mean_gradient(V, phi), 1e-12);
}

inline double energy_J(const FemSpace& V, const Vec& phi, double p, double eps) {
  V.check(phi);
  double s = 0.0;
  for (const auto& el : V.elements()) {
    const double q = V.gradient(phi, el).squaredNorm() + eps * eps;
    s += el.area * (p == 2.0 ? q : std::pow(q, 0.5 * p));
  }
  return s;
}

/// <J'(phi), basis_i> = p int (|grad phi|^2 + eps^2)^((p-2)/2) grad phi . grad basis_i
inline Vec grad_J(const FemSpace& V, const Vec& phi, double p, double eps) {
  V.check(phi);
  Vec out = Vec::Zero(V.size());
  for (const auto& el : V.elements()) {
    const Eigen::Vector2d g = V.gradient(phi, el);
    const double q = g.squaredNorm() + eps * eps;
    const double k = p == 2.0 ? 1.0 : (q == 0.0 ? 0.0 : std::pow(q, 0.5 * (p - 2)));
    for (int i = 0; i < 3; ++i) out[el.v[i]] += p * el.area * k * g.dot(el.grad[i]);
  }
  return out;
}

/// Second derivative of J; uses the regularized kernel, so eps > 0 is needed for p < 2.
inline SpMat hess_J(const FemSpace& V, const Vec& phi, double p, double eps) {
  V.check(phi);
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(9 * V.elements().size());
  for (const auto& el : V.elements()) {
    const Eigen::Vector2d g = V.gradient(phi, el);
    const double q = g.squaredNorm() + eps * eps;
    double k = 1.0, k2 = 0.0;
    if (p != 2.0) {
      if (q == 0.0) throw InvalidArgument("hess_J needs eps > 0 where the gradient vanishes");
      k = std::pow(q, 0.5 * (p - 2));
      k2 = (p - 2) * std::pow(q, 0.5 * (p - 4));
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double gi = g.dot(el.grad[i]), gj = g.dot(el.grad[j]);
        tr.emplace_back(el.v[i], el.v[j], p * el.area * (k * el.grad[i].dot(el.grad[j]) + k2 * gi * gj));
      }
  }
  SpMat H(V.size(), V.size());
  H.setFromTriplets(tr.begin(), tr.end());
  return H;
}

/// int_Omega |phi|^p with a degree-5 triangle rule (exact for p = 2).
inline double domain_lp(const FemSpace& V, const Vec& phi, double p) {
  const auto& R = detail::triangle_rule();
  double s = 0.0;
  for (const auto& el : V.elements()) {
    double t = 0.0;
    for (std::size_t k = 0; k < R.w.size(); ++k) {
      const double v = R.b[k][0] * phi[el.v[0]] + R.b[k][1] * phi[el.v[1]] + R.b[k][2] * phi[el.v[2]];
      t += R.w[k] * detail::abs_pow(v, p);
    }
    s += el.area * t;
  }
  return s;
}

/// W^{1,p} surrogate (J(phi) + int |phi|^p)^(1/p) at eps = 0.
inline double w1p_norm(const FemSpace& V, const Vec& phi, double p) {
  return std::pow(energy_J(V, phi, p, 0.0) + domain_lp(V, phi, p), 1.0 / p);
}

inline double sup_norm(const Vec& phi) { return phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0; }

// ---------------------------------------------------------------------------
// Boundary integrals of |phi|^e against per-edge weights

namespace detail {

/// Edge loop: calls fn(e, a, b, length) for every boundary edge.
template <typename Fn>
void for_edges(const FemSpace& V, Fn&& fn) {
  const auto& m = V.mesh();
  for (std::size_t e = 0; e < m.num_boundary_edges(); ++e) {
    const auto [a, b] = m.boundary_edges()[e];
    fn(e, a, b, m.edge_lengths()[e]);
  }
}

/// sum_e w_e int_e |phi|^e_pow
inline double boundary_power(const FemSpace& V, const Vec& phi, const BoundaryFunction& w, double e_pow) {
  V.check(phi);
  V.check(w);
  const auto& R = edge_rule();
  double s = 0.0;
  for_edges(V, [&](std::size_t e, int a, int b, double len) {
    const double we = w.values()[e];
    if (we == 0.0) return;
    double t = 0.0;
    for (std::size_t k = 0; k < 8; ++k) t += R.w[k] * abs_pow(phi[a] * (1 - R.x[k]) + phi[b] * R.x[k], e_pow);
    s += we * len * t;
  });
  return s;
}

/// Vector with entries sum_e w_e int_e |phi|^(e_pow - 2) phi basis_i.
inline Vec boundary_power_grad(const FemSpace& V, const Vec& phi, const BoundaryFunction& w, double e_pow) {
  V.check(phi);
  V.check(w);
  const auto& R = edge_rule();
  Vec out = Vec::Zero(V.size());
  for_edges(V, [&](std::size_t e, int a, int b, double len) {
    const double we = w.values()[e];
    if (we == 0.0) return;
    double ta = 0.0, tb = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      const double v = phi[a] * (1 - R.x[k]) + phi[b] * R.x[k];
      const double r = e_pow == 2.0 ? v : abs_pow(v, e_pow - 2) * v;
      ta += R.w[k] * r * (1 - R.x[k]);
      tb += R.w[k] * r * R.x[k];
    }
    out[a] += we * len * ta;
    out[b] += we * len * tb;
  });
  return out;
}

/// Matrix with entries sum_e w_e int_e |phi|^(e_pow - 2) basis_i basis_j.
inline SpMat boundary_power_hess(const FemSpace& V, const Vec& phi, const BoundaryFunction& w, double e_pow) {
  V.check(phi);
  V.check(w);
  const auto& R = edge_rule();
  std::vector<Eigen::Triplet<double>> tr;
  for_edges(V, [&](std::size_t e, int a, int b, double len) {
    const double we = w.values()[e];
    if (we == 0.0) return;
    double aa = 0.0, ab = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      const double x = R.x[k];
      const double v = phi[a] * (1 - x) + phi[b] * x;
      const double r = e_pow == 2.0 ? 1.0 : abs_pow(v, e_pow - 2);
      aa += R.w[k] * r * (1 - x) * (1 - x);
      ab += R.w[k] * r * (1 - x) * x;
      bb += R.w[k] * r * x * x;
    }
    const double c = we * len;
    tr.emplace_back(a, a, c * aa);
    tr.emplace_back(a, b, c * ab);
    tr.emplace_back(b, a, c * ab);
    tr.emplace_back(b, b, c * bb);
  });
  SpMat H(V.size(), V.size());
  H.setFromTriplets(tr.begin(), tr.end());
  return H;
}

}  // namespace detail

inline double boundary_G(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, double p) {
  return detail::boundary_power(V, phi, g, p);
}

/// <G'(phi), basis_i> = p int g |phi|^(p-2) phi basis_i
inline Vec grad_G(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, double p) {
  return p * detail::boundary_power_grad(V, phi, g, p);
}

inline SpMat hess_G(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, double p) {
  return p * (p - 1) * detail::boundary_power_hess(V, phi, g, p);
}

/// Weighted boundary mass matrix int g basis_i basis_j, the p = 2 form of G.
inline SpMat boundary_mass(const FemSpace& V, const BoundaryFunction& g) {
  return detail::boundary_power_hess(V, Vec::Zero(V.size()), g, 2.0);
}

// ---------------------------------------------------------------------------
// Perturbation F

/// r(s) = |s|^(gamma-2) s with boundary weight f.
struct PerturbationSpec {
  double gamma = 3.0;
  BoundaryFunction f;
  std::string f_name = "default";

  /// gamma > max(2, p) keeps r' continuous; for p < 2 also gamma < p / (2 - p).
  void validate(double p) const {
    if (!(gamma > std::max(2.0, p)))
      throw InvalidArgument("perturbation exponent gamma = " + fmt17(gamma) + " must exceed max(2, p)");
    if (p < 2.0 && !(gamma < p / (2.0 - p)))
      throw InvalidArgument("perturbation exponent gamma = " + fmt17(gamma) + " must stay below p/(2-p) = " +
                            fmt17(p / (2.0 - p)));
    for (double v : f.values())
      if (!std::isfinite(v)) throw InvalidArgument("perturbation weight must be finite");
  }
};

/// Indicator of {g > 0} smoothed once along the boundary loop with weights (1, 2, 1)/4.
inline BoundaryFunction default_perturbation_weight(const BoundaryFunction& g) {
  const std::size_t n = g.size();
  std::vector<double> ind(n), out(n);
  for (std::size_t e = 0; e < n; ++e) ind[e] = g.values()[e] > 0 ? 1.0 : 0.0;
  for (std::size_t e = 0; e < n; ++e) out[e] = 0.25 * (ind[(e + n - 1) % n] + 2 * ind[e] + ind[(e + 1) % n]);
  return {std::move(out), g.measures()};
}

/// Potential (1/gamma) int f |phi|^gamma whose derivative is F.
inline double perturbation_potential(const FemSpace& V, const Vec& phi, const PerturbationSpec& s) {
  return detail::boundary_power(V, phi, s.f, s.gamma) / s.gamma;
}

/// <F(phi), basis_i> = int f r(phi) basis_i
inline Vec perturbation_F(const FemSpace& V, const Vec& phi, const PerturbationSpec& s) {
  return detail::boundary_power_grad(V, phi, s.f, s.gamma);
}

/// dF/dphi = int f r'(phi) basis_i basis_j, r'(s) = (gamma-1) |s|^(gamma-2)
inline SpMat perturbation_dF(const FemSpace& V, const Vec& phi, const PerturbationSpec& s) {
  return (s.gamma - 1) * detail::boundary_power_hess(V, phi, s.f, s.gamma);
}

// ---------------------------------------------------------------------------
// Residual and its derivatives

/// Discrete weak form: zero exactly when phi solves the perturbed problem at lambda.
/// A null spec pointer means f = 0.
inline Vec residual(const FemSpace& V, double lambda, const Vec& phi, const BoundaryFunction& g,
                    const PerturbationSpec* spec, double p, double eps) {
  Vec r = grad_J(V, phi, p, eps) / p - lambda * (grad_G(V, phi, g, p) / p);
  if (spec) r -= lambda * perturbation_F(V, phi, *spec);
  return r;
}

/// d residual / d phi
inline SpMat residual_jacobian(const FemSpace& V, double lambda, const Vec& phi, const BoundaryFunction& g,
                               const PerturbationSpec* spec, double p, double eps) {
  SpMat A = hess_J(V, phi, p, eps) / p - lambda * (hess_G(V, phi, g, p) / p);
  if (spec) A -= lambda * perturbation_dF(V, phi, *spec);
  return A;
}

/// d residual / d lambda
inline Vec residual_lambda(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, const PerturbationSpec* spec,
                           double p) {
  Vec r = -grad_G(V, phi, g, p) / p;
  if (spec) r -= perturbation_F(V, phi, *spec);
  return r;
}

/// H^1 dual norm surrogate: sqrt(v . (K + M)^-1 v). Equivalent to the W^{1,p} dual norm only
/// on a fixed mesh, so it serves ratio and trend checks.
inline double dual_norm(const FemSpace& V, const Vec& v) {
  if (v.size() == 0 || v.isZero(0.0)) return 0.0;
  return std::sqrt(std::max(0.0, v.dot(V.riesz(v))));
}

/// ||F(t d)||_* / t^(p-1); scales like t^(gamma - p) because r is homogeneous.
inline double growth_ratio(const FemSpace& V, double t, const Vec& direction, const PerturbationSpec& s, double p) {
  if (!(t > 0)) throw InvalidArgument("growth_ratio needs t > 0");
  return dual_norm(V, perturbation_F(V, t * direction, s)) / std::pow(t, p - 1);
}

/// phi scaled to unit W^{1,p} surrogate norm.
inline Vec normalize_w1p(const FemSpace& V, const Vec& phi, double p) {
  const double n = w1p_norm(V, phi, p);
  if (!(n > 0)) throw InvalidArgument("cannot normalize the zero field");
  return phi / n;
}

}  // namespace steklov
