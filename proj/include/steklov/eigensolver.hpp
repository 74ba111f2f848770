#pragma once

// First eigenpair of the weighted Steklov p-Laplacian: minimization of the Rayleigh
// quotient R = J / G over {G > 0} by H^1-preconditioned gradient descent with Armijo
// backtracking, finished by Newton's method on {residual = 0, G = 1}. For p = 2 a dense
// generalized eigensolver provides an independent oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "steklov/error.hpp"
#include "steklov/fem_core.hpp"
#include "steklov/mesh.hpp"
#include "steklov/util.hpp"

namespace steklov {

struct EigenOptions {
  int seeds = 8;
  int max_iterations = 5000;  ///< descent steps per seed
  double tolerance = 1e-9;    ///< on the dual norm of the residual at G = 1
  std::uint64_t rng_seed = 1;
  int newton_max = 30;
  std::optional<double> epsilon;  ///< default: 1e-8 * mean |grad phi| for p < 2, 0 for p = 2
};

struct SeedOutcome {
  int index = 0;
  bool feasible = false;
  bool converged = false;
  bool newton_accepted = false;
  double lambda = kInf;
  double residual_norm = kInf;
  int descent_iterations = 0;
  int newton_iterations = 0;
  /// Largest relative increase of R between accepted descent steps (0 for a monotone run).
  double max_quotient_increase = 0.0;
  Vec phi;
  std::string note;
};

struct EigenResult {
  double lambda1 = 0.0;
  Field phi1;  ///< G(phi1) = 1, positive mean
  double residual_norm = kInf;
  int seeds_used = 0;
  double seed_agreement = 0.0;  ///< max relative lambda spread across converged seeds
  double epsilon_used = 0.0;
  double p = 2.0;
  int best_seed = -1;
  std::vector<SeedOutcome> seeds;
};

namespace detail {

struct Quotient {
  double J, G, R;
};

inline Quotient quotient(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, double p, double eps) {
  const double J = energy_J(V, phi, p, eps), G = boundary_G(V, phi, g, p);
  return {J, G, G > 0 ? J / G : kInf};
}

/// Scales phi so that G(phi) = 1.
inline Vec normalize_G(const FemSpace& V, const Vec& phi, const BoundaryFunction& g, double p) {
  const double G = boundary_G(V, phi, g, p);
  if (!(G > 0)) throw InvalidArgument("field is outside the cone {G > 0}");
  return phi / std::pow(G, 1.0 / p);
}

/// Fixes the sign by a positive vertex mean.
inline Vec fix_sign(const Vec& phi) { return phi.sum() < 0 ? Vec(-phi) : phi; }

inline double alignment(const FemSpace& V, const Vec& a, const Vec& b) {
  const double na = V.h1_norm(a), nb = V.h1_norm(b);
  if (!(na > 0 && nb > 0)) return 0.0;
  return V.h1_inner(a, b) / (na * nb);
}

inline double point_segment_distance(const Point& P, const Point& A, const Point& B) {
  const double dx = B.x - A.x, dy = B.y - A.y;
  const double L2 = dx * dx + dy * dy;
  double t = L2 > 0 ? ((P.x - A.x) * dx + (P.y - A.y) * dy) / L2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(P.x - (A.x + t * dx), P.y - (A.y + t * dy));
}

/// Gaussian of the distance to supp g+, narrowed until it lies in {G > 0}.
inline std::optional<Vec> bump_seed(const FemSpace& V, const BoundaryFunction& g, double p) {
  const auto& m = V.mesh();
  std::vector<std::size_t> pos;
  for (std::size_t e = 0; e < g.size(); ++e)
    if (g.values()[e] > 0) pos.push_back(e);
  if (pos.empty()) return std::nullopt;
  const auto& X = m.vertices();
  Vec dist(V.size());
  for (std::size_t v = 0; v < V.size(); ++v) {
    double d = kInf;
    for (std::size_t e : pos) {
      const auto [a, b] = m.boundary_edges()[e];
      d = std::min(d, point_segment_distance(X[v], X[a], X[b]));
    }
    dist[v] = d;
  }
  const auto [lo, hi] = m.bounding_box();
  double sigma = 0.5 * std::hypot(hi.x - lo.x, hi.y - lo.y);
  for (int k = 0; k < 60; ++k, sigma *= 0.5) {
    Vec b = (-(dist.array() / sigma).square()).exp().matrix();
    if (boundary_G(V, b, g, p) > 0) return b;
  }
  return std::nullopt;
}

inline SpMat bordered(const SpMat& A, const Vec& col, const Vec& row, double corner) {
  const Eigen::Index n = A.rows();
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(A.nonZeros() + 2 * n + 1);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) tr.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (col[i] != 0.0) tr.emplace_back(i, n, col[i]);
    if (row[i] != 0.0) tr.emplace_back(n, i, row[i]);
  }
  tr.emplace_back(n, n, corner);
  SpMat B(n + 1, n + 1);
  B.setFromTriplets(tr.begin(), tr.end());
  return B;
}

/// Newton on {residual(lambda, phi) = 0, G(phi) = 1}. Returns false on breakdown or growth.
inline bool eigen_newton(const FemSpace& V, const BoundaryFunction& g, double p, double eps, Vec& phi, double& lambda,
                         double tol, int max_iter, int& iters, double& res_norm) {
  res_norm = dual_norm(V, residual(V, lambda, phi, g, nullptr, p, eps));
  for (iters = 0; iters < max_iter; ++iters) {
    const double G = boundary_G(V, phi, g, p);
    if (res_norm <= tol && std::abs(G - 1) <= 1e-12) return true;
    const Vec r = residual(V, lambda, phi, g, nullptr, p, eps);
    const Vec gG = grad_G(V, phi, g, p);
    const SpMat A = bordered(residual_jacobian(V, lambda, phi, g, nullptr, p, eps), -gG / p, gG, 0.0);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) return false;
    Vec rhs(r.size() + 1);
    rhs.head(r.size()) = -r;
    rhs[r.size()] = -(G - 1.0);
    const Vec dx = lu.solve(rhs);
    if (!dx.allFinite()) return false;
    phi += dx.head(r.size());
    lambda += dx[r.size()];
    const double next = dual_norm(V, residual(V, lambda, phi, g, nullptr, p, eps));
    if (!(next < 10 * res_norm + tol)) {
      res_norm = next;
      return false;
    }
    res_norm = next;
  }
  return res_norm <= tol && std::abs(boundary_G(V, phi, g, p) - 1) <= 1e-12;
}

inline SeedOutcome run_seed(const FemSpace& V, const BoundaryFunction& g, double p, double eps, Vec phi,
                            const EigenOptions& opt, int index) {
  SeedOutcome out;
  out.index = index;
  out.feasible = true;
  phi = normalize_G(V, phi, g, p);
  Quotient q = quotient(V, phi, g, p, eps);
  double alpha = 1.0;
  const double switch_tol = std::max(opt.tolerance, 1e-7);
  // Newton is tried at descent residuals 1e-3, 1e-5, ... down to switch_tol; a rejected
  // attempt resumes descent from the last accepted descent iterate.
  double stage_tol = std::max(switch_tol, 1e-3);
  int it = 0;
  bool stalled = false;
  while (true) {
    for (; it < opt.max_iterations; ++it) {
      const Vec gJ = grad_J(V, phi, p, eps), gG = grad_G(V, phi, g, p);
      // At G = 1 the quotient gradient is p * residual.
      const Vec gradR = (gJ - q.R * gG) / q.G;
      const Vec d = -V.riesz(gradR);
      const double slope = gradR.dot(d);
      const double res = std::sqrt(std::max(0.0, -slope)) / p;
      if (res <= stage_tol * std::max(1.0, q.R)) break;
      bool accepted = false;
      alpha = std::min(alpha * 2.0, 1e6);
      for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
        const Vec trial = phi + alpha * d;
        const Quotient qt = quotient(V, trial, g, p, eps);
        if (qt.G > 0 && qt.R <= q.R + 1e-4 * alpha * slope) {
          phi = normalize_G(V, trial, g, p);
          const Quotient qn = quotient(V, phi, g, p, eps);
          out.max_quotient_increase = std::max(out.max_quotient_increase, (qn.R - q.R) / q.R);
          q = qn;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        stalled = true;
        break;
      }
    }
    out.descent_iterations = it;

    // Newton polish; kept only if it stays on the minimizing branch.
    Vec phin = phi;
    double lam = q.R;
    int nit = 0;
    double nres = kInf;
    const bool ok = eigen_newton(V, g, p, eps, phin, lam, opt.tolerance, opt.newton_max, nit, nres);
    out.newton_iterations += nit;
    if (ok && lam <= q.R * (1 + 1e-8) + 1e-14 && std::abs(alignment(V, phin, phi)) >= 0.99) {
      out.newton_accepted = true;
      out.note.clear();
      phi = phin;
      out.lambda = lam;
      out.residual_norm = nres;
      break;
    }
    out.note = ok ? "newton left the minimizing branch" : "newton polish failed";
    if (stalled || it >= opt.max_iterations || stage_tol <= switch_tol) {
      out.lambda = q.R;
      out.residual_norm = dual_norm(V, residual(V, q.R, phi, g, nullptr, p, eps));
      break;
    }
    stage_tol = std::max(stage_tol * 1e-2, switch_tol);
  }
  out.phi = fix_sign(phi);
  out.converged = out.residual_norm <= opt.tolerance;
  return out;
}

}  // namespace detail

/// lambda_1 = inf { J(phi) : G(phi) = 1 } and its minimizer. Throws InadmissibleWeight when no
/// seed reaches {G > 0} and ConvergenceError when no seed converges.
inline EigenResult first_eigenpair(const FemSpace& V, const BoundaryFunction& g, double p, const EigenOptions& opt = {}) {
  V.check(g);
  if (!(p > 1.0 && p <= 2.0)) throw InvalidArgument("p must lie in (1, 2]");
  if (opt.seeds < 1) throw InvalidArgument("at least one seed is needed");
  const double ig = boundary_integral(g);
  if (!(ig < 0))
    throw InadmissibleWeight("integral of g is " + fmt17(ig) + " >= 0: zero is the only principal eigenvalue");
  if (std::none_of(g.values().begin(), g.values().end(), [](double v) { return v > 0; }))
    throw InadmissibleWeight("g+ vanishes: no feasible field");
  const auto bump = detail::bump_seed(V, g, p);
  if (!bump)
    throw InadmissibleWeight("no seed entered {G > 0}: the support of g+ is too small relative to the mesh");

  std::vector<Vec> starts(opt.seeds);
  std::vector<bool> feasible(opt.seeds, true);
  starts[0] = *bump;
  const double bscale = bump->cwiseAbs().maxCoeff();
  for (int s = 1; s < opt.seeds; ++s) {
    std::mt19937_64 rng(opt.rng_seed + static_cast<std::uint64_t>(s));
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec phi(V.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = U(rng);
    double k = 1.0;
    while (!(boundary_G(V, phi, g, p) > 0) && k < 1e9) {
      phi += k * bscale * *bump;
      k *= 2;
    }
    feasible[s] = boundary_G(V, phi, g, p) > 0;
    starts[s] = phi;
  }

  EigenResult res;
  res.p = p;
  const Vec b0 = detail::normalize_G(V, *bump, g, p);
  res.epsilon_used = opt.epsilon ? *opt.epsilon : (p == 2.0 ? 0.0 : default_epsilon(V, b0));
  std::vector<SeedOutcome> outs(opt.seeds);
  std::vector<std::string> errors(opt.seeds);
  parallel_for(static_cast<std::size_t>(opt.seeds), [&](std::size_t s) {
    if (!feasible[s]) {
      outs[s].index = static_cast<int>(s);
      outs[s].note = "discarded: not feasible";
      return;
    }
    try {
      outs[s] = detail::run_seed(V, g, p, res.epsilon_used, starts[s], opt, static_cast<int>(s));
    } catch (const std::exception& e) {
      outs[s].index = static_cast<int>(s);
      outs[s].note = e.what();
    }
  });
  res.seeds = outs;

  double lo = kInf, hi = -kInf;
  for (const auto& o : outs) {
    if (!o.converged) continue;
    ++res.seeds_used;
    lo = std::min(lo, o.lambda);
    hi = std::max(hi, o.lambda);
    if (res.best_seed < 0 || o.lambda < outs[res.best_seed].lambda) res.best_seed = o.index;
  }
  if (res.best_seed < 0) throw ConvergenceError("no seed converged to the requested tolerance");
  const auto& best = outs[res.best_seed];
  res.lambda1 = best.lambda;
  res.phi1 = {V.mesh_ptr(), best.phi};
  res.residual_norm = best.residual_norm;
  res.seed_agreement = (hi - lo) / lo;
  if (!(res.lambda1 > 0)) throw ConvergenceError("computed eigenvalue is not positive");
  return res;
}

// ---------------------------------------------------------------------------
// Dense p = 2 oracle

struct OracleSpectrum {
  std::vector<double> eigenvalues;  ///< finite real eigenvalues of K u = lambda B_g u, sorted
  bool has_principal = false;
  double lambda1 = kInf;          ///< smallest positive eigenvalue with a one-signed boundary trace
  double lambda2 = kInf;          ///< next positive eigenvalue
  double lambda1_rayleigh = kInf;  ///< min of u'Ku / u'Bu over u'Bu > 0, by a symmetric solver
  Vec phi1;                        ///< G(phi1) = 1, positive mean
  Vec phi2;                        ///< eigenvector of lambda2, same normalization when G > 0
  Vec phi1_rayleigh;
};

constexpr std::size_t kOracleVertexCap = 2000;

/// Dense generalized eigenproblem K u = lambda B_g u. Interior nodes carry no boundary mass,
/// so they are condensed exactly (Schur complement S on the boundary nodes) before QZ.
inline OracleSpectrum dense_oracle_p2(const FemSpace& V, const BoundaryFunction& g) {
  V.check(g);
  const std::size_t n = V.size();
  if (n > kOracleVertexCap)
    throw InvalidArgument("dense oracle limited to " + std::to_string(kOracleVertexCap) + " vertices, mesh has " +
                          std::to_string(n));
  const auto bverts = V.mesh().boundary_vertices();
  std::vector<int> local(n, -1), interior;
  for (std::size_t k = 0; k < bverts.size(); ++k) local[bverts[k]] = static_cast<int>(k);
  for (std::size_t v = 0; v < n; ++v)
    if (local[v] < 0) interior.push_back(static_cast<int>(v));
  const Eigen::Index nb = static_cast<Eigen::Index>(bverts.size());
  const Eigen::Index ni = static_cast<Eigen::Index>(interior.size());

  const Eigen::MatrixXd K = Eigen::MatrixXd(V.stiffness());
  const Eigen::MatrixXd B = Eigen::MatrixXd(boundary_mass(V, g));
  Eigen::MatrixXd Kbb(nb, nb), Bbb(nb, nb), KIb(ni, nb), KII(ni, ni);
  for (Eigen::Index i = 0; i < nb; ++i)
    for (Eigen::Index j = 0; j < nb; ++j) {
      Kbb(i, j) = K(bverts[i], bverts[j]);
      Bbb(i, j) = B(bverts[i], bverts[j]);
    }
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) KIb(i, j) = K(interior[i], bverts[j]);
    for (Eigen::Index j = 0; j < ni; ++j) KII(i, j) = K(interior[i], interior[j]);
  }
  Eigen::LLT<Eigen::MatrixXd> kii;
  Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(ni, nb);  // interior values of the discrete harmonic extension
  if (ni > 0) {
    kii.compute(KII);
    if (kii.info() != Eigen::Success) throw ConvergenceError("interior stiffness block is not positive definite");
    ext = -kii.solve(KIb);
  }
  Eigen::MatrixXd S = Kbb + KIb.transpose() * ext;
  S = 0.5 * (S + S.transpose());

  auto extend = [&](const Eigen::VectorXd& ub) {
    Vec u = Vec::Zero(n);
    for (Eigen::Index k = 0; k < nb; ++k) u[bverts[k]] = ub[k];
    if (ni > 0) {
      const Vec ui = ext * ub;
      for (Eigen::Index k = 0; k < ni; ++k) u[interior[k]] = ui[k];
    }
    return u;
  };
  auto one_signed = [](const Eigen::VectorXd& ub) {
    const double m = ub.cwiseAbs().maxCoeff();
    return ub.minCoeff() >= -1e-10 * m || ub.maxCoeff() <= 1e-10 * m;
  };
  auto normalized = [&](Vec u) {
    const double G = boundary_G(V, u, g, 2.0);
    if (G > 0) u /= std::sqrt(G);
    return detail::fix_sign(u);
  };

  OracleSpectrum out;
  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> qz(S, Bbb, true);
  if (qz.info() != Eigen::Success) throw ConvergenceError("QZ iteration failed");
  const auto alphas = qz.alphas();
  const auto betas = qz.betas();
  const auto vecs = qz.eigenvectors();
  const double bmax = betas.cwiseAbs().maxCoeff();
  struct Pair {
    double lambda;
    Eigen::Index k;
  };
  std::vector<Pair> finite;
  for (Eigen::Index k = 0; k < nb; ++k) {
    if (std::abs(betas[k]) <= 1e-12 * bmax) continue;
    const std::complex<double> lam = alphas[k] / betas[k];
    if (std::abs(lam.imag()) > 1e-8 * std::max(1.0, std::abs(lam.real()))) continue;
    if (std::abs(lam.real()) > 1e10) continue;
    finite.push_back({lam.real(), k});
  }
  std::sort(finite.begin(), finite.end(), [](const Pair& a, const Pair& b) { return a.lambda < b.lambda; });
  for (const auto& f : finite) out.eigenvalues.push_back(f.lambda);

  const double zero_tol = 1e-9 * std::max(1.0, finite.empty() ? 1.0 : std::abs(finite.back().lambda));
  for (std::size_t i = 0; i < finite.size(); ++i) {
    if (!(finite[i].lambda > zero_tol)) continue;
    const Eigen::VectorXd ub = vecs.col(finite[i].k).real();
    if (!out.has_principal) {
      if (one_signed(ub)) {
        out.has_principal = true;
        out.lambda1 = finite[i].lambda;
        out.phi1 = normalized(extend(ub));
      }
    } else {
      out.lambda2 = finite[i].lambda;
      out.phi2 = normalized(extend(ub));
      break;
    }
  }

  // Second route: on {u : (B 1)'u = 0}, which holds for every eigenvector with lambda != 0,
  // S is positive definite; B_V x = mu S_V x gives lambda = 1/mu for mu > 0.
  const Eigen::VectorXd w = Bbb * Eigen::VectorXd::Ones(nb);
  if (nb >= 2 && w.norm() > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd Vb = Q.rightCols(nb - 1);
    Eigen::MatrixXd SV = Vb.transpose() * S * Vb, BV = Vb.transpose() * Bbb * Vb;
    SV = 0.5 * (SV + SV.transpose());
    BV = 0.5 * (BV + BV.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(BV, SV);
    if (ges.info() == Eigen::Success) {
      const Eigen::Index top = nb - 2;
      const double mu = ges.eigenvalues()[top];
      if (mu > 0) {
        out.lambda1_rayleigh = 1.0 / mu;
        out.phi1_rayleigh = normalized(extend(Vb * ges.eigenvectors().col(top)));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Principality and simplicity evidence

struct PrincipalityReport {
  bool positive = false;
  double min_value = 0.0;
  int argmin_vertex = -1;
  Point argmin_location;
  bool sign_flipped = false;
};

/// Minimum of the sign-normalized field over every vertex.
inline PrincipalityReport principality_check(const Field& phi) {
  PrincipalityReport r;
  const Vec u = detail::fix_sign(phi.coefficients);
  r.sign_flipped = phi.coefficients.sum() < 0;
  Eigen::Index k = 0;
  r.min_value = u.minCoeff(&k);
  r.argmin_vertex = static_cast<int>(k);
  r.argmin_location = phi.mesh->vertices()[k];
  r.positive = r.min_value > 0;
  return r;
}

inline PrincipalityReport principality_check(const EigenResult& res) { return principality_check(res.phi1); }

struct SimplicityReport {
  int seeds_converged = 0;
  int seeds_aligned = 0;
  double min_alignment = 1.0;
  bool isolation_reported = false;  ///< only for p = 2
  double oracle_gap = std::numeric_limits<double>::quiet_NaN();
  double oracle_lambda1 = std::numeric_limits<double>::quiet_NaN();
  double oracle_lambda2 = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

/// Seed alignment with +-phi1 (H^1 cosine >= 0.999); for p = 2 the oracle spectral gap.
inline SimplicityReport simplicity_isolation_probe(const FemSpace& V, const BoundaryFunction& g, double p,
                                                   const EigenResult& res) {
  SimplicityReport r;
  for (const auto& s : res.seeds) {
    if (!s.converged) continue;
    ++r.seeds_converged;
    const double a = std::abs(detail::alignment(V, s.phi, res.phi1.coefficients));
    r.min_alignment = std::min(r.min_alignment, a);
    if (a >= 0.999) ++r.seeds_aligned;
  }
  if (p == 2.0 && V.size() <= kOracleVertexCap) {
    const auto o = dense_oracle_p2(V, g);
    r.isolation_reported = true;
    r.oracle_lambda1 = o.lambda1;
    r.oracle_lambda2 = o.lambda2;
    r.oracle_gap = o.lambda2 - o.lambda1;
  } else {
    r.note = "seed agreement only; no isolation radius is claimed";
  }
  return r;
}

}  // namespace steklov
