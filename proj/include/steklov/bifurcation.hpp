#pragma once

// Pseudo-arclength continuation of nontrivial solutions of
//   J'(phi)/p = lambda (G'(phi)/p + F(phi))
// starting near (lambda_1, 0), heuristic branch classification, and Newton scans for
// nontrivial solutions of small norm at a fixed lambda.
//
// The arclength metric is the H^1 Gram form on phi plus the Euclidean one on lambda.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "steklov/eigensolver.hpp"
#include "steklov/error.hpp"
#include "steklov/fem_core.hpp"
#include "steklov/util.hpp"

namespace steklov {

struct BranchPoint {
  double lambda = 0.0;
  Field phi;
  double w1p_norm = 0.0;
  double sup_norm = 0.0;
  double arclength = 0.0;
  int newton_iters = 0;
  double residual_norm = 0.0;  ///< from a fresh assembly after the corrector
};

struct ContinuationConfig {
  double ds = 2e-3;
  double ds_min = 1e-8;
  double ds_max = 0.1;
  int max_points = 60;
  double newton_tol = 1e-9;
  int newton_max = 25;
  double lambda_min = 0.0;
  std::optional<double> lambda_max;  ///< default 3 * lambda_1
  double norm_ceiling = 1e3;
  int direction = 1;
  double first_norm = 1e-3;
  double trivial_threshold = 1e-4;
  std::optional<double> epsilon;  ///< default 1e-8 * mean |grad| of the first point for p < 2
  double jacobian_check_tol = 1e-4;

  void validate() const {
    if (!(ds_min > 0 && ds_min <= ds && ds <= ds_max)) throw InvalidArgument("need 0 < ds_min <= ds <= ds_max");
    if (max_points < 1) throw InvalidArgument("max_points must be positive");
    if (direction != 1 && direction != -1) throw InvalidArgument("direction must be +1 or -1");
    if (!(newton_tol > 0) || newton_max < 1) throw InvalidArgument("invalid Newton settings");
  }
};

enum class StopReason { max_points, lambda_window, norm_ceiling, returned_to_trivial, step_underflow };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::max_points: return "max-points";
    case StopReason::lambda_window: return "lambda-window";
    case StopReason::norm_ceiling: return "norm-ceiling";
    case StopReason::returned_to_trivial: return "returned-to-trivial";
    default: return "step-underflow";
  }
}

struct Branch {
  std::vector<BranchPoint> points;
  StopReason stop = StopReason::max_points;
  double jacobian_discrepancy = 0.0;  ///< relative Frobenius gap to finite differences, first point
  double epsilon_used = 0.0;
  double lambda1 = 0.0;
  double lambda_max = 0.0;
};

namespace detail {

/// Factorizes A, retrying once with a 1e-12 ridge on the diagonal.
inline void factor_with_ridge(Eigen::SparseLU<SpMat>& lu, const SpMat& A) {
  lu.compute(A);
  if (lu.info() == Eigen::Success) return;
  SpMat I(A.rows(), A.cols());
  I.setIdentity();
  lu.compute(A + 1e-12 * I);
  if (lu.info() != Eigen::Success) throw ConvergenceError("Jacobian singular beyond ridge regularization 1e-12");
}

struct BranchState {
  Vec phi;
  double lambda;
};

inline double metric_dot(const FemSpace& V, const Vec& a_phi, double a_l, const Vec& b_phi, double b_l) {
  return V.h1_inner(a_phi, b_phi) + a_l * b_l;
}

/// Relative Frobenius distance between the assembled [d res/d phi, d res/d lambda] and
/// central differences of the residual. Large meshes are checked on evenly spaced columns.
inline double jacobian_discrepancy(const FemSpace& V, double lambda, const Vec& phi, const BoundaryFunction& g,
                                   const PerturbationSpec* spec, double p, double eps) {
  const Eigen::MatrixXd A = Eigen::MatrixXd(residual_jacobian(V, lambda, phi, g, spec, p, eps));
  const Vec rl = residual_lambda(V, phi, g, spec, p);
  const Eigen::Index n = phi.size();
  const Eigen::Index stride = std::max<Eigen::Index>(1, n / 400);
  const double h = 1e-6 * std::max(sup_norm(phi), 1e-300);
  double num = 0.0, den = 0.0;
  for (Eigen::Index j = 0; j < n; j += stride) {
    Vec a = phi, b = phi;
    a[j] += h;
    b[j] -= h;
    const Vec col = (residual(V, lambda, a, g, spec, p, eps) - residual(V, lambda, b, g, spec, p, eps)) / (2 * h);
    num += (col - A.col(j)).squaredNorm();
    den += A.col(j).squaredNorm();
  }
  const double hl = 1e-6 * std::max(1.0, std::abs(lambda));
  const Vec cl =
      (residual(V, lambda + hl, phi, g, spec, p, eps) - residual(V, lambda - hl, phi, g, spec, p, eps)) / (2 * hl);
  num += (cl - rl).squaredNorm();
  den += rl.squaredNorm();
  return std::sqrt(num / std::max(den, 1e-300));
}

/// Newton on {residual = 0, row . (phi - base_phi) + row_l (lambda - base_l) = target}.
inline bool bordered_newton(const FemSpace& V, const BoundaryFunction& g, const PerturbationSpec* spec, double p,
                            double eps, BranchState& x, const Vec& row_phi, double row_l, const BranchState& base,
                            double target, double tol, int max_iter, int& iters, double& res_norm) {
  const Vec Hrow = V.h1_matrix() * row_phi;
  for (iters = 0; iters <= max_iter; ++iters) {
    const Vec r = residual(V, x.lambda, x.phi, g, spec, p, eps);
    res_norm = dual_norm(V, r);
    const double c = Hrow.dot(x.phi - base.phi) + row_l * (x.lambda - base.lambda) - target;
    if (!std::isfinite(res_norm)) return false;
    if (res_norm <= tol && std::abs(c) <= 1e-12 * std::max(1.0, std::abs(target))) return true;
    if (iters == max_iter) break;
    const SpMat A = bordered(residual_jacobian(V, x.lambda, x.phi, g, spec, p, eps),
                             residual_lambda(V, x.phi, g, spec, p), Hrow, row_l);
    Eigen::SparseLU<SpMat> lu;
    factor_with_ridge(lu, A);
    Vec rhs(r.size() + 1);
    rhs.head(r.size()) = -r;
    rhs[r.size()] = -c;
    const Vec dx = lu.solve(rhs);
    if (!dx.allFinite()) return false;
    x.phi += dx.head(r.size());
    x.lambda += dx[r.size()];
  }
  return false;
}

/// Unit tangent of the solution curve, oriented by a positive metric product with `orient`.
inline bool tangent(const FemSpace& V, const BoundaryFunction& g, const PerturbationSpec* spec, double p, double eps,
                    const BranchState& x, const Vec& row_phi, double row_l, Vec& t_phi, double& t_l) {
  const Vec Hrow = V.h1_matrix() * row_phi;
  const SpMat A =
      bordered(residual_jacobian(V, x.lambda, x.phi, g, spec, p, eps), residual_lambda(V, x.phi, g, spec, p), Hrow, row_l);
  Eigen::SparseLU<SpMat> lu;
  factor_with_ridge(lu, A);
  Vec rhs = Vec::Zero(x.phi.size() + 1);
  rhs[x.phi.size()] = 1.0;
  const Vec t = lu.solve(rhs);
  if (!t.allFinite()) return false;
  t_phi = t.head(x.phi.size());
  t_l = t[x.phi.size()];
  double nrm = std::sqrt(metric_dot(V, t_phi, t_l, t_phi, t_l));
  if (!(nrm > 0)) return false;
  if (metric_dot(V, t_phi, t_l, row_phi, row_l) < 0) nrm = -nrm;
  t_phi /= nrm;
  t_l /= nrm;
  return true;
}

inline BranchPoint make_point(const FemSpace& V, const BranchState& x, const BoundaryFunction& g,
                              const PerturbationSpec* spec, double p, double eps, double s, int iters) {
  BranchPoint bp;
  bp.lambda = x.lambda;
  bp.phi = {V.mesh_ptr(), x.phi};
  bp.w1p_norm = w1p_norm(V, x.phi, p);
  bp.sup_norm = sup_norm(x.phi);
  bp.arclength = s;
  bp.newton_iters = iters;
  bp.residual_norm = dual_norm(V, residual(V, x.lambda, x.phi, g, spec, p, eps));
  return bp;
}

}  // namespace detail

/// Traces the branch leaving (lambda_1, 0) along direction * phi_1. A null spec means f = 0.
inline Branch branch_from_first(const FemSpace& V, const BoundaryFunction& g, const PerturbationSpec* spec, double p,
                                const EigenResult& res, const ContinuationConfig& cfg) {
  cfg.validate();
  V.check(g);
  if (spec) spec->validate(p);
  const Vec& phi1 = res.phi1.coefficients;
  V.check(phi1);

  Branch out;
  out.lambda1 = res.lambda1;
  out.lambda_max = cfg.lambda_max ? *cfg.lambda_max : 3.0 * res.lambda1;
  const double t0 = cfg.first_norm / w1p_norm(V, phi1, p);
  detail::BranchState x{cfg.direction * t0 * phi1, res.lambda1};
  const double eps = cfg.epsilon ? *cfg.epsilon : (p == 2.0 ? 0.0 : default_epsilon(V, x.phi));
  out.epsilon_used = eps;

  out.jacobian_discrepancy = detail::jacobian_discrepancy(V, x.lambda, x.phi, g, spec, p, eps);
  if (!(out.jacobian_discrepancy <= cfg.jacobian_check_tol))
    throw ConvergenceError("assembled Jacobian differs from finite differences by " + fmt17(out.jacobian_discrepancy));

  // First point: norm pinned through <phi_1, phi>_H.
  int iters = 0;
  double rn = 0.0;
  {
    const detail::BranchState base = x;
    if (!detail::bordered_newton(V, g, spec, p, eps, x, phi1, 0.0, base, 0.0, cfg.newton_tol, cfg.newton_max, iters, rn))
      throw ConvergenceError("bifurcation seed invalid: the pinned corrector at the first point failed");
  }
  out.points.push_back(detail::make_point(V, x, g, spec, p, eps, 0.0, iters));

  Vec t_phi;
  double t_l = 0.0;
  // Initial orientation: away from the trivial solution.
  if (!detail::tangent(V, g, spec, p, eps, x, x.phi / V.h1_norm(x.phi), 0.0, t_phi, t_l))
    throw ConvergenceError("bifurcation seed invalid: singular bordered system at the first point");

  double ds = cfg.ds, s = 0.0;
  while (static_cast<int>(out.points.size()) < cfg.max_points) {
    bool ok = false;
    detail::BranchState y;
    while (!ok) {
      y = {x.phi + ds * t_phi, x.lambda + ds * t_l};
      ok = detail::bordered_newton(V, g, spec, p, eps, y, t_phi, t_l, x, ds, cfg.newton_tol, cfg.newton_max, iters, rn);
      if (!ok) {
        ds *= 0.5;
        if (ds < cfg.ds_min) break;
      }
    }
    if (!ok) {
      if (out.points.size() == 1)
        throw ConvergenceError("bifurcation seed invalid: first corrector failed at ds_min");
      out.stop = StopReason::step_underflow;
      return out;
    }
    s += ds;
    x = y;
    out.points.push_back(detail::make_point(V, x, g, spec, p, eps, s, iters));
    const auto& bp = out.points.back();
    if (bp.w1p_norm >= cfg.norm_ceiling) {
      out.stop = StopReason::norm_ceiling;
      return out;
    }
    if (!(bp.lambda > cfg.lambda_min && bp.lambda < out.lambda_max)) {
      out.stop = StopReason::lambda_window;
      return out;
    }
    if (bp.w1p_norm < cfg.trivial_threshold) {
      out.stop = StopReason::returned_to_trivial;
      return out;
    }
    Vec n_phi;
    double n_l = 0.0;
    if (!detail::tangent(V, g, spec, p, eps, x, t_phi, t_l, n_phi, n_l)) {
      out.stop = StopReason::step_underflow;
      return out;
    }
    t_phi = n_phi;
    t_l = n_l;
    if (iters <= 4) ds = std::min(ds * 1.5, cfg.ds_max);
  }
  out.stop = StopReason::max_points;
  return out;
}

enum class BranchKind { unbounded_exit, returns_to_trivial, max_points, stalled };

inline const char* to_string(BranchKind k) {
  switch (k) {
    case BranchKind::unbounded_exit: return "unbounded-exit";
    case BranchKind::returns_to_trivial: return "returns-to-trivial";
    case BranchKind::max_points: return "max-points";
    default: return "stalled";
  }
}

struct BranchClass {
  BranchKind kind = BranchKind::stalled;
  double lambda_end = 0.0;
};

/// Heuristic label from the terminal point; the global alternative is not verified.
inline BranchClass classify_branch(const std::vector<BranchPoint>& branch, const ContinuationConfig& cfg,
                                   double lambda_max) {
  if (branch.empty()) throw InvalidArgument("classify_branch needs a nonempty branch");
  const auto& last = branch.back();
  BranchClass c;
  c.lambda_end = last.lambda;
  if (last.w1p_norm >= cfg.norm_ceiling || !(last.lambda > cfg.lambda_min && last.lambda < lambda_max))
    c.kind = BranchKind::unbounded_exit;
  else if (last.w1p_norm < cfg.trivial_threshold)
    c.kind = BranchKind::returns_to_trivial;
  else if (static_cast<int>(branch.size()) >= cfg.max_points)
    c.kind = BranchKind::max_points;
  else
    c.kind = BranchKind::stalled;
  return c;
}

inline BranchClass classify_branch(const Branch& b, const ContinuationConfig& cfg) {
  return classify_branch(b.points, cfg, b.lambda_max);
}

struct ZeroNormExtrapolation {
  double lambda0 = 0.0;  ///< least-squares line lambda = a + b * norm, evaluated at norm 0
  double secant_spread = 0.0;  ///< relative spread of the pairwise secant intercepts
  int points_used = 0;
};

/// Extrapolates lambda to zero norm from the k branch points of smallest w1p_norm.
inline ZeroNormExtrapolation extrapolate_to_zero_norm(const std::vector<BranchPoint>& branch, int k = 5) {
  if (static_cast<int>(branch.size()) < 2) throw InvalidArgument("extrapolation needs at least two branch points");
  std::vector<const BranchPoint*> pts;
  for (const auto& b : branch) pts.push_back(&b);
  std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->w1p_norm < b->w1p_norm; });
  pts.resize(std::min<std::size_t>(pts.size(), static_cast<std::size_t>(k)));
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto* b : pts) {
    sx += b->w1p_norm;
    sy += b->lambda;
    sxx += b->w1p_norm * b->w1p_norm;
    sxy += b->w1p_norm * b->lambda;
  }
  ZeroNormExtrapolation e;
  e.points_used = static_cast<int>(pts.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  e.lambda0 = (sy - slope * sx) / n;
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto *a = pts[i], *b = pts[i + 1];
    const double m = (b->lambda - a->lambda) / (b->w1p_norm - a->w1p_norm);
    const double c = a->lambda - m * a->w1p_norm;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  e.secant_spread = pts.size() >= 2 ? (hi - lo) / std::abs(e.lambda0) : 0.0;
  return e;
}

// ---------------------------------------------------------------------------
// Newton scans at a fixed lambda

enum class ScanOutcome { zero, nontrivial, diverged };

inline const char* to_string(ScanOutcome o) {
  switch (o) {
    case ScanOutcome::zero: return "zero";
    case ScanOutcome::nontrivial: return "nontrivial";
    default: return "diverged";
  }
}

struct ScanSeed {
  int index = 0;
  ScanOutcome outcome = ScanOutcome::diverged;
  double final_norm = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
};

struct ScanReport {
  double lambda = 0.0;
  double rho = 0.0;
  std::vector<ScanSeed> seeds;
  int zero = 0;
  int nontrivial = 0;
  int diverged = 0;
  int nontrivial_within_rho = 0;  ///< converged to a nontrivial solution of norm <= rho
  double zero_threshold = 1e-6;
  double tolerance = 1e-10;
};

namespace detail {

/// J/p - lambda (G/p + potential of F): the functional whose gradient is the residual.
inline double scan_energy(const FemSpace& V, double lambda, const Vec& phi, const BoundaryFunction& g,
                          const PerturbationSpec* spec, double p, double eps) {
  double e = energy_J(V, phi, p, eps) / p - lambda * boundary_G(V, phi, g, p) / p;
  if (spec) e -= lambda * perturbation_potential(V, phi, *spec);
  return e;
}

}  // namespace detail

/// Damped Newton on residual(lambda, .) = 0 from random fields of W^{1,p} norm rho.
inline ScanReport no_bifurcation_scan(const FemSpace& V, const BoundaryFunction& g, const PerturbationSpec* spec,
                                      double p, double lambda, double rho, int n_seeds, std::uint64_t rng_seed = 1,
                                      std::optional<double> epsilon = std::nullopt) {
  if (!(rho > 0)) throw InvalidArgument("scan radius rho must be positive");
  if (n_seeds < 1) throw InvalidArgument("scan needs at least one seed");
  V.check(g);
  if (spec) spec->validate(p);
  ScanReport rep;
  rep.lambda = lambda;
  rep.rho = rho;
  rep.seeds.resize(n_seeds);
  const int max_iter = 200;
  parallel_for(static_cast<std::size_t>(n_seeds), [&](std::size_t s) {
    ScanSeed& out = rep.seeds[s];
    out.index = static_cast<int>(s);
    std::mt19937_64 rng(rng_seed + s);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec phi(V.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = U(rng);
    phi *= rho / w1p_norm(V, phi, p);
    const double eps = epsilon ? *epsilon : (p == 2.0 ? 0.0 : default_epsilon(V, phi));
    try {
      Vec r = residual(V, lambda, phi, g, spec, p, eps);
      double rn = dual_norm(V, r);
      int it = 0;
      bool converged = false;
      for (; it < max_iter; ++it) {
        if (rn <= rep.tolerance) {
          converged = true;
          break;
        }
        Eigen::SparseLU<SpMat> lu;
        lu.compute(residual_jacobian(V, lambda, phi, g, spec, p, eps));
        if (lu.info() != Eigen::Success) break;
        const Vec d = lu.solve(-r);
        if (!d.allFinite()) break;
        double a = 1.0;
        bool moved = false;
        for (int k = 0; k < 30; ++k, a *= 0.5) {
          const Vec trial = phi + a * d;
          const Vec rt = residual(V, lambda, trial, g, spec, p, eps);
          const double tn = dual_norm(V, rt);
          if (std::isfinite(tn) && tn <= (1.0 - 1e-4 * a) * rn) {
            phi = trial;
            r = rt;
            rn = tn;
            moved = true;
            break;
          }
        }
        if (!moved) {
          // Newton linearization failed near sign changes of phi (p < 2): descend the
          // energy whose gradient is the residual instead.
          const Vec sg = V.riesz(r);
          const double E0 = detail::scan_energy(V, lambda, phi, g, spec, p, eps);
          const double slope = r.dot(sg);
          a = 1.0;
          for (int k = 0; k < 40; ++k, a *= 0.5) {
            const Vec trial = phi - a * sg;
            const double Et = detail::scan_energy(V, lambda, trial, g, spec, p, eps);
            if (std::isfinite(Et) && Et <= E0 - 1e-4 * a * slope) {
              phi = trial;
              r = residual(V, lambda, phi, g, spec, p, eps);
              rn = dual_norm(V, r);
              moved = true;
              break;
            }
          }
        }
        if (!moved) break;
      }
      out.iterations = it;
      out.residual_norm = rn;
      out.final_norm = w1p_norm(V, phi, p);
      // For p < 2 the residual is only Hoelder near 0, so the zero target is judged by norm.
      if (!std::isfinite(out.final_norm))
        out.outcome = ScanOutcome::diverged;
      else if (out.final_norm < rep.zero_threshold)
        out.outcome = ScanOutcome::zero;
      else
        out.outcome = converged ? ScanOutcome::nontrivial : ScanOutcome::diverged;
    } catch (const std::exception&) {
      out.outcome = ScanOutcome::diverged;
    }
  });
  for (const auto& s : rep.seeds) {
    if (s.outcome == ScanOutcome::zero) ++rep.zero;
    if (s.outcome == ScanOutcome::nontrivial) {
      ++rep.nontrivial;
      if (s.final_norm <= rho) ++rep.nontrivial_within_rho;
    }
    if (s.outcome == ScanOutcome::diverged) ++rep.diverged;
  }
  return rep;
}

}  // namespace steklov
