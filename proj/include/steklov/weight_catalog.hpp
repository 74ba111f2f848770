#pragma once

// Closed-form singular boundary weights, composite sign-changing weights built from them,
// per-edge sampling on meshes, and the admissibility check for a positive principal
// eigenvalue.
//
// Box weights live on (-R, R) x (0, 2R) and are supported on the bottom side A; in N
// dimensions the same formulas use A = (-R, R)^(N-1) x {0}. The circle weight lives on the
// unit circle.

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "steklov/error.hpp"
#include "steklov/lorentz_zygmund.hpp"
#include "steklov/mesh.hpp"
#include "steklov/rearrangement.hpp"
#include "steklov/util.hpp"

namespace steklov {

enum class WeightKind {
  example_2_1,           ///< |y|^(-1/2) on the unit circle
  example_2_2,           ///< |x1 log|x1||^(-(p-1)/(N-1)) on A
  example_2_2_majorant,  ///< h = |x1|^(-(p-1)/(N-1)) on A
  example_2_3,           ///< |x1|^(-1/q) on A
  constant,
  composite,  ///< scale * base - c
};

enum class DomainTag { circle, box, any };

struct WeightSpec {
  WeightKind kind = WeightKind::constant;
  double R = 0.25;
  double p = 2.0;
  int N = 2;
  double q = 2.0;
  double value = 1.0;  ///< constant weights
  double scale = 1.0;  ///< composite: multiplier of the base
  std::optional<double> c;  ///< composite: constant negative part; unset means the default recipe
  std::shared_ptr<const WeightSpec> base;
  DomainTag domain = DomainTag::any;
  std::string name;

  /// Singular exponent s of |x1|^-s on A (box weights only).
  double box_exponent() const {
    switch (kind) {
      case WeightKind::example_2_2:
      case WeightKind::example_2_2_majorant: return (p - 1.0) / (N - 1.0);
      case WeightKind::example_2_3: return 1.0 / q;
      default: throw Unsupported("weight has no box exponent");
    }
  }
  bool is_example() const {
    return kind != WeightKind::constant && kind != WeightKind::composite;
  }
};

// ---------------------------------------------------------------------------
// Constructors

inline WeightSpec example_2_1() {
  WeightSpec w;
  w.kind = WeightKind::example_2_1;
  w.domain = DomainTag::circle;
  w.name = "g1-circle";
  return w;
}

inline WeightSpec example_2_2(double p, double R = 0.25, int N = 2) {
  if (!(p > 1.0) || !(N > p)) throw InvalidArgument("g2 needs 1 < p < N");
  if (!(R > 0.0 && R < 0.5)) throw InvalidArgument("g2 needs 0 < R < 1/2");
  WeightSpec w;
  w.kind = WeightKind::example_2_2;
  w.p = p;
  w.R = R;
  w.N = N;
  w.domain = DomainTag::box;
  w.name = "g2-box";
  return w;
}

inline WeightSpec example_2_2_majorant(double p, double R = 0.25, int N = 2) {
  WeightSpec w = example_2_2(p, R, N);
  w.kind = WeightKind::example_2_2_majorant;
  w.name = "h-box";
  return w;
}

inline WeightSpec example_2_3(double q, double R = 0.25, int N = 2) {
  if (!(q > 1.0) || std::isinf(q)) throw InvalidArgument("g3 needs 1 < q < inf");
  if (!(R > 0.0 && R < 1.0)) throw InvalidArgument("g3 needs 0 < R < 1");
  WeightSpec w;
  w.kind = WeightKind::example_2_3;
  w.q = q;
  w.R = R;
  w.N = N;
  w.domain = DomainTag::box;
  w.name = "g3-box:q=" + fmt17(q);
  return w;
}

inline WeightSpec constant_weight(double c) {
  if (!std::isfinite(c)) throw InvalidArgument("constant weight must be finite");
  WeightSpec w;
  w.kind = WeightKind::constant;
  w.value = c;
  w.name = "const:" + fmt17(c);
  return w;
}

/// scale * base - c with base >= 0 a catalog singular weight.
inline WeightSpec composite(const WeightSpec& base, std::optional<double> c = std::nullopt, double scale = 1.0) {
  if (!base.is_example()) throw InvalidArgument("composite weights need a catalog singular base");
  if (c && !(*c >= 0.0)) throw InvalidArgument("composite negative-part coefficient must be nonnegative");
  if (!(scale > 0.0)) throw InvalidArgument("composite scale must be positive");
  WeightSpec w;
  w.kind = WeightKind::composite;
  w.base = std::make_shared<const WeightSpec>(base);
  w.c = c;
  w.scale = scale;
  w.domain = base.domain;
  w.p = base.p;
  w.q = base.q;
  w.R = base.R;
  w.N = base.N;
  w.name = "composite:" + base.name + (c ? "-" + fmt17(*c) : std::string());
  return w;
}

/// Positive multiple of a weight; composite and constant weights scale every part.
inline WeightSpec scaled(const WeightSpec& w, double s) {
  if (!(s > 0.0)) throw InvalidArgument("weight scale must be positive");
  WeightSpec out = w;
  if (w.kind == WeightKind::constant) {
    out.value *= s;
  } else if (w.kind == WeightKind::composite) {
    out.scale *= s;
    if (w.c) out.c = *w.c * s;
  } else {
    out = composite(w, 0.0, s);
  }
  out.name = w.name + "*" + fmt17(s);
  return out;
}

// ---------------------------------------------------------------------------
// Geometry of the catalog domains

/// H^{N-1}(boundary) of the catalog domain.
inline double domain_perimeter(const WeightSpec& w) {
  switch (w.domain) {
    case DomainTag::circle: return 2 * std::numbers::pi;
    case DomainTag::box: return 2.0 * w.N * std::pow(2 * w.R, w.N - 1);
    default: throw Unsupported("weight '" + w.name + "' is not bound to a catalog domain");
  }
}

namespace detail {

/// 2^(N-1) R^(N-2): the measure factor of the level sets of |x1|^-s on A.
inline double box_factor(const WeightSpec& w) { return std::pow(2.0, w.N - 1) * std::pow(w.R, w.N - 2); }

/// Total measure of A.
inline double box_support(const WeightSpec& w) { return std::pow(2 * w.R, w.N - 1); }

/// Integral of |x log|x||^-s over (0, b], 0 < b < 1, in u = -log x.
inline double xlog_integral(double b, double s) {
  boost::math::quadrature::exp_sinh<double> es;
  auto f = [s](double u) { return std::exp(-(1.0 - s) * u) * std::pow(u, -s); };
  return es.integrate(f, -std::log(b), kInf);
}

}  // namespace detail

/// Default negative-part coefficient: makes the integral equal -1/2 of the singular part.
inline double default_negative_coefficient(double singular_integral, double perimeter, double scale = 1.0) {
  return 1.5 * scale * singular_integral / perimeter;
}

/// Closed-form integral of the weight over its catalog domain. Unbound constants are
/// integrated per unit boundary measure.
inline double analytic_integral(const WeightSpec& w) {
  switch (w.kind) {
    case WeightKind::example_2_1:
      // 4 * integral_0^{pi/2} sin^{-1/2} = 2 B(1/4, 1/2).
      return 2.0 * boost::math::beta(0.25, 0.5);
    case WeightKind::example_2_2_majorant:
    case WeightKind::example_2_3: {
      const double s = w.box_exponent();
      return detail::box_factor(w) * std::pow(w.R, 1.0 - s) / (1.0 - s);
    }
    case WeightKind::example_2_2:
      return detail::box_factor(w) * detail::xlog_integral(w.R, w.box_exponent());
    case WeightKind::constant: return w.value * (w.domain == DomainTag::any ? 1.0 : domain_perimeter(w));
    case WeightKind::composite: {
      const double ib = analytic_integral(*w.base);
      const double P = domain_perimeter(w);
      const double c = w.c ? *w.c : default_negative_coefficient(ib, P, w.scale);
      return w.scale * ib - c * P;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Rearrangements

/// Closed-form f* of a catalog weight.
inline AnalyticProfile analytic_rearrangement(const WeightSpec& w) {
  AnalyticProfile out;
  out.label = w.name;
  switch (w.kind) {
    case WeightKind::example_2_1: {
      // Level sets of |sin theta|^{-1/2} have measure 4 asin(1/s^2).
      out.total_measure = 2 * std::numbers::pi;
      out.value = [](double t) { return 1.0 / std::sqrt(std::sin(t / 4.0)); };
      out.near_zero = {2.0, 0.5, 0.0};
      return out;
    }
    case WeightKind::example_2_2_majorant:
    case WeightKind::example_2_3: {
      const double s = w.box_exponent();
      const double K = std::pow(detail::box_factor(w), s);
      const double a = detail::box_support(w);
      out.total_measure = domain_perimeter(w);
      out.value = [K, s, a](double t) { return t < a ? K * std::pow(t, -s) : 0.0; };
      out.near_zero = {K, s, 0.0};
      out.kinks = {a};
      return out;
    }
    case WeightKind::example_2_2: {
      // x |log x| increases on (0, 1/e), so f*(t) = |u log u|^-s with u = t / (2^(N-1) R^(N-2)).
      if (w.R > std::exp(-1.0))
        throw Unsupported("g2 has a closed-form rearrangement only for R <= 1/e");
      const double s = w.box_exponent();
      const double B = detail::box_factor(w);
      const double a = detail::box_support(w);
      out.total_measure = domain_perimeter(w);
      out.value = [s, B, a](double t) {
        if (t >= a) return 0.0;
        const double u = t / B;
        return std::pow(u * std::abs(std::log(u)), -s);
      };
      out.near_zero = {std::pow(B, s), s, -s};
      out.kinks = {a};
      return out;
    }
    default: throw Unsupported("weight '" + w.name + "' has no closed-form rearrangement");
  }
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

/// Mean of |x|^-s over the segment [a, b] (a < b), s < 1 or the segment avoids 0.
inline double mean_power(double a, double b, double s) {
  if (a > b) std::swap(a, b);
  if (a == b) return std::pow(std::abs(a), -s);
  if (a < 0 && b > 0) {
    if (s >= 1) throw InvalidArgument("weight is not integrable: exponent >= 1 on an edge touching its singularity");
    return (std::pow(-a, 1 - s) + std::pow(b, 1 - s)) / ((1 - s) * (b - a));
  }
  const double lo = std::min(std::abs(a), std::abs(b)), hi = std::max(std::abs(a), std::abs(b));
  if (lo == 0.0) {
    if (s >= 1) throw InvalidArgument("weight is not integrable: exponent >= 1 on an edge touching its singularity");
    return std::pow(hi, -s) / (1 - s);
  }
  // lo^-s * ((1+r)^(1-s) - 1) / ((1-s) r), r = (hi-lo)/lo; exact at s = 1 via log1p.
  const double r = (hi - lo) / lo;
  const double L = std::log1p(r);
  const double num = std::abs(1 - s) < 1e-300 ? L : std::expm1((1 - s) * L) / (1 - s);
  return std::pow(lo, -s) * num / r;
}

/// Mean of |y|^(-1/2) along a straight edge with linear y.
inline double mean_inv_sqrt(double ya, double yb) {
  const double a = std::abs(ya), b = std::abs(yb);
  if (a == 0 && b == 0) throw InvalidArgument("|y|^(-1/2) is not integrable along an edge on y = 0");
  if (ya == yb) return 1.0 / std::sqrt(a);
  if ((ya >= 0) == (yb >= 0) || a == 0 || b == 0) return 2.0 / (std::sqrt(a) + std::sqrt(b));
  return 2.0 * (std::sqrt(a) + std::sqrt(b)) / (a + b);
}

/// Mean of |x log|x||^-s over [a, b] within (-1, 1).
inline double mean_xlog(double a, double b, double s) {
  if (a > b) std::swap(a, b);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [s](double x) {
    const double ax = std::abs(x);
    return std::pow(ax * std::abs(std::log(ax)), -s);
  };
  double I = 0.0;
  if (a < 0 && b > 0) {
    I = ts.integrate(f, a, 0.0) + ts.integrate(f, 0.0, b);
  } else {
    I = ts.integrate(f, a, b);
  }
  return I / (b - a);
}

inline void check_domain(const WeightSpec& w, const Mesh& m) {
  const auto bv = m.boundary_vertices();
  if (w.domain == DomainTag::circle) {
    for (int v : bv) {
      const auto& P = m.vertices()[v];
      if (std::abs(std::hypot(P.x, P.y) - 1.0) > 1e-9)
        throw InvalidArgument("weight '" + w.name + "' needs a mesh of the unit disk (boundary vertex off the circle)");
    }
  } else if (w.domain == DomainTag::box) {
    if (w.N != 2) throw Unsupported("box weights can only be sampled for N = 2");
    const auto [lo, hi] = m.bounding_box();
    const double tol = 1e-12 * w.R;
    if (std::abs(lo.x + w.R) > tol || std::abs(hi.x - w.R) > tol || std::abs(lo.y) > tol ||
        std::abs(hi.y - 2 * w.R) > tol)
      throw InvalidArgument("weight '" + w.name + "' needs a mesh of the box (-R, R) x (0, 2R) with R = " + fmt17(w.R));
    for (int v : bv) {
      const auto& P = m.vertices()[v];
      const bool on_side = std::abs(P.x + w.R) <= tol || std::abs(P.x - w.R) <= tol || std::abs(P.y) <= tol ||
                           std::abs(P.y - 2 * w.R) <= tol;
      if (!on_side) throw InvalidArgument("weight '" + w.name + "' needs a box mesh (boundary vertex off the sides)");
    }
  }
}

inline std::vector<double> sample_values(const WeightSpec& w, const Mesh& m) {
  const std::size_t ne = m.num_boundary_edges();
  std::vector<double> v(ne, 0.0);
  const auto& X = m.vertices();
  switch (w.kind) {
    case WeightKind::constant: std::fill(v.begin(), v.end(), w.value); break;
    case WeightKind::example_2_1:
      for (std::size_t e = 0; e < ne; ++e) {
        const auto [a, b] = m.boundary_edges()[e];
        v[e] = mean_inv_sqrt(X[a].y, X[b].y);
      }
      break;
    case WeightKind::example_2_2:
    case WeightKind::example_2_2_majorant:
    case WeightKind::example_2_3: {
      const double s = w.box_exponent();
      const double tol = 1e-12 * w.R;
      for (std::size_t e = 0; e < ne; ++e) {
        const auto [a, b] = m.boundary_edges()[e];
        if (std::abs(X[a].y) > tol || std::abs(X[b].y) > tol) continue;
        v[e] = w.kind == WeightKind::example_2_2 ? mean_xlog(X[a].x, X[b].x, s) : mean_power(X[a].x, X[b].x, s);
      }
      break;
    }
    case WeightKind::composite: {
      const auto base = sample_values(*w.base, m);
      double c = 0.0;
      if (w.c) {
        c = *w.c;
      } else {
        const double ib = boundary_integral(BoundaryFunction(m, base));
        c = default_negative_coefficient(ib, m.perimeter(), w.scale);
      }
      for (std::size_t e = 0; e < ne; ++e) v[e] = w.scale * base[e] - c;
      break;
    }
  }
  return v;
}

}  // namespace detail

/// Edge averages (1/|e|) * integral_e w, so the sampled integral is exact up to the
/// polygonal approximation of curved boundaries.
inline BoundaryFunction sample_on_boundary(const WeightSpec& w, const Mesh& m) {
  const WeightSpec& geom = w.kind == WeightKind::composite ? *w.base : w;
  detail::check_domain(geom, m);
  return BoundaryFunction(m, detail::sample_values(w, m));
}

/// Negative-part coefficient a composite actually uses on a mesh.
inline double resolved_negative_coefficient(const WeightSpec& w, const Mesh& m) {
  if (w.kind != WeightKind::composite) return 0.0;
  if (w.c) return *w.c;
  const double ib = boundary_integral(sample_on_boundary(*w.base, m));
  return default_negative_coefficient(ib, m.perimeter(), w.scale);
}

// ---------------------------------------------------------------------------
// Membership and admissibility

/// Membership of a catalog weight in F_d (cls = 'F') or G_d (cls = 'G') decided on its
/// closed-form profile. Composite and scaled weights inherit the verdict of their base:
/// both classes are linear spaces containing the constants.
///
/// g2 in F_d is decided by finiteness of integral_A h^(d - q) g2^q with q = N/(p-1) and
/// its majorant h, which bounds g2 in L^(d,q) and hence places it in F_d. The t -> 0 limit
/// of t^(1/d) g2* decays only like |log t|^-(p-1)/(N-1), which no finite grid resolves.
inline MembershipReport catalog_membership(const WeightSpec& w, char cls, double d) {
  if (w.kind == WeightKind::constant) {
    MembershipReport r;
    r.weight_class = detail::class_name(cls, d);
    r.method = "bounded";
    r.verdict = Verdict::member;
    r.zero_kind = LimitKind::zero;
    r.limit_at_zero = 0.0;
    r.end_kind = LimitKind::positive;
    r.limit_at_T = std::abs(w.value);
    return r;
  }
  if (w.kind == WeightKind::composite) {
    auto r = catalog_membership(*w.base, cls, d);
    r.method += "(base)";
    return r;
  }
  if (cls != 'F' && cls != 'G') throw InvalidArgument("weight class must be F or G");
  if (w.kind == WeightKind::example_2_2 && cls == 'F') {
    MembershipReport r;
    r.weight_class = detail::class_name(cls, d);
    r.method = "majorant-integral";
    const double dd = (w.N - 1.0) / (w.p - 1.0);
    if (std::abs(d - dd) > 1e-12 * dd)
      throw Unsupported("g2 membership is decided only for d = (N-1)/(p-1) = " + fmt17(dd));
    const double qq = w.N / (w.p - 1.0);
    const double s = w.box_exponent();
    // h^(d-q) g2^q = |x|^(-s(d-q)) |x log|x||^(-s q) on A, integrated in u = -log x.
    const double e1 = -s * (dd - qq) - s * qq;  // power of |x|
    const double e2 = -s * qq;                  // power of |log|x||
    boost::math::quadrature::exp_sinh<double> es;
    auto f = [e1, e2](double u) { return std::exp(-(1.0 + e1) * u) * std::pow(u, e2); };
    double err = 0.0;
    const double I = detail::box_factor(w) * es.integrate(f, -std::log(w.R), kInf, std::sqrt(std::numeric_limits<double>::epsilon()), &err);
    r.auxiliary_integral = I;
    r.verdict = std::isfinite(I) && err <= 1e-8 * I ? Verdict::member : Verdict::inconclusive;
    r.zero_kind = r.verdict == Verdict::member ? LimitKind::zero : LimitKind::undetermined;
    r.limit_at_zero = 0.0;
    return r;
  }
  const auto prof = analytic_rearrangement(w);
  return cls == 'F' ? membership_F_d(prof, d) : membership_G_d(prof, d, w.N);
}

enum class Regime { n_greater_p, n_equals_p };

inline const char* to_string(Regime r) { return r == Regime::n_greater_p ? "N>p" : "N=p"; }

struct AdmissibilityReport {
  bool gplus_nontrivial = false;
  double integral_g = 0.0;
  MembershipReport membership;
  Regime regime = Regime::n_equals_p;
  bool admissible = false;
};

namespace detail {

inline std::pair<char, double> required_class(double p, int N, Regime& regime) {
  if (N != 2) throw Unsupported("admissibility is implemented for N = 2");
  if (!(p > 1.0)) throw InvalidArgument("admissibility needs p > 1");
  if (p > N + 1e-15) throw InvalidArgument("p > N is outside the supported range");
  if (p < N) {
    regime = Regime::n_greater_p;
    return {'F', (N - 1.0) / (p - 1.0)};
  }
  regime = Regime::n_equals_p;
  return {'G', 1.0};
}

}  // namespace detail

/// Hypotheses for a positive principal eigenvalue: g+ nontrivial, integral of g negative,
/// g in F_{(N-1)/(p-1)} when p < N and in G_1 when p = N.
inline AdmissibilityReport admissibility(const WeightSpec& w, double p, int N = 2) {
  AdmissibilityReport r;
  const auto [cls, d] = detail::required_class(p, N, r.regime);
  switch (w.kind) {
    case WeightKind::constant:
      r.gplus_nontrivial = w.value > 0;
      r.integral_g = analytic_integral(w);
      break;
    case WeightKind::composite:
      // An unbounded base exceeds any constant on a set of positive measure.
      r.gplus_nontrivial = true;
      r.integral_g = analytic_integral(w);
      break;
    default:
      r.gplus_nontrivial = true;
      r.integral_g = analytic_integral(w);
  }
  r.membership = catalog_membership(w, cls, d);
  r.admissible = r.gplus_nontrivial && r.integral_g < 0 && r.membership.verdict == Verdict::member;
  return r;
}

/// Admissibility of per-edge data taken as an exact piecewise-constant weight. Such data
/// are bounded, so both classes contain them; the grid scan still runs on the profile.
inline AdmissibilityReport admissibility(const BoundaryFunction& g, double p, int N = 2) {
  AdmissibilityReport r;
  const auto [cls, d] = detail::required_class(p, N, r.regime);
  r.integral_g = boundary_integral(g);
  for (std::size_t e = 0; e < g.size(); ++e)
    if (g.values()[e] > 0) r.gplus_nontrivial = true;
  const auto prof = decreasing_rearrangement(g);
  r.membership = cls == 'F' ? membership_F_d(prof, d, Resolution::exact_data) : membership_G_d(prof, d, N, Resolution::exact_data);
  r.admissible = r.gplus_nontrivial && r.integral_g < 0 && r.membership.verdict == Verdict::member;
  return r;
}

}  // namespace steklov
