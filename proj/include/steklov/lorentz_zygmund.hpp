#pragma once

// Lorentz-Zygmund quasi-norms |f|_(p,q;a) built on f*, the equivalent norms built on f**,
// and limit-based membership tests for the weight classes F_d and G_d.
//
// All integrals are taken in u = log t, where the weight t^(q/p) l1(t)^(a q) dt/t becomes
// e^(q u / p) (1 + |u|)^(a q) du; l1 has a kink at u = 0 so pieces are split there.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/minima.hpp>

#include "steklov/error.hpp"
#include "steklov/mesh.hpp"
#include "steklov/rearrangement.hpp"
#include "steklov/util.hpp"

namespace steklov {

struct LZParams {
  double p = 2.0;
  double q = 2.0;
  double alpha = 0.0;

  void validate() const {
    if (!(p >= 1.0)) throw InvalidArgument("Lorentz-Zygmund exponent p must lie in [1, inf], got " + fmt17(p));
    if (!(q >= 1.0)) throw InvalidArgument("Lorentz-Zygmund exponent q must lie in [1, inf], got " + fmt17(q));
    if (!std::isfinite(alpha)) throw InvalidArgument("log-power alpha must be finite");
  }
  /// 1/p with 1/inf = 0.
  double inv_p() const { return std::isinf(p) ? 0.0 : 1.0 / p; }
};

namespace detail {

using Gauss16 = boost::math::quadrature::gauss<double, 16>;

inline double weight_u(double u, double a, double b) { return std::exp(a * u) * std::pow(1.0 + std::abs(u), b); }

/// Gauss-Legendre 16 on [u1, u2] in chunks no wider than max_width, split at u = 0.
template <typename F>
double gauss_pieces(F&& f, double u1, double u2, double max_width = 1.0) {
  if (!(u2 > u1)) return 0.0;
  if (u1 < 0 && u2 > 0) return gauss_pieces(f, u1, 0.0, max_width) + gauss_pieces(f, 0.0, u2, max_width);
  const int n = std::max(1, static_cast<int>(std::ceil((u2 - u1) / max_width)));
  const double h = (u2 - u1) / n;
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += Gauss16::integrate(f, u1 + k * h, k + 1 == n ? u2 : u1 + (k + 1) * h);
  return s;
}

/// integral over (u1, u2) of (1 + |u|)^b du, u1 may be -inf.
inline double log_power_integral(double u1, double u2, double b) {
  if (!(u2 > u1)) return 0.0;
  if (u1 < 0 && u2 > 0) return log_power_integral(u1, 0.0, b) + log_power_integral(0.0, u2, b);
  // Reduce to w = |u| in [w1, w2], w >= 0.
  double w1 = u1 >= 0 ? u1 : -u2;
  double w2 = u1 >= 0 ? u2 : -u1;
  if (std::isinf(w2)) return b < -1 ? std::pow(1 + w1, b + 1) / (-b - 1) : kInf;
  if (b == -1) return std::log1p(w2) - std::log1p(w1);
  return (std::pow(1 + w2, b + 1) - std::pow(1 + w1, b + 1)) / (b + 1);
}

/// integral over (lo, hi) of t^(a-1) l1(t)^b dt, with lo >= 0 and a >= 0.
inline double power_log_integral(double lo, double hi, double a, double b) {
  if (!(hi > lo)) return 0.0;
  if (lo == 0.0 && !(a > 0.0 || (a == 0.0 && b < -1.0))) return kInf;
  if (b == 0.0) {
    if (a > 0.0) return (std::pow(hi, a) - std::pow(lo, a)) / a;
    return std::log(hi / lo);
  }
  if (a == 0.0) return log_power_integral(lo == 0.0 ? -kInf : std::log(lo), std::log(hi), b);

  auto f = [a, b](double u) { return weight_u(u, a, b); };
  const double uh = std::log(hi);
  if (lo > 0.0) return gauss_pieces(f, std::log(lo), uh);

  // Interval touching t = 0: halve t repeatedly (steps of ln 2 in u) until the
  // increment is negligible, then add the geometric tail estimate.
  double total = 0.0, u = uh, prev = 0.0;
  if (uh > 0) {
    total = gauss_pieces(f, 0.0, uh);
    u = 0.0;
  }
  const double step = std::log(2.0);
  for (int k = 0; k < 200000; ++k) {
    const double inc = Gauss16::integrate(f, u - step, u);
    total += inc;
    u -= step;
    if (k > 2 && inc <= 1e-12 * total) {
      const double r = prev > 0 ? inc / prev : 0.0;
      if (r < 1.0) total += inc * r / (1.0 - r);
      break;
    }
    prev = inc;
  }
  return total;
}

/// sup over (lo, hi] of t^(1/p) l1(t)^alpha, including the limit at lo.
inline double sup_weight(double lo, double hi, double inv_p, double alpha) {
  auto w = [&](double t) { return std::pow(t, inv_p) * std::pow(l1(t), alpha); };
  double best = w(hi);
  if (lo > 0.0) {
    best = std::max(best, w(lo));
  } else {
    double limit = 0.0;
    if (inv_p == 0.0) limit = alpha > 0 ? kInf : (alpha == 0 ? 1.0 : 0.0);
    best = std::max(best, limit);
  }
  // Stationary points of u/p + alpha log(1 + |u|) on either side of u = 0, and the kink.
  std::vector<double> cand{1.0};
  if (inv_p > 0 && alpha < 0) cand.push_back(std::exp(-alpha / inv_p - 1.0));
  if (inv_p > 0 && alpha * (1.0 / inv_p) > 1.0) cand.push_back(std::exp(1.0 - alpha / inv_p));
  for (double t : cand)
    if (t > lo && t < hi) best = std::max(best, w(t));
  return best;
}

/// Maximizes h over [u1, u2] by sampling and a Brent polish around the best sample.
template <typename H>
double sup_sampled(H&& h, double u1, double u2, int samples = 65) {
  double best = -kInf, best_u = u1;
  for (int k = 0; k < samples; ++k) {
    const double u = u1 + (u2 - u1) * k / (samples - 1);
    const double v = h(u);
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  const double du = (u2 - u1) / (samples - 1);
  const double a = std::max(u1, best_u - du), b = std::min(u2, best_u + du);
  if (b > a) {
    auto r = boost::math::tools::brent_find_minima([&](double u) { return -h(u); }, a, b, 52);
    best = std::max(best, -r.second);
  }
  return best;
}

/// True when the closed-form profile makes the (p,q;alpha) quantity finite near t = 0.
inline bool analytic_finite(const PowerAsymptote& a, const LZParams& prm) {
  const double e = prm.inv_p() - a.exponent;
  const double lp = prm.alpha + a.log_power;
  constexpr double tiny = 1e-14;
  if (a.coefficient == 0.0) return true;
  if (std::isinf(prm.q)) return e > tiny || (std::abs(e) <= tiny && lp <= 0.0);
  return e > tiny || (std::abs(e) <= tiny && prm.q * lp < -1.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quasi-norms on f*

/// |f|_(p,q;alpha) of an exact step profile; +inf when the integral or sup diverges.
inline double quasi_norm(const StepProfile& prof, const LZParams& prm) {
  prm.validate();
  const auto& b = prof.breakpoints();
  const auto& v = prof.levels();
  if (std::isinf(prm.q)) {
    double best = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] > 0) best = std::max(best, v[i] * detail::sup_weight(b[i], b[i + 1], prm.inv_p(), prm.alpha));
    return best;
  }
  const double a = prm.q * prm.inv_p(), bb = prm.alpha * prm.q;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) continue;
    const double I = detail::power_log_integral(b[i], b[i + 1], a, bb);
    if (std::isinf(I)) return kInf;
    sum += std::pow(v[i], prm.q) * I;
  }
  return std::pow(sum, 1.0 / prm.q);
}

/// |f|_(p,q;alpha) of a closed-form profile. Divergence is decided from the profile's
/// asymptote at 0; finite values come from double-exponential quadrature in log t.
inline double quasi_norm(const AnalyticProfile& prof, const LZParams& prm) {
  prm.validate();
  if (!detail::analytic_finite(prof.near_zero, prm)) return kInf;
  const auto& az = prof.near_zero;
  const double T = prof.total_measure;
  const double ip = prm.inv_p();

  // log of t^(1/p) l1^alpha f*(t) at t = e^u; far below machine range use the asymptote.
  auto log_w = [&](double u) {
    if (u < -600.0) {
      if (az.coefficient == 0.0) return -kInf;
      return (ip - az.exponent) * u + (prm.alpha + az.log_power) * std::log1p(std::abs(u)) + std::log(az.coefficient);
    }
    const double t = std::exp(u);
    const double f = prof(t);
    if (f <= 0.0) return -kInf;
    return ip * u + prm.alpha * std::log1p(std::abs(u)) + std::log(f);
  };

  std::vector<double> splits{std::log(T)};
  if (T > 1.0) splits.push_back(0.0);
  for (double k : prof.kinks)
    if (k > 0 && k < T) splits.push_back(std::log(k));
  std::sort(splits.begin(), splits.end());

  if (std::isinf(prm.q)) {
    const double top = std::log(T);
    double best = detail::sup_sampled([&](double u) { return std::exp(log_w(u)); }, top - 80.0, top, 4001);
    // Limit as t -> 0.
    const double e = ip - az.exponent;
    if (std::abs(e) <= 1e-14 && prm.alpha + az.log_power == 0.0) best = std::max(best, az.coefficient);
    return best;
  }

  auto integrand = [&](double u) { return std::exp(prm.q * log_w(u)); };
  boost::math::quadrature::tanh_sinh<double> ts;
  boost::math::quadrature::exp_sinh<double> es;
  double sum = es.integrate(integrand, -kInf, splits.front());
  for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
    if (splits[i + 1] > splits[i]) sum += ts.integrate(integrand, splits[i], splits[i + 1]);
  }
  return std::pow(sum, 1.0 / prm.q);
}

// ---------------------------------------------------------------------------
// Norms on f**

/// ||f||_(p,q,alpha) = || t^(1/p - 1/q) l1^alpha f** ||_q, defined for p > 1.
inline double norm_double_star(const StepProfile& prof, const LZParams& prm) {
  prm.validate();
  if (!(prm.p > 1.0)) throw InvalidArgument("norm_double_star needs p > 1");
  const MaximalProfile mf(prof);
  const auto& b = prof.breakpoints();
  const auto& v = prof.levels();
  const double ip = prm.inv_p();

  // First step: f** = f* = v[0].
  const StepProfile first({0.0, b[1]}, {v[0]});
  if (std::isinf(prm.q)) {
    double best = quasi_norm(first, prm);
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double c = mf.hyperbolic_coefficient(i);
      auto h = [&](double u) {
        return std::exp(ip * u) * std::pow(1.0 + std::abs(u), prm.alpha) * (c * std::exp(-u) + v[i]);
      };
      const double u1 = std::log(b[i]), u2 = std::log(b[i + 1]);
      double s = std::max(h(u1), h(u2));
      if (u1 < 0 && u2 > 0) {
        s = std::max({s, detail::sup_sampled(h, u1, 0.0), detail::sup_sampled(h, 0.0, u2)});
      } else {
        s = std::max(s, detail::sup_sampled(h, u1, u2));
      }
      best = std::max(best, s);
    }
    return best;
  }
  const double first_norm = quasi_norm(first, prm);
  if (std::isinf(first_norm)) return kInf;
  double sum = std::pow(first_norm, prm.q);
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double c = mf.hyperbolic_coefficient(i);
    auto h = [&](double u) {
      const double base = std::exp(ip * u) * std::pow(1.0 + std::abs(u), prm.alpha) * (c * std::exp(-u) + v[i]);
      return std::pow(base, prm.q);
    };
    sum += detail::gauss_pieces(h, std::log(b[i]), std::log(b[i + 1]), 0.25);
  }
  return std::pow(sum, 1.0 / prm.q);
}

inline double norm_double_star(const AnalyticProfile& prof, const LZParams& prm) {
  prm.validate();
  if (!(prm.p > 1.0)) throw InvalidArgument("norm_double_star needs p > 1");
  return quasi_norm(maximal_function(prof), prm);
}

// ---------------------------------------------------------------------------
// Membership in F_d and G_d

enum class Verdict { member, non_member, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::member: return "member";
    case Verdict::non_member: return "non-member";
    default: return "inconclusive";
  }
}

/// How a limit indicator sequence behaves.
enum class LimitKind { zero, positive, diverging, undetermined };

inline const char* to_string(LimitKind k) {
  switch (k) {
    case LimitKind::zero: return "zero";
    case LimitKind::positive: return "positive";
    case LimitKind::diverging: return "diverging";
    default: return "undetermined";
  }
}

struct MembershipReport {
  std::string weight_class;  ///< e.g. "F_2" or "G_1"
  std::string method = "grid-limit";
  Verdict verdict = Verdict::inconclusive;
  LimitKind zero_kind = LimitKind::undetermined;
  double limit_at_zero = std::numeric_limits<double>::quiet_NaN();  ///< last sample, +inf if diverging
  LimitKind end_kind = LimitKind::undetermined;
  double limit_at_T = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> samples;  ///< (t, indicator value)
  // Fixed detection constants.
  double tol_zero = 0.0;
  double tol_zero_fraction = 1e-3;
  double stabilization_factor = 10.0;
  int window = 8;
  /// Value of an auxiliary finiteness integral when membership is decided by a majorant.
  double auxiliary_integral = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline LimitKind classify_sequence(const std::vector<double>& s, double tol_zero, const MembershipReport& r) {
  const int w = r.window;
  const int n = static_cast<int>(s.size());
  if (n < w) return LimitKind::undetermined;
  const double last = s.back();
  bool nonincreasing = true, increasing = true;
  double lo = kInf, hi = -kInf;
  for (int k = n - w; k < n; ++k) {
    lo = std::min(lo, s[k]);
    hi = std::max(hi, s[k]);
    if (k > n - w) {
      if (s[k] > s[k - 1]) nonincreasing = false;
      if (!(s[k] > s[k - 1])) increasing = false;
    }
  }
  if (!std::isfinite(last)) return LimitKind::diverging;
  if (nonincreasing && last <= tol_zero) return LimitKind::zero;
  if (increasing) {
    // Growing increments mean no finite limit; geometrically shrinking ones converge.
    const double d1 = s[n - 1] - s[n - 2];
    const double d0 = s[n - w + 1] - s[n - w];
    if (d1 >= 0.9 * d0) return LimitKind::diverging;
  }
  if (lo > r.stabilization_factor * tol_zero && (hi - lo) <= 1e-2 * hi) return LimitKind::positive;
  return LimitKind::undetermined;
}

/// Scans L on t_k = T 2^-k (k = 1..k_zero) and, when requested, on T (1 - 2^-k).
inline MembershipReport scan_limits(const std::function<double(double)>& L, double T, int k_zero, bool check_end,
                                    std::string cls) {
  MembershipReport r;
  r.weight_class = std::move(cls);
  std::vector<double> zero_seq, end_seq;
  std::vector<std::pair<double, double>> all;
  const double LT = L(T);
  all.emplace_back(T, LT);
  for (int k = 1; k <= k_zero; ++k) {
    const double t = std::ldexp(T, -k);
    zero_seq.push_back(L(t));
    all.emplace_back(t, zero_seq.back());
  }
  if (check_end) {
    for (int k = 1; k <= 50; ++k) {
      const double t = T * (1.0 - std::ldexp(1.0, -k));
      end_seq.push_back(L(t));
      all.emplace_back(t, end_seq.back());
    }
  }
  double mx = 0.0;
  for (const auto& [t, v] : all)
    if (std::isfinite(v)) mx = std::max(mx, v);
  r.tol_zero = r.tol_zero_fraction * mx;

  r.zero_kind = mx == 0.0 ? LimitKind::zero : classify_sequence(zero_seq, r.tol_zero, r);
  r.limit_at_zero = r.zero_kind == LimitKind::diverging ? kInf : (zero_seq.empty() ? LT : zero_seq.back());
  if (check_end) {
    r.end_kind = mx == 0.0 ? LimitKind::zero : classify_sequence(end_seq, r.tol_zero, r);
    r.limit_at_T = r.end_kind == LimitKind::diverging ? kInf : end_seq.back();
  }
  // Keep at most ~128 diagnostics: thin the zero sequence geometrically, keep its tail.
  r.samples.push_back(all.front());
  for (int k = 1; k <= k_zero; ++k)
    if (k <= 32 || k % 16 == 0 || k > k_zero - r.window) r.samples.push_back(all[k]);
  for (std::size_t k = 0; k < end_seq.size(); k += 7) r.samples.push_back(all[1 + k_zero + k]);
  return r;
}

inline int grid_depth(const StepProfile& p) {
  // Sampled data resolves nothing below its first step.
  const double t1 = p.breakpoints()[1];
  return std::max(0, static_cast<int>(std::floor(std::log2(p.total_measure() / t1))));
}

constexpr int kAnalyticDepth = 1000;

inline std::string class_name(char c, double d) {
  std::string s = fmt17(d);
  return std::string(1, c) + "_" + s;
}

}  // namespace detail

/// How far below the first breakpoint a step profile is trusted. `sampled` treats the
/// profile as a mesh sample of an unknown weight and stops at its first step; `exact_data`
/// treats it as the weight itself.
enum class Resolution { sampled, exact_data };

namespace detail {
inline double measure_of(const StepProfile& p) { return p.total_measure(); }
inline double measure_of(const AnalyticProfile& p) { return p.total_measure; }

template <typename Profile>
int scan_depth(const Profile& prof, Resolution res) {
  if constexpr (std::is_same_v<Profile, StepProfile>) {
    if (res == Resolution::sampled) return grid_depth(prof);
  }
  return kAnalyticDepth;
}
}  // namespace detail

/// F_d membership: lim_{t->0} t^(1/d) f*(t) = 0. The end-point sequence t -> T is
/// reported; it only vetoes membership if it diverges (f* is bounded near T for any
/// nonincreasing profile, so that limit is always finite on a bounded boundary).
template <typename Profile>
MembershipReport membership_F_d(const Profile& prof, double d, Resolution res = Resolution::sampled) {
  if (!(d > 1.0)) throw InvalidArgument("membership_F_d needs d > 1");
  const int depth = detail::scan_depth(prof, res);
  auto L = [&](double t) { return std::pow(t, 1.0 / d) * prof(t); };
  auto r = detail::scan_limits(L, detail::measure_of(prof), depth, true, detail::class_name('F', d));
  if (r.zero_kind == LimitKind::zero && r.end_kind != LimitKind::diverging)
    r.verdict = Verdict::member;
  else if (r.zero_kind == LimitKind::positive || r.zero_kind == LimitKind::diverging ||
           r.end_kind == LimitKind::diverging)
    r.verdict = Verdict::non_member;
  return r;
}

/// G_d membership: lim_{t->0} t^(1/d) l1(t)^N f*(t) = 0.
template <typename Profile>
MembershipReport membership_G_d(const Profile& prof, double d, int N = 2, Resolution res = Resolution::sampled) {
  if (!(d >= 1.0)) throw InvalidArgument("membership_G_d needs d >= 1");
  const int depth = detail::scan_depth(prof, res);
  auto L = [&](double t) { return std::pow(t, 1.0 / d) * std::pow(l1(t), N) * prof(t); };
  auto r = detail::scan_limits(L, detail::measure_of(prof), depth, false, detail::class_name('G', d));
  if (r.zero_kind == LimitKind::zero)
    r.verdict = Verdict::member;
  else if (r.zero_kind == LimitKind::positive || r.zero_kind == LimitKind::diverging)
    r.verdict = Verdict::non_member;
  return r;
}

// ---------------------------------------------------------------------------
// Embeddings and Hoelder

struct EmbeddingGap {
  double strong = 0.0;  ///< norm in the smaller space
  double weak = 0.0;    ///< norm in the larger space
};

/// Both quasi-norms for an embedding L^{strong} -> L^{weak}. Accepts either
/// r > p (any second indices), or equal first index with
/// (q <= s and alpha >= beta) or (q > s and alpha + 1/q > beta + 1/s).
template <typename Profile>
EmbeddingGap embedding_gap(const Profile& prof, const LZParams& strong, const LZParams& weak) {
  strong.validate();
  weak.validate();
  const bool finer_p = strong.inv_p() < weak.inv_p();
  bool same_p = strong.p == weak.p;
  if (same_p) {
    const double iq = std::isinf(strong.q) ? 0.0 : 1.0 / strong.q;
    const double is = std::isinf(weak.q) ? 0.0 : 1.0 / weak.q;
    same_p = (strong.q <= weak.q && strong.alpha >= weak.alpha) ||
             (strong.q > weak.q && strong.alpha + iq > weak.alpha + is);
  }
  if (!finer_p && !same_p) throw InvalidArgument("embedding_gap: parameters match neither embedding hypothesis");
  return {quasi_norm(prof, strong), quasi_norm(prof, weak)};
}

struct HolderSplit {
  double p1, q1, p2, q2;
};

struct HolderPair {
  double product_norm = 0.0;
  double bound = 0.0;
  double constant = 1.0;
};

/// ||f g||_(p,q) against C |f|_(p1,q1) |g|_(p2,q2) with 1/p = 1/p1 + 1/p2, 1/q = 1/q1 + 1/q2
/// and C = p' (C = 1 when p = 1, which also requires q = 1). Factors use the f** norms; the
/// product uses the f** norm for p > 1 and the L^1 norm for p = 1.
inline HolderPair holder_pair(const BoundaryFunction& f, const BoundaryFunction& g, const HolderSplit& s) {
  if (!f.same_support(g)) throw InvalidArgument("holder_pair: functions live on different meshes");
  for (double pi : {s.p1, s.p2})
    if (!(pi > 1.0) || std::isinf(pi)) throw InvalidArgument("holder_pair: p_i must lie in (1, inf)");
  for (double qi : {s.q1, s.q2})
    if (!(qi >= 1.0)) throw InvalidArgument("holder_pair: q_i must lie in [1, inf]");
  const double inv_p = 1.0 / s.p1 + 1.0 / s.p2;
  const double inv_q = (std::isinf(s.q1) ? 0.0 : 1.0 / s.q1) + (std::isinf(s.q2) ? 0.0 : 1.0 / s.q2);
  if (inv_p > 1.0 + 1e-14 || inv_q > 1.0 + 1e-14) throw InvalidArgument("holder_pair: exponent mismatch, p or q below 1");
  const double p = 1.0 / inv_p;
  const double q = inv_q == 0.0 ? kInf : 1.0 / inv_q;

  std::vector<double> prod(f.size());
  for (std::size_t e = 0; e < f.size(); ++e) prod[e] = f.values()[e] * g.values()[e];
  const BoundaryFunction fg(std::move(prod), f.measures());

  HolderPair out;
  const auto fs = decreasing_rearrangement(f), gs = decreasing_rearrangement(g);
  const double rhs = norm_double_star(fs, {s.p1, s.q1, 0.0}) * norm_double_star(gs, {s.p2, s.q2, 0.0});
  if (std::abs(p - 1.0) <= 1e-14) {
    if (std::abs(q - 1.0) > 1e-14) throw InvalidArgument("holder_pair: exponent mismatch, p = 1 needs q = 1");
    out.constant = 1.0;
    out.product_norm = decreasing_rearrangement(fg).integral();
  } else {
    out.constant = p / (p - 1.0);
    out.product_norm = norm_double_star(decreasing_rearrangement(fg), {p, q, 0.0});
  }
  out.bound = out.constant * rhs;
  return out;
}

}  // namespace steklov
