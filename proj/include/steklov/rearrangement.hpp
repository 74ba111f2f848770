#pragma once

// Decreasing rearrangement with respect to boundary arc length, its maximal function,
// and the Hardy-Littlewood pairing. Everything over edge-piecewise-constant data is
// computed exactly by sorting.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "steklov/error.hpp"
#include "steklov/mesh.hpp"
#include "steklov/util.hpp"

namespace steklov {

/// Nonincreasing right-continuous step function on (0, T]:
/// value levels[i] on (breakpoints[i], breakpoints[i+1]].
class StepProfile {
 public:
  StepProfile(std::vector<double> breakpoints, std::vector<double> levels)
      : breaks_(std::move(breakpoints)), levels_(std::move(levels)) {
    if (levels_.empty() || breaks_.size() != levels_.size() + 1)
      throw InvalidArgument("step profile needs m levels and m+1 breakpoints");
    if (breaks_.front() != 0.0) throw InvalidArgument("step profile must start at t = 0");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1])) throw InvalidArgument("step profile breakpoints must increase strictly");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!(levels_[i] >= 0.0) || !std::isfinite(levels_[i]))
        throw InvalidArgument("step profile levels must be finite and nonnegative");
      if (i > 0 && levels_[i] > levels_[i - 1]) throw InvalidArgument("step profile levels must be nonincreasing");
    }
  }

  /// Single step of height c on (0, T].
  static StepProfile constant(double c, double T) { return StepProfile({0.0, T}, {std::abs(c)}); }

  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& levels() const { return levels_; }
  std::size_t steps() const { return levels_.size(); }
  double total_measure() const { return breaks_.back(); }

  /// Right-continuous evaluation; t <= 0 gives the top level, t > T gives 0.
  double operator()(double t) const {
    if (t > breaks_.back()) return 0.0;
    // First breakpoint >= t closes the step containing t.
    auto it = std::lower_bound(breaks_.begin() + 1, breaks_.end(), t);
    return levels_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
  }

  /// Measure of {t : profile(t) > s}.
  double distribution(double s) const {
    std::size_t i = 0;
    while (i < levels_.size() && levels_[i] > s) ++i;
    return breaks_[i];
  }

  double integral() const {
    double s = 0.0;
    for (std::size_t i = 0; i < levels_.size(); ++i) s += levels_[i] * (breaks_[i + 1] - breaks_[i]);
    return s;
  }

  /// Profile of |f|^r, which is (f*)^r.
  StepProfile power(double r) const {
    auto lv = levels_;
    for (double& v : lv) v = std::pow(v, r);
    return {breaks_, std::move(lv)};
  }

  StepProfile scaled(double c) const {
    auto lv = levels_;
    for (double& v : lv) v *= std::abs(c);
    return {breaks_, std::move(lv)};
  }

 private:
  std::vector<double> breaks_;
  std::vector<double> levels_;
};

/// Asymptotic form coefficient * t^(-exponent) * l1(t)^log_power as t -> 0.
struct PowerAsymptote {
  double coefficient = 0.0;
  double exponent = 0.0;
  double log_power = 0.0;
};

/// Closed-form decreasing rearrangement on (0, T].
struct AnalyticProfile {
  std::string label;
  std::function<double(double)> value;
  double total_measure = 0.0;
  PowerAsymptote near_zero;
  /// Interior points where the profile is not smooth (e.g. the end of its support).
  std::vector<double> kinks;

  double operator()(double t) const { return t > total_measure ? 0.0 : value(t); }
};

namespace detail {

inline std::vector<std::pair<double, double>> sorted_abs(const BoundaryFunction& f) {
  std::vector<std::pair<double, double>> items;
  items.reserve(f.size());
  for (std::size_t e = 0; e < f.size(); ++e) items.emplace_back(std::abs(f.values()[e]), f.measures()[e]);
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  return items;
}

}  // namespace detail

/// Exact rearrangement: |values| sorted descending, measures accumulated as breakpoints.
/// Equal levels share one step; a zero tail is kept so T equals the total measure.
inline StepProfile decreasing_rearrangement(const BoundaryFunction& f) {
  const auto items = detail::sorted_abs(f);
  std::vector<double> breaks{0.0};
  std::vector<double> levels;
  double acc = 0.0;
  for (const auto& [v, m] : items) {
    acc += m;
    if (!levels.empty() && levels.back() == v) {
      breaks.back() = acc;
    } else {
      levels.push_back(v);
      breaks.push_back(acc);
    }
  }
  return {std::move(breaks), std::move(levels)};
}

/// H^1{|f| > s}, accumulated in the same order as decreasing_rearrangement so the two
/// agree bit for bit.
inline double distribution(const BoundaryFunction& f, double s) {
  if (!(s > 0)) throw InvalidArgument("distribution needs s > 0");
  double acc = 0.0;
  for (const auto& [v, m] : detail::sorted_abs(f)) {
    if (!(v > s)) break;
    acc += m;
  }
  return acc;
}

/// f**(t) = (1/t) * integral_0^t f*, stored exactly: on step i it equals
/// (cumulative[i] + levels[i] * (t - breakpoints[i])) / t.
class MaximalProfile {
 public:
  explicit MaximalProfile(const StepProfile& base) : base_(base) {
    const auto& b = base_.breakpoints();
    const auto& v = base_.levels();
    cumulative_.assign(v.size() + 1, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) cumulative_[i + 1] = cumulative_[i] + v[i] * (b[i + 1] - b[i]);
  }

  const StepProfile& base() const { return base_; }
  const std::vector<double>& cumulative() const { return cumulative_; }

  double operator()(double t) const {
    const auto& b = base_.breakpoints();
    if (t <= 0) return base_.levels().front();
    if (t >= b.back()) return cumulative_.back() / t;
    auto it = std::lower_bound(b.begin() + 1, b.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - b.begin()) - 1;
    if (i == 0) return base_.levels()[0];
    return (cumulative_[i] + base_.levels()[i] * (t - b[i])) / t;
  }

  /// On step i >= 1, f** = c/t + v; returns c = cumulative[i] - v * breakpoints[i].
  double hyperbolic_coefficient(std::size_t i) const {
    return cumulative_[i] - base_.levels()[i] * base_.breakpoints()[i];
  }

 private:
  StepProfile base_;
  std::vector<double> cumulative_;
};

inline MaximalProfile maximal_function(const StepProfile& p) { return MaximalProfile(p); }

/// Maximal function of a closed-form profile, by double-exponential quadrature of f*
/// (which handles the integrable singularity at 0).
inline AnalyticProfile maximal_function(const AnalyticProfile& p) {
  AnalyticProfile out;
  out.label = p.label + "**";
  out.total_measure = p.total_measure;
  out.kinks = p.kinks;
  const auto& a = p.near_zero;
  // f* ~ A t^-b l1^k  =>  f** ~ A/(1-b) t^-b l1^k as t -> 0 (b < 1).
  out.near_zero = {a.exponent < 1 ? a.coefficient / (1 - a.exponent) : kInf, a.exponent, a.log_power};
  out.value = [p](double t) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    double upper = std::min(t, p.total_measure);
    double acc = 0.0, lo = 0.0;
    for (double k : p.kinks) {
      if (k <= lo || k >= upper) continue;
      acc += integrator.integrate([&](double s) { return p(s); }, lo, k);
      lo = k;
    }
    acc += integrator.integrate([&](double s) { return p(s); }, lo, upper);
    return acc / t;
  };
  return out;
}

struct HardyLittlewoodPair {
  double lhs = 0.0;  ///< integral over the boundary of f g
  double rhs = 0.0;  ///< integral over (0, T) of f* g*
};

inline HardyLittlewoodPair hardy_littlewood_pair(const BoundaryFunction& f, const BoundaryFunction& g) {
  if (!f.same_support(g)) throw InvalidArgument("hardy_littlewood_pair: functions live on different meshes");
  for (std::size_t e = 0; e < f.size(); ++e)
    if (f.values()[e] < 0 || g.values()[e] < 0) throw InvalidArgument("hardy_littlewood_pair: functions must be nonnegative");
  HardyLittlewoodPair out;
  for (std::size_t e = 0; e < f.size(); ++e) out.lhs += f.values()[e] * g.values()[e] * f.measures()[e];

  const auto fs = decreasing_rearrangement(f);
  const auto gs = decreasing_rearrangement(g);
  const auto& fb = fs.breakpoints();
  const auto& gb = gs.breakpoints();
  std::size_t i = 0, j = 0;
  double t = 0.0;
  while (i < fs.steps() && j < gs.steps()) {
    const double next = std::min(fb[i + 1], gb[j + 1]);
    out.rhs += fs.levels()[i] * gs.levels()[j] * (next - t);
    t = next;
    if (fb[i + 1] <= t) ++i;
    if (gb[j + 1] <= t) ++j;
  }
  return out;
}

}  // namespace steklov
