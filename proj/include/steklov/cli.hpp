#pragma once

// Command-line front end. run() parses, dispatches and maps failures to exit codes:
// 0 success, 1 domain error, 2 usage error. Failures print one JSON line on the error stream.
// Numbers are written with 17 significant digits and no timings, so reruns are byte-identical.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "steklov/bifurcation.hpp"
#include "steklov/eigensolver.hpp"
#include "steklov/error.hpp"
#include "steklov/fem_core.hpp"
#include "steklov/lorentz_zygmund.hpp"
#include "steklov/mesh.hpp"
#include "steklov/rearrangement.hpp"
#include "steklov/util.hpp"
#include "steklov/weight_catalog.hpp"

namespace steklov::cli {

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

/// One JSON object on one line, keys in insertion order.
class JsonLine {
 public:
  JsonLine& num(const std::string& k, double v) { return raw(k, json_num(v)); }
  JsonLine& integer(const std::string& k, long long v) { return raw(k, std::to_string(v)); }
  JsonLine& str(const std::string& k, const std::string& v) { return raw(k, json_str(v)); }
  JsonLine& boolean(const std::string& k, bool v) { return raw(k, v ? "true" : "false"); }
  JsonLine& raw(const std::string& k, const std::string& v) {
    body_ += (body_.empty() ? "" : ",") + json_str(k) + ":" + v;
    return *this;
  }
  std::string line() const { return "{" + body_ + "}\n"; }

 private:
  std::string body_;
};

/// Rows of doubles written as CSV (with header) or as one JSON object per row.
class SeriesWriter {
 public:
  SeriesWriter(std::ostream& out, std::vector<std::string> columns, bool jsonl)
      : out_(out), cols_(std::move(columns)), jsonl_(jsonl) {
    if (jsonl_) return;
    for (std::size_t i = 0; i < cols_.size(); ++i) out_ << (i ? "," : "") << cols_[i];
    out_ << "\n";
  }
  void row(const std::vector<double>& v) {
    if (jsonl_) {
      JsonLine j;
      for (std::size_t i = 0; i < cols_.size(); ++i) j.num(cols_[i], v[i]);
      out_ << j.line();
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << fmt17(v[i]);
    out_ << "\n";
  }

 private:
  std::ostream& out_;
  std::vector<std::string> cols_;
  bool jsonl_;
};

// ---------------------------------------------------------------------------
// Mesh and weight sources

struct MeshSource {
  std::string file;
  std::string domain;  ///< square | disk | rect | box; empty means the weight's natural domain
  int n = 0;           ///< 0 means the domain default
  double R = 0.25;
  double grading = 1.0;
};

struct WeightChoice {
  std::optional<WeightSpec> spec;
  std::string file;
  std::string name;

  DomainTag natural_domain() const {
    if (!spec) return DomainTag::any;
    return spec->kind == WeightKind::composite ? spec->base->domain : spec->domain;
  }
};

namespace detail {

inline std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

inline double require_number(const std::string& s, const std::string& what) {
  const auto v = to_number(s);
  if (!v) throw InvalidArgument("cannot read " + what + " from '" + s + "'");
  return *v;
}

/// Value of key=<v> inside the ':'-separated suffix of a catalog name.
inline std::optional<double> name_param(const std::string& name, const std::string& key) {
  std::size_t at = name.find(':');
  while (at != std::string::npos) {
    const std::size_t next = name.find(':', at + 1);
    const std::string part = name.substr(at + 1, next == std::string::npos ? std::string::npos : next - at - 1);
    if (part.rfind(key + "=", 0) == 0) return require_number(part.substr(key.size() + 1), key);
    at = next;
  }
  return std::nullopt;
}

inline std::string head(const std::string& name) { return name.substr(0, name.find(':')); }

}  // namespace detail

/// Catalog names: g1-circle, g2-box[:p=<p>], h-box[:p=<p>], g3-box[:q=<q>], const:<c>,
/// composite:<base>[-<c>]. The composite constant follows the last '-' when numeric.
inline WeightSpec parse_catalog_weight(const std::string& name, double p_default, double R) {
  const std::string h = detail::head(name);
  if (name.rfind("composite:", 0) == 0) {
    std::string inner = name.substr(10);
    std::optional<double> c;
    if (const auto dash = inner.rfind('-'); dash != std::string::npos && dash > 0) {
      if (const auto v = detail::to_number(inner.substr(dash + 1))) {
        c = *v;
        inner = inner.substr(0, dash);
      }
    }
    if (inner.rfind("composite:", 0) == 0) throw InvalidArgument("nested composite weights are not supported");
    WeightSpec w = composite(parse_catalog_weight(inner, p_default, R), c);
    w.name = name;
    return w;
  }
  if (h == "const") {
    if (name.size() <= 6) throw InvalidArgument("const weight needs a value, e.g. const:1");
    WeightSpec w = constant_weight(detail::require_number(name.substr(6), "constant"));
    w.name = name;
    return w;
  }
  if (h == "g1-circle") return example_2_1();
  if (h == "g2-box") return example_2_2(detail::name_param(name, "p").value_or(p_default), R);
  if (h == "h-box") return example_2_2_majorant(detail::name_param(name, "p").value_or(p_default), R);
  if (h == "g3-box") return example_2_3(detail::name_param(name, "q").value_or(2.0), R);
  throw InvalidArgument("unknown weight '" + name + "'");
}

/// Per-edge weight file: one value per boundary edge in loop order, either "value" or
/// "edge,value" lines. A non-numeric first line is a header; '#' starts a comment.
inline BoundaryFunction load_weight_csv(const std::string& path, const Mesh& m) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weight file '" + path + "'");
  const std::size_t ne = m.num_boundary_edges();
  std::vector<double> vals(ne, 0.0);
  std::vector<bool> seen(ne, false);
  std::size_t count = 0;
  std::string line;
  int lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }), line.end());
    if (line.empty()) continue;
    const bool header_allowed = std::exchange(first_content, false);
    const auto comma = line.find(',');
    std::optional<double> idx, val;
    if (comma == std::string::npos) {
      val = detail::to_number(line);
    } else {
      idx = detail::to_number(line.substr(0, comma));
      val = detail::to_number(line.substr(comma + 1));
    }
    if (!val || (comma != std::string::npos && !idx)) {
      if (header_allowed) continue;
      throw ParseError("expected 'value' or 'edge,value'", lineno);
    }
    std::size_t e = count;
    if (idx) {
      if (*idx < 0 || *idx != std::floor(*idx) || *idx >= static_cast<double>(ne))
        throw ParseError("edge index out of range", lineno);
      e = static_cast<std::size_t>(*idx);
    }
    if (e >= ne) throw ParseError("more values than boundary edges (" + std::to_string(ne) + ")", lineno);
    if (seen[e]) throw ParseError("edge " + std::to_string(e) + " listed twice", lineno);
    if (!std::isfinite(*val)) throw ParseError("non-finite weight value", lineno);
    seen[e] = true;
    vals[e] = *val;
    ++count;
  }
  if (count != ne)
    throw ParseError("weight file lists " + std::to_string(count) + " edges, mesh has " + std::to_string(ne), lineno);
  return BoundaryFunction(m, std::move(vals));
}

inline WeightChoice resolve_weight(const std::string& name, double p_default, double R) {
  WeightChoice w;
  w.name = name;
  try {
    w.spec = parse_catalog_weight(name, p_default, R);
  } catch (const InvalidArgument&) {
    if (!std::filesystem::exists(name)) throw;
    w.file = name;
  }
  return w;
}

inline MeshPtr build_mesh(const MeshSource& s, DomainTag natural) {
  if (!s.file.empty()) return share(load_mesh(s.file));
  std::string d = s.domain;
  if (d.empty()) d = natural == DomainTag::circle ? "disk" : natural == DomainTag::box ? "box" : "square";
  if (d == "square") return share(make_square(s.n > 0 ? s.n : 16));
  if (d == "disk") return share(make_disk(s.n > 0 ? s.n : 256));
  if (d == "rect" || d == "box") {
    const int n = s.n > 0 ? s.n : 20;
    return share(s.grading > 1.0 ? make_graded_box(s.R, n, s.grading) : make_box(s.R, n));
  }
  throw InvalidArgument("unknown domain '" + d + "' (square, disk, rect, box)");
}

inline BoundaryFunction sample_weight(const WeightChoice& w, const Mesh& m) {
  return w.spec ? sample_on_boundary(*w.spec, m) : load_weight_csv(w.file, m);
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

/// Writes to `path`, or to `fallback` when the path is empty.
inline void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(fallback);
    return;
  }
  auto f = open_out(path);
  body(f);
}

/// Line plot of lambda against w1p_norm with the eigenvalue marked.
inline void write_branch_svg(std::ostream& out, const std::vector<BranchPoint>& pts, double lambda1) {
  const double W = 640, H = 420, m = 56;
  double x0 = 0, x1 = 0, y0 = lambda1, y1 = lambda1;
  for (const auto& b : pts) {
    x1 = std::max(x1, b.w1p_norm);
    y0 = std::min(y0, b.lambda);
    y1 = std::max(y1, b.lambda);
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y0))) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto X = [&](double v) { return m + (W - 2 * m) * (v - x0) / (x1 - x0); };
  auto Y = [&](double v) { return H - m - (H - 2 * m) * (v - y0) / (y1 - y0); };
  auto f = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << m << "\" y1=\"" << f(Y(lambda1)) << "\" x2=\"" << W - m << "\" y2=\"" << f(Y(lambda1))
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& b : pts) out << f(X(b.w1p_norm)) << "," << f(Y(b.lambda)) << " ";
  out << "\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">w1p_norm (0 to " << fmt17(x1)
      << ")</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\">lambda</text>\n";
  out << "<text x=\"" << W - m << "\" y=\"" << f(Y(lambda1) - 6) << "\" text-anchor=\"end\">lambda_1 = "
      << fmt17(lambda1) << "</text>\n";
  out << "</svg>\n";
}

inline std::string membership_json(const MembershipReport& r, const std::string& weight) {
  return JsonLine()
      .str("weight", weight)
      .str("class", r.weight_class)
      .str("method", r.method)
      .str("verdict", to_string(r.verdict))
      .str("zero_kind", to_string(r.zero_kind))
      .num("limit_at_zero", r.limit_at_zero)
      .str("end_kind", to_string(r.end_kind))
      .num("limit_at_T", r.limit_at_T)
      .num("auxiliary_integral", r.auxiliary_integral)
      .num("tol_zero", r.tol_zero)
      .integer("samples", static_cast<long long>(r.samples.size()))
      .line();
}

inline std::string admissibility_json(const AdmissibilityReport& a, const std::string& weight, double p) {
  return JsonLine()
      .str("weight", weight)
      .num("p", p)
      .boolean("admissible", a.admissible)
      .boolean("gplus_nontrivial", a.gplus_nontrivial)
      .num("integral_g", a.integral_g)
      .str("regime", to_string(a.regime))
      .str("class", a.membership.weight_class)
      .str("verdict", to_string(a.membership.verdict))
      .str("method", a.membership.method)
      .line();
}

/// Admissibility on the mesh: sign data from the sampled weight, class membership from
/// the closed-form profile when the weight is a catalog entry.
inline AdmissibilityReport mesh_admissibility(const WeightChoice& w, const BoundaryFunction& g, double p) {
  AdmissibilityReport a = admissibility(g, p);
  if (w.spec && w.spec->kind != WeightKind::constant) {
    Regime reg{};
    const auto [cls, d] = steklov::detail::required_class(p, 2, reg);
    a.membership = catalog_membership(*w.spec, cls, d);
    a.admissible = a.gplus_nontrivial && a.integral_g < 0 && a.membership.verdict == Verdict::member;
  }
  return a;
}

inline void require_admissible(const AdmissibilityReport& a) {
  if (a.admissible) return;
  std::string why;
  if (!a.gplus_nontrivial) why = "g+ vanishes";
  else if (!(a.integral_g < 0)) why = "integral of g is " + fmt17(a.integral_g) + " >= 0";
  else why = "weight is not in " + a.membership.weight_class + " (" + to_string(a.membership.verdict) + ")";
  throw InadmissibleWeight("inadmissible weight: " + why);
}

inline std::string eigen_json(const EigenResult& r, const FemSpace& V, const BoundaryFunction& g) {
  const auto pc = principality_check(r);
  return JsonLine()
      .num("lambda1", r.lambda1)
      .num("p", r.p)
      .num("residual_norm", r.residual_norm)
      .integer("seeds_used", r.seeds_used)
      .num("seed_agreement", r.seed_agreement)
      .num("epsilon_used", r.epsilon_used)
      .integer("best_seed", r.best_seed)
      .num("boundary_G", boundary_G(V, r.phi1.coefficients, g, r.p))
      .boolean("principal", pc.positive)
      .num("min_phi1", pc.min_value)
      .integer("vertices", static_cast<long long>(V.size()))
      .line();
}

inline void write_phi_csv(std::ostream& out, const Field& f) {
  out << "vertex,x,y,phi\n";
  const auto& vs = f.mesh->vertices();
  for (std::size_t i = 0; i < vs.size(); ++i)
    out << i << "," << fmt17(vs[i].x) << "," << fmt17(vs[i].y) << "," << fmt17(f.coefficients[i]) << "\n";
}

inline void write_branch(std::ostream& out, const std::vector<BranchPoint>& pts, bool jsonl) {
  SeriesWriter w(out, {"arclength", "lambda", "w1p_norm", "sup_norm", "newton_iters"}, jsonl);
  for (const auto& b : pts) w.row({b.arclength, b.lambda, b.w1p_norm, b.sup_norm, static_cast<double>(b.newton_iters)});
}

/// Default gamma = p + 1; where that leaves (max(2, p), p / (2 - p)), the midpoint of that interval.
inline double default_gamma(double p) {
  if (p == 2.0 || p + 1.0 < p / (2.0 - p)) return p + 1.0;
  return 0.5 * (std::max(2.0, p) + p / (2.0 - p));
}

// ---------------------------------------------------------------------------
// Subcommand settings

struct Common {
  MeshSource mesh;
  std::string weight;
  double p = 2.0;
  std::uint64_t rng_seed = 1;
  std::string out;
  std::string format = "csv";
};

inline void add_mesh_options(CLI::App* c, Common& o) {
  c->add_option("--mesh", o.mesh.file, "Mesh file ('nv nt', vertices, 0-based triangles)")->check(CLI::ExistingFile);
  c->add_option("--domain", o.mesh.domain, "Built-in domain: square, disk, rect (alias box)")
      ->check(CLI::IsMember({"square", "disk", "rect", "box"}));
  c->add_option("--n", o.mesh.n, "Edges per side (square, rect) or boundary edges (disk)")->check(CLI::PositiveNumber);
  c->add_option("--R", o.mesh.R, "Half-width of the box (-R, R) x (0, 2R)")->check(CLI::PositiveNumber);
  c->add_option("--grading", o.mesh.grading, "Box grading exponent toward x = 0 and y = 0 (1 = uniform)");
}

inline void add_weight_option(CLI::App* c, Common& o, bool required = true) {
  auto* opt = c->add_option("--weight", o.weight,
                            "g1-circle, g2-box[:p=P], h-box[:p=P], g3-box[:q=Q], const:C, composite:BASE[-C], or a "
                            "per-edge CSV file");
  if (required) opt->required();
}

inline void add_p_option(CLI::App* c, Common& o) {
  c->add_option("--p", o.p, "p-Laplacian exponent in (1, 2]")->capture_default_str();
}

inline void check_p(double p) {
  if (!(p > 1.0 && p <= 2.0)) throw InvalidArgument("p must lie in (1, 2], got " + fmt17(p));
}

struct Problem {
  WeightChoice weight;
  MeshPtr mesh;
  std::unique_ptr<FemSpace> V;
  std::optional<BoundaryFunction> g;
};

inline Problem make_problem(const Common& o, double weight_p) {
  Problem pr;
  pr.weight = resolve_weight(o.weight, weight_p, o.mesh.R);
  pr.mesh = build_mesh(o.mesh, pr.weight.natural_domain());
  pr.V = std::make_unique<FemSpace>(pr.mesh);
  pr.g = sample_weight(pr.weight, *pr.mesh);
  return pr;
}

/// f weight for the perturbation: "default" (smoothed indicator of g > 0), "zero", or a weight name.
inline std::optional<PerturbationSpec> make_perturbation(const std::string& f_weight, double gamma, double p,
                                                         const Problem& pr) {
  if (f_weight == "zero") return std::nullopt;
  PerturbationSpec s{gamma,
                     f_weight == "default"
                         ? default_perturbation_weight(*pr.g)
                         : sample_weight(resolve_weight(f_weight, p, pr.weight.spec ? pr.weight.spec->R : 0.25), *pr.mesh),
                     f_weight};
  s.validate(p);
  return s;
}

inline EigenResult solve_first(const Problem& pr, double p, int seeds, double tol, std::uint64_t rng) {
  require_admissible(mesh_admissibility(pr.weight, *pr.g, p));
  EigenOptions eo;
  eo.seeds = seeds;
  eo.tolerance = tol;
  eo.rng_seed = rng;
  return first_eigenpair(*pr.V, *pr.g, p, eo);
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_rearrange(const Common& o, double weight_p, std::ostream& out) {
  const Problem pr = make_problem(o, weight_p);
  const auto prof = decreasing_rearrangement(*pr.g);
  emit(o.out, out, [&](std::ostream& s) {
    SeriesWriter w(s, {"t", "value"}, o.format == "jsonl");
    const auto& br = prof.breakpoints();
    const auto& lv = prof.levels();
    for (std::size_t i = 0; i < br.size(); ++i) {
      if (i > 0) w.row({br[i], lv[i - 1]});
      if (i < lv.size()) w.row({br[i], lv[i]});
    }
  });
}

struct NormArgs {
  double q = 2.0;
  std::string q_text = "2";
  double alpha = 0.0;
  double weight_p = 1.5;
  bool sampled = false;
};

inline void cmd_norm(const Common& o, const NormArgs& a, std::ostream& out) {
  const double q = detail::require_number(a.q_text, "q");
  const LZParams prm{o.p, q, a.alpha};
  prm.validate();
  const WeightChoice w = resolve_weight(o.weight, a.weight_p, o.mesh.R);
  std::optional<AnalyticProfile> ap;
  if (w.spec && !a.sampled) {
    try {
      ap = analytic_rearrangement(*w.spec);
    } catch (const Unsupported&) {
    }
  }
  JsonLine j;
  j.str("weight", o.weight).num("p", prm.p).num("q", prm.q).num("alpha", prm.alpha);
  if (ap) {
    j.str("profile", "analytic").num("quasi_norm", quasi_norm(*ap, prm));
    if (prm.p > 1) j.num("norm_double_star", norm_double_star(*ap, prm));
  } else {
    const auto mesh = build_mesh(o.mesh, w.natural_domain());
    const auto prof = decreasing_rearrangement(sample_weight(w, *mesh));
    j.str("profile", "mesh").integer("steps", static_cast<long long>(prof.steps()));
    j.num("quasi_norm", quasi_norm(prof, prm));
    if (prm.p > 1) j.num("norm_double_star", norm_double_star(prof, prm));
  }
  emit(o.out, out, [&](std::ostream& s) { s << j.line(); });
}

inline void cmd_check_weight(const Common& o, const std::string& cls_text, std::ostream& out) {
  const WeightChoice w = resolve_weight(o.weight, o.p, o.mesh.R);
  std::string text;
  if (!cls_text.empty()) {
    const auto colon = cls_text.find(':');
    if (colon != 1 || (cls_text[0] != 'F' && cls_text[0] != 'G'))
      throw InvalidArgument("--class must look like F:<d> or G:<d>");
    const char cls = cls_text[0];
    const double d = detail::require_number(cls_text.substr(2), "class index");
    MembershipReport r;
    if (w.spec) {
      r = catalog_membership(*w.spec, cls, d);
    } else {
      const auto mesh = build_mesh(o.mesh, DomainTag::any);
      const auto prof = decreasing_rearrangement(sample_weight(w, *mesh));
      r = cls == 'F' ? membership_F_d(prof, d, Resolution::exact_data)
                     : membership_G_d(prof, d, 2, Resolution::exact_data);
    }
    text = membership_json(r, o.weight);
  } else {
    check_p(o.p);
    const auto mesh = build_mesh(o.mesh, w.natural_domain());
    const auto g = sample_weight(w, *mesh);
    const auto a = mesh_admissibility(w, g, o.p);
    text = admissibility_json(a, o.weight, o.p) + membership_json(a.membership, o.weight);
  }
  emit(o.out, out, [&](std::ostream& s) { s << text; });
}

struct EigenArgs {
  int seeds = 8;
  double tol = 1e-9;
  bool oracle = false;
  std::string phi_csv;
};

inline void cmd_eigen(const Common& o, const EigenArgs& a, std::ostream& out) {
  check_p(o.p);
  if (a.oracle && o.p != 2.0) throw InvalidArgument("--oracle is only available for p = 2");
  const Problem pr = make_problem(o, o.p);
  const EigenResult r = solve_first(pr, o.p, a.seeds, a.tol, o.rng_seed);
  std::string text = eigen_json(r, *pr.V, *pr.g);
  for (const auto& s : r.seeds)
    text += JsonLine()
                .integer("seed", s.index)
                .boolean("converged", s.converged)
                .boolean("newton_accepted", s.newton_accepted)
                .num("lambda", s.lambda)
                .num("residual_norm", s.residual_norm)
                .integer("descent_iterations", s.descent_iterations)
                .integer("newton_iterations", s.newton_iterations)
                .str("note", s.note)
                .line();
  if (a.oracle) {
    const auto orc = dense_oracle_p2(*pr.V, *pr.g);
    const auto simp = simplicity_isolation_probe(*pr.V, *pr.g, o.p, r);
    const double align = std::abs(steklov::detail::alignment(*pr.V, orc.phi1, r.phi1.coefficients));
    text += JsonLine()
                .str("oracle", "dense-p2")
                .num("lambda1", orc.lambda1)
                .num("lambda1_rayleigh", orc.lambda1_rayleigh)
                .num("lambda2", orc.lambda2)
                .num("relative_error", std::abs(r.lambda1 - orc.lambda1) / orc.lambda1)
                .num("alignment", align)
                .num("gap", simp.oracle_gap)
                .integer("seeds_aligned", simp.seeds_aligned)
                .line();
  }
  emit(o.out, out, [&](std::ostream& s) { s << text; });
  if (!a.phi_csv.empty()) {
    auto f = open_out(a.phi_csv);
    write_phi_csv(f, r.phi1);
  }
}

struct BifurcateArgs {
  std::optional<double> gamma;
  std::string f_weight = "default";
  ContinuationConfig cfg;
  int seeds = 8;
  std::string plot;
  std::string summary;
};

inline std::string branch_summary_json(const Branch& b, const ContinuationConfig& cfg) {
  const auto c = classify_branch(b, cfg);
  JsonLine j;
  j.num("lambda1", b.lambda1)
      .integer("points", static_cast<long long>(b.points.size()))
      .str("stop", to_string(b.stop))
      .str("classification", to_string(c.kind))
      .num("lambda_end", c.lambda_end)
      .num("jacobian_discrepancy", b.jacobian_discrepancy)
      .num("epsilon_used", b.epsilon_used);
  if (b.points.size() >= 2) {
    const auto e = extrapolate_to_zero_norm(b.points);
    j.num("lambda_at_zero_norm", e.lambda0).num("secant_spread", e.secant_spread);
  }
  return j.line();
}

inline void cmd_bifurcate(const Common& o, const BifurcateArgs& a, std::ostream& out) {
  check_p(o.p);
  const Problem pr = make_problem(o, o.p);
  const double gamma = a.gamma.value_or(default_gamma(o.p));
  const auto spec = make_perturbation(a.f_weight, gamma, o.p, pr);
  const EigenResult r = solve_first(pr, o.p, a.seeds, 1e-9, o.rng_seed);
  const Branch b = branch_from_first(*pr.V, *pr.g, spec ? &*spec : nullptr, o.p, r, a.cfg);
  emit(o.out, out, [&](std::ostream& s) { write_branch(s, b.points, o.format == "jsonl"); });
  if (!a.plot.empty()) {
    auto f = open_out(a.plot);
    write_branch_svg(f, b.points, b.lambda1);
  }
  if (!a.summary.empty()) {
    auto f = open_out(a.summary);
    f << branch_summary_json(b, a.cfg);
  }
}

struct ScanArgs {
  std::optional<double> lambda;
  double lambda_fraction = 0.5;
  double rho = 1e-3;
  int seeds = 50;
  std::optional<double> gamma;
  std::string f_weight = "default";
};

inline void cmd_scan(const Common& o, const ScanArgs& a, std::ostream& out) {
  check_p(o.p);
  const Problem pr = make_problem(o, o.p);
  const auto spec = make_perturbation(a.f_weight, a.gamma.value_or(default_gamma(o.p)), o.p, pr);
  double lambda1 = std::numeric_limits<double>::quiet_NaN();
  double lambda = 0.0;
  if (a.lambda) {
    lambda = *a.lambda;
  } else {
    lambda1 = solve_first(pr, o.p, 8, 1e-9, o.rng_seed).lambda1;
    lambda = a.lambda_fraction * lambda1;
  }
  const auto rep =
      no_bifurcation_scan(*pr.V, *pr.g, spec ? &*spec : nullptr, o.p, lambda, a.rho, a.seeds, o.rng_seed);
  std::string text;
  for (const auto& s : rep.seeds)
    text += JsonLine()
                .integer("seed", s.index)
                .str("outcome", to_string(s.outcome))
                .num("final_norm", s.final_norm)
                .num("residual_norm", s.residual_norm)
                .integer("iterations", s.iterations)
                .line();
  text += JsonLine()
              .num("lambda", rep.lambda)
              .num("lambda1", lambda1)
              .num("rho", rep.rho)
              .integer("seeds", static_cast<long long>(rep.seeds.size()))
              .integer("zero", rep.zero)
              .integer("nontrivial", rep.nontrivial)
              .integer("diverged", rep.diverged)
              .integer("nontrivial_within_rho", rep.nontrivial_within_rho)
              .line();
  emit(o.out, out, [&](std::ostream& s) { s << text; });
}

struct DemoArgs {
  std::string out_dir = "steklov_demo";
  bool plot = false;
  int n = 20;
};

/// p = 2 pipeline on the box: g3 composite weight, admissibility, eigenpair with oracle,
/// branch from lambda_1. Writes admissibility.jsonl, eigen.jsonl, phi1.csv, branch.csv,
/// branch_summary.jsonl and, with --plot, branch.svg.
inline void cmd_demo(const Common& o, const DemoArgs& a, std::ostream& out) {
  namespace fs = std::filesystem;
  fs::create_directories(a.out_dir);
  const double p = 2.0;
  Common c = o;
  c.weight = "composite:g3-box:q=2";
  c.mesh = MeshSource{};
  c.mesh.domain = "box";
  c.mesh.n = a.n;
  const Problem pr = make_problem(c, p);
  const auto adm = mesh_admissibility(pr.weight, *pr.g, p);
  {
    auto f = open_out((fs::path(a.out_dir) / "admissibility.jsonl").string());
    f << admissibility_json(adm, c.weight, p) << membership_json(adm.membership, c.weight);
  }
  require_admissible(adm);
  EigenOptions eo;
  eo.rng_seed = o.rng_seed;
  const EigenResult r = first_eigenpair(*pr.V, *pr.g, p, eo);
  const auto orc = dense_oracle_p2(*pr.V, *pr.g);
  {
    auto f = open_out((fs::path(a.out_dir) / "eigen.jsonl").string());
    f << eigen_json(r, *pr.V, *pr.g)
      << JsonLine()
             .str("oracle", "dense-p2")
             .num("lambda1", orc.lambda1)
             .num("lambda2", orc.lambda2)
             .num("relative_error", std::abs(r.lambda1 - orc.lambda1) / orc.lambda1)
             .num("alignment", std::abs(steklov::detail::alignment(*pr.V, orc.phi1, r.phi1.coefficients)))
             .line();
  }
  {
    auto f = open_out((fs::path(a.out_dir) / "phi1.csv").string());
    write_phi_csv(f, r.phi1);
  }
  const auto spec = make_perturbation("default", 3.0, p, pr);
  ContinuationConfig cfg;
  const Branch b = branch_from_first(*pr.V, *pr.g, &*spec, p, r, cfg);
  {
    auto f = open_out((fs::path(a.out_dir) / "branch.csv").string());
    write_branch(f, b.points, false);
  }
  {
    auto f = open_out((fs::path(a.out_dir) / "branch_summary.jsonl").string());
    f << branch_summary_json(b, cfg);
  }
  if (a.plot) {
    auto f = open_out((fs::path(a.out_dir) / "branch.svg").string());
    write_branch_svg(f, b.points, b.lambda1);
  }
  out << JsonLine()
             .str("demo", "ok")
             .str("out_dir", a.out_dir)
             .num("lambda1", r.lambda1)
             .num("oracle_lambda1", orc.lambda1)
             .integer("branch_points", static_cast<long long>(b.points.size()))
             .line();
}

// ---------------------------------------------------------------------------

inline int fail(std::ostream& err, const std::string& kind, const std::string& msg, int code) {
  err << JsonLine().str("error", kind).str("message", msg).integer("exit", code).line();
  return code;
}

/// Entry point; args exclude the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weighted Steklov p-Laplacian lab: rearrangements, Lorentz-Zygmund norms, eigenpairs, branches",
               "steklov_lab"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common o;
  NormArgs na;
  EigenArgs ea;
  BifurcateArgs ba;
  ScanArgs sa;
  DemoArgs da;
  std::string cls;
  double rearr_wp = 1.5;

  auto* rearr = app.add_subcommand("rearrange", "Decreasing rearrangement of a sampled weight as CSV t,value");
  add_mesh_options(rearr, o);
  add_weight_option(rearr, o);
  rearr->add_option("--weight-p", rearr_wp, "p used by g2-box and h-box when the name has no :p=")
      ->capture_default_str();
  rearr->add_option("--out", o.out, "Output file (default stdout)");
  rearr->add_option("--format", o.format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  auto* norm = app.add_subcommand("norm", "Lorentz-Zygmund quasi-norm of a weight (JSON line)");
  add_mesh_options(norm, o);
  add_weight_option(norm, o);
  norm->add_option("--p", o.p, "First exponent p in [1, inf]")->required();
  norm->add_option("--q", na.q_text, "Second exponent q in [1, inf] ('inf' allowed)")->capture_default_str();
  norm->add_option("--alpha", na.alpha, "Log exponent alpha")->capture_default_str();
  norm->add_option("--weight-p", na.weight_p, "p used by g2-box and h-box when the name has no :p=")
      ->capture_default_str();
  norm->add_flag("--sampled", na.sampled, "Use the mesh-sampled profile even for catalog weights");
  norm->add_option("--out", o.out, "Output file (default stdout)");

  auto* chk = app.add_subcommand("check-weight", "Class membership or full admissibility (JSON lines)");
  add_mesh_options(chk, o);
  add_weight_option(chk, o);
  add_p_option(chk, o);
  chk->add_option("--class", cls, "F:<d> or G:<d>; omitted means admissibility at --p");
  chk->add_option("--out", o.out, "Output file (default stdout)");

  auto* eig = app.add_subcommand("eigen", "First eigenpair (JSON lines)");
  add_mesh_options(eig, o);
  add_weight_option(eig, o);
  add_p_option(eig, o);
  eig->add_option("--seeds", ea.seeds, "Number of descent seeds")->capture_default_str()->check(CLI::PositiveNumber);
  eig->add_option("--tol", ea.tol, "Residual tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  eig->add_option("--rng-seed", o.rng_seed, "Seed of the random starting fields")->capture_default_str();
  eig->add_flag("--oracle", ea.oracle, "Compare with the dense p = 2 oracle");
  eig->add_option("--phi-csv", ea.phi_csv, "Write nodal values of phi_1 to this CSV file");
  eig->add_option("--out", o.out, "Output file (default stdout)");

  auto* bif = app.add_subcommand("bifurcate", "Continuation of the branch leaving (lambda_1, 0) as CSV");
  add_mesh_options(bif, o);
  add_weight_option(bif, o);
  add_p_option(bif, o);
  bif->add_option("--gamma", ba.gamma, "Perturbation exponent (default p + 1 when admissible)");
  bif->add_option("--f-weight", ba.f_weight, "default, zero, or a weight name/file")->capture_default_str();
  bif->add_option("--ds", ba.cfg.ds, "Initial arclength step")->capture_default_str();
  bif->add_option("--ds-max", ba.cfg.ds_max, "Largest arclength step")->capture_default_str();
  bif->add_option("--max-points", ba.cfg.max_points, "Branch length cap")->capture_default_str();
  bif->add_option("--direction", ba.cfg.direction, "+1 or -1")->capture_default_str();
  bif->add_option("--norm-ceiling", ba.cfg.norm_ceiling, "Stop above this W^{1,p} norm")->capture_default_str();
  bif->add_option("--rng-seed", o.rng_seed, "Seed of the eigen solve")->capture_default_str();
  bif->add_option("--seeds", ba.seeds, "Eigen solve seeds")->capture_default_str();
  bif->add_option("--plot", ba.plot, "Write an SVG of lambda against w1p_norm");
  bif->add_option("--summary", ba.summary, "Write the branch classification as a JSON line");
  bif->add_option("--out", o.out, "Output file (default stdout)");
  bif->add_option("--format", o.format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  auto* scn = app.add_subcommand("scan", "Newton scan for small nontrivial solutions at fixed lambda (JSON lines)");
  add_mesh_options(scn, o);
  add_weight_option(scn, o);
  add_p_option(scn, o);
  scn->add_option("--lambda", sa.lambda, "Parameter value (default lambda_1 * --lambda-fraction)");
  scn->add_option("--lambda-fraction", sa.lambda_fraction, "Fraction of lambda_1 used without --lambda")
      ->capture_default_str();
  scn->add_option("--rho", sa.rho, "W^{1,p} norm of the random starting fields")->capture_default_str();
  scn->add_option("--seeds", sa.seeds, "Number of Newton seeds")->capture_default_str()->check(CLI::PositiveNumber);
  scn->add_option("--gamma", sa.gamma, "Perturbation exponent");
  scn->add_option("--f-weight", sa.f_weight, "default, zero, or a weight name/file")->capture_default_str();
  scn->add_option("--rng-seed", o.rng_seed, "Seed of the random fields")->capture_default_str();
  scn->add_option("--out", o.out, "Output file (default stdout)");

  auto* demo = app.add_subcommand("demo", "Full p = 2 pipeline on the box; writes all artifacts");
  demo->add_option("--rng-seed", o.rng_seed, "Seed of the random starting fields")->capture_default_str();
  demo->add_option("--out-dir", da.out_dir, "Artifact directory")->capture_default_str();
  demo->add_option("--n", da.n, "Edges per box side")->capture_default_str();
  demo->add_flag("--plot", da.plot, "Also write branch.svg");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), 2);
  }

  try {
    if (*rearr) cmd_rearrange(o, rearr_wp, out);
    else if (*norm) cmd_norm(o, na, out);
    else if (*chk) cmd_check_weight(o, cls, out);
    else if (*eig) cmd_eigen(o, ea, out);
    else if (*bif) cmd_bifurcate(o, ba, out);
    else if (*scn) cmd_scan(o, sa, out);
    else if (*demo) cmd_demo(o, da, out);
  } catch (const InvalidArgument& e) {
    return fail(err, e.kind(), e.what(), 2);
  } catch (const Error& e) {
    return fail(err, e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail(err, "error", e.what(), 1);
  }
  return 0;
}

}  // namespace steklov::cli
