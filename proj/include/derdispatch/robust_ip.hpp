#pragma once

// Affine interior-point rule fitted by robust optimization.
//
// The rule y(x) = W x + w must satisfy the inner approximation for every
// scenario x in a box, with uniform slack s maximized. Linear rows are
// worst-cased over the box exactly (via duality or, equivalently, the box
// support function); each second-order cone block is replaced by its
// conservative 1-norm surrogate ||A_s(gamma) x + b_s(gamma)||_1 + s <= c_s
// with one absolute-value epigraph auxiliary per vector component, every
// resulting row again worst-cased over the box. Satisfying the surrogate
// implies the original 2-norm block for all x in the box.
//
// Two equivalent solution paths are provided:
//   * explicit: materialize dual variables per robust row (dualize_linear_row
//     / one_norm_soc_rows) and solve the resulting LP once. Size grows with
//     rows * dim_x, so this is for small systems and for tests.
//   * cutting plane (default): keep the epigraph auxiliaries, instantiate
//     rows at adversarial box vertices, and alternate master LP solves with
//     exact separation (the worst-case vertex of an affine row over a box is
//     componentwise sign selection). Terminates when no row is violated
//     beyond eps_feas; the value then equals the explicit optimum.
//
// The rule is structured: by default only the dispatch rows of W respond to
// x, and only through the PV-availability components. The robust guarantee
// still covers the full box exactly (coefficients on inactive components are
// constants and are folded into each row's worst case); the restriction only
// trades away some slack in exchange for master LPs a dense simplex can
// handle. Pass RuleStructure::full() to lift it on small networks.

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "derdispatch/inner_approx.hpp"
#include "derdispatch/network.hpp"
#include "derdispatch/simplex.hpp"

namespace derdispatch {

struct ScenarioBox {
  Vec lo, hi;

  static ScenarioBox from_radius(const NetworkData& net, double radius) {
    Scenario nom = Scenario::nominal(net);
    ScenarioBox b;
    b.lo = (1.0 - radius) * nom.x;
    b.hi = (1.0 + radius) * nom.x;
    return b;
  }
  int dim() const { return static_cast<int>(lo.size()); }
  bool valid() const { return lo.size() == hi.size() && ((hi - lo).array() >= 0.0).all(); }
  bool contains(const Vec& x, double tol = 1e-9) const {
    return (x - lo).minCoeff() >= -tol && (hi - x).minCoeff() >= -tol;
  }
  Vec center() const { return 0.5 * (lo + hi); }
  Vec sample(Rng& rng) const {
    Vec x(lo.size());
    for (int i = 0; i < x.size(); ++i) x[i] = uniform(rng, lo[i], hi[i]);
    return x;
  }
  Vec vertex(Rng& rng) const {
    Vec x(lo.size());
    for (int i = 0; i < x.size(); ++i) x[i] = uniform01(rng) < 0.5 ? lo[i] : hi[i];
    return x;
  }
};

// Which entries of W are allowed to be nonzero: rows [0, y_rows) of W over
// the listed x columns. The offset w is always unrestricted.
struct RuleStructure {
  std::vector<int> x_cols;
  int y_rows = 0;

  static RuleStructure constant() { return {}; }
  // Dispatch rows respond to the PV availability components.
  static RuleStructure pv(const NetworkData& net) {
    RuleStructure s;
    s.y_rows = net.dim_f();
    for (int node : net.pv_nodes) s.x_cols.push_back(Scenario::idx_pv_avail(net, node));
    return s;
  }
  static RuleStructure full(const NetworkData& net) {
    RuleStructure s;
    s.y_rows = 2 * net.num_pv() + 2 * net.n_branches();
    for (int j = 0; j < net.dim_x(); ++j) s.x_cols.push_back(j);
    return s;
  }
};

// Sparse linear functional over LP variables: value(v) = terms . v + c.
struct LinForm {
  std::vector<LpTerm> terms;
  double c = 0.0;

  double eval(const Vec& v) const {
    double r = c;
    for (const LpTerm& t : terms) r += t.coef * v[t.var];
    return r;
  }
  void add(int var, double coef) {
    if (coef != 0.0) terms.push_back({var, coef});
  }
};

// A row required to hold for every x in the box:
//   sum_j coef[j](v) * x_j + base(v) <= 0
// where v are the LP variables. Components whose coefficient carries no
// variable dependence are pre-folded into const_worst by interval arithmetic.
struct RobustLinearRow {
  std::vector<int> x_idx;           // components with variable-dependent coefs
  std::vector<LinForm> x_coef;      // parallel to x_idx
  double const_worst = 0.0;         // worst case of the folded constant part
  LinForm base;                     // x-free part (carries s / t terms)
  std::string tag;

  double worst_value(const Vec& v, const ScenarioBox& box) const {
    double r = const_worst + base.eval(v);
    for (std::size_t k = 0; k < x_idx.size(); ++k) {
      double a = x_coef[k].eval(v);
      r += std::max(a * box.lo[x_idx[k]], a * box.hi[x_idx[k]]);
    }
    return r;
  }
};

// Emits the exact dual reformulation of one robust linear row into `lp`:
//   ub^T lam_p - lb^T lam_m + base(v) <= 0,  lam_p - lam_m = coef_j(v),
// with fresh nonnegative duals per component. Holding these rows implies the
// robust row for every x in the box (strong duality of the box support LP).
inline void dualize_linear_row(const RobustLinearRow& row, const ScenarioBox& box,
                               LpProblem& lp) {
  LpRow support;
  for (const LpTerm& t : row.base.terms) support.terms.push_back(t);
  double support_rhs = -row.base.c - row.const_worst;
  for (std::size_t k = 0; k < row.x_idx.size(); ++k) {
    int j = row.x_idx[k];
    int lam_p = lp.add_var(0.0);
    int lam_m = lp.add_var(0.0);
    // lam_p - lam_m - coef_j(v) = 0
    LpRow eq;
    eq.rel = LpRelation::eq;
    eq.terms.push_back({lam_p, 1.0});
    eq.terms.push_back({lam_m, -1.0});
    for (const LpTerm& t : row.x_coef[k].terms) eq.terms.push_back({t.var, -t.coef});
    eq.rhs = row.x_coef[k].c;
    lp.rows.push_back(std::move(eq));
    support.terms.push_back({lam_p, box.hi[j]});
    support.terms.push_back({lam_m, -box.lo[j]});
  }
  support.rel = LpRelation::le;
  support.rhs = support_rhs;
  lp.rows.push_back(std::move(support));
}

namespace detail {

// Substitutes y = W x + w into an affine-in-(y,x) scalar and returns the
// robust row machinery view. Variable ids follow RuleVars below.
struct RuleVars {
  int dim_y = 0, dim_x = 0;
  RuleStructure structure;
  // var ids: W entries laid out row-major over (y_rows x x_cols), then w,
  // then whatever the caller adds (s, t, duals).
  int w_entry(int i, int col_slot) const {
    return i * static_cast<int>(structure.x_cols.size()) + col_slot;
  }
  int w_offset(int i) const {
    return structure.y_rows * static_cast<int>(structure.x_cols.size()) + i;
  }
  int num_gamma() const {
    return structure.y_rows * static_cast<int>(structure.x_cols.size()) + dim_y;
  }
};

inline RobustLinearRow substitute(const AffineScalar& e, const RuleVars& vars,
                                  const ScenarioBox& box, const char* tag) {
  RobustLinearRow row;
  row.tag = tag;
  const auto& cols = vars.structure.x_cols;
  std::vector<char> active(vars.dim_x, 0);
  for (std::size_t slot = 0; slot < cols.size(); ++slot) {
    int j = cols[slot];
    LinForm coef;
    coef.c = e.a_x[j];
    for (int i = 0; i < vars.structure.y_rows; ++i)
      if (e.a_y[i] != 0.0) coef.add(vars.w_entry(i, static_cast<int>(slot)), e.a_y[i]);
    if (!coef.terms.empty()) {
      active[j] = 1;
      row.x_idx.push_back(j);
      row.x_coef.push_back(std::move(coef));
    }
  }
  for (int j = 0; j < vars.dim_x; ++j) {
    if (active[j] || e.a_x[j] == 0.0) continue;
    row.const_worst += std::max(e.a_x[j] * box.lo[j], e.a_x[j] * box.hi[j]);
  }
  row.base.c = e.c;
  for (int i = 0; i < vars.dim_y; ++i)
    if (e.a_y[i] != 0.0) row.base.add(vars.w_offset(i), e.a_y[i]);
  return row;
}

}  // namespace detail

// One-norm conservative treatment of the SOC block ||vec(y,x)|| <= rhs(y,x)
// under the rule substitution: per-component epigraph auxiliaries t_k with
//   +-u_k(v; x) <= t_k  and  sum_k t_k - rhs(v; x) + s <= 0   for all x,
// each row dualized as in dualize_linear_row.
inline void one_norm_soc_rows(const SocBlock& block, const detail::RuleVars& vars,
                              const ScenarioBox& box, int s_var, LpProblem& lp) {
  std::vector<int> t_vars;
  for (const AffineScalar& comp : block.vec) {
    int t = lp.add_var(0.0);
    t_vars.push_back(t);
    for (double sgn : {1.0, -1.0}) {
      RobustLinearRow r = detail::substitute(comp * sgn, vars, box, "soc_comp");
      r.base.add(t, -1.0);
      dualize_linear_row(r, box, lp);
    }
  }
  RobustLinearRow agg = detail::substitute(block.rhs * -1.0, vars, box, "soc_agg");
  for (int t : t_vars) agg.base.add(t, 1.0);
  agg.base.add(s_var, 1.0);
  dualize_linear_row(agg, box, lp);
}

struct AffineRule {
  Mat W;  // dim_y x dim_x (structured zeros included)
  Vec w;
  double s_star = 0.0;
  ScenarioBox box;
  std::string network_fingerprint;
  int npv = 0;

  Vec eval_y(const Vec& x) const { return W * x + w; }
};

struct InteriorPointResult {
  Dispatch dispatch;
  bool certified = true;  // false when x lies outside the fitted box
};

// Online hot path: one matrix-vector product on the dispatch sub-rule.
inline InteriorPointResult eval_interior_point(const AffineRule& rule, const Scenario& sc) {
  if (sc.x.size() != rule.box.dim()) throw InputError("scenario dimension mismatch");
  InteriorPointResult r;
  r.certified = rule.box.contains(sc.x, 1e-9);
  const int df = 2 * rule.npv;
  r.dispatch.f = rule.W.topRows(df) * sc.x + rule.w.head(df);
  return r;
}

enum class FitMethod { automatic, cutting_plane, explicit_dual };

struct FitOptions {
  RuleStructure structure;       // empty -> RuleStructure::pv(net)
  bool structure_set = false;
  FitMethod method = FitMethod::automatic;
  double eps_feas = 1e-9;        // max allowed robust violation at exit
  int max_iterations = 60;       // cutting-plane outer iterations
  SimplexOptions simplex;
  bool require_positive = true;  // enforce s* > 0 post-condition
};

struct NoInteriorRuleError : Error {
  explicit NoInteriorRuleError(const std::string& m) : Error(ErrorCode::certificate_failure, m) {}
};

namespace detail {

struct FitSpace {
  RuleVars vars;
  int s_var = 0;                    // index in the unified variable space
  std::vector<RobustLinearRow> rows;  // all robust rows over (gamma, t, s)
  int num_vars = 0;                 // gamma + s + t
};

// Builds the robust row set in the unified variable space. Epigraph cones of
// one branch share their component auxiliaries across the four sign
// combinations; with all four combinations present this is value-equivalent
// to the per-block encoding and several times smaller.
inline FitSpace build_fit_space(const InnerSystem& sys, const ScenarioBox& box,
                                const RuleStructure& structure) {
  FitSpace fs;
  fs.vars.dim_y = sys.dim_y;
  fs.vars.dim_x = sys.dim_x;
  fs.vars.structure = structure;
  int next = fs.vars.num_gamma();
  fs.s_var = next++;

  for (const LinearRow& row : sys.rows) {
    RobustLinearRow r = substitute(row.expr, fs.vars, box, family_name(row.family));
    r.base.add(fs.s_var, 1.0);
    fs.rows.push_back(std::move(r));
  }

  // Inverter disks: per-block 1-norm epigraph.
  for (const SocBlock& blk : sys.socs) {
    if (blk.family != SocFamily::inverter) continue;
    std::vector<int> t_vars;
    for (const AffineScalar& comp : blk.vec) {
      int t = next++;
      t_vars.push_back(t);
      for (double sgn : {1.0, -1.0}) {
        RobustLinearRow r = substitute(comp * sgn, fs.vars, box, "inverter_comp");
        r.base.add(t, -1.0);
        fs.rows.push_back(std::move(r));
      }
    }
    RobustLinearRow agg = substitute(blk.rhs * -1.0, fs.vars, box, "inverter_agg");
    for (int t : t_vars) agg.base.add(t, 1.0);
    agg.base.add(fs.s_var, 1.0);
    fs.rows.push_back(std::move(agg));
  }

  // Epigraph cones, grouped by branch: components are 2P+/-, 2Q+/- and the
  // shared cone tail; the aggregate uses the max-|.| auxiliary per axis.
  struct ConeGroup {
    std::vector<const SocBlock*> blocks;
  };
  std::vector<ConeGroup> groups;
  {
    int max_index = -1;
    for (const SocBlock& blk : sys.socs)
      if (blk.family == SocFamily::epigraph) max_index = std::max(max_index, blk.index);
    groups.resize(max_index + 1);
    for (const SocBlock& blk : sys.socs)
      if (blk.family == SocFamily::epigraph) groups[blk.index].blocks.push_back(&blk);
  }
  for (const ConeGroup& g : groups) {
    if (g.blocks.empty()) continue;
    int t_p = next++, t_q = next++, t_tail = next++;
    std::set<std::string> seen;  // dedup identical component expressions
    auto add_comp = [&](const AffineScalar& comp, int t_var, const char* tag) {
      std::string key;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%d|%.17g", t_var, comp.c);
      key = buf;
      for (int i = 0; i < comp.a_y.size(); ++i)
        if (comp.a_y[i] != 0.0) {
          std::snprintf(buf, sizeof(buf), "y%d:%.17g;", i, comp.a_y[i]);
          key += buf;
        }
      for (int i = 0; i < comp.a_x.size(); ++i)
        if (comp.a_x[i] != 0.0) {
          std::snprintf(buf, sizeof(buf), "x%d:%.17g;", i, comp.a_x[i]);
          key += buf;
        }
      if (!seen.insert(key).second) return;
      for (double sgn : {1.0, -1.0}) {
        RobustLinearRow r = substitute(comp * sgn, fs.vars, box, tag);
        r.base.add(t_var, -1.0);
        fs.rows.push_back(std::move(r));
      }
    };
    for (const SocBlock* blk : g.blocks) {
      add_comp(blk->vec[0], t_p, "cone_p");
      add_comp(blk->vec[1], t_q, "cone_q");
      add_comp(blk->vec[2], t_tail, "cone_tail");
    }
    RobustLinearRow agg = substitute(g.blocks.front()->rhs * -1.0, fs.vars, box, "cone_agg");
    agg.base.add(t_p, 1.0);
    agg.base.add(t_q, 1.0);
    agg.base.add(t_tail, 1.0);
    agg.base.add(fs.s_var, 1.0);
    fs.rows.push_back(std::move(agg));
  }
  fs.num_vars = next;
  return fs;
}

}  // namespace detail

inline AffineRule fit_affine_rule(const NetworkData& net, const InnerSystem& sys,
                                  const ScenarioBox& box, const FitOptions& opts = {}) {
  if (!box.valid() || box.dim() != sys.dim_x) throw InputError("invalid scenario box");
  RuleStructure structure = opts.structure_set ? opts.structure : RuleStructure::pv(net);

  detail::FitSpace fs = detail::build_fit_space(sys, box, structure);
  const int ng = fs.vars.num_gamma();

  Vec v;  // solution in the unified variable space
  double s_value = 0.0;

  bool use_explicit = opts.method == FitMethod::explicit_dual;
  if (opts.method == FitMethod::automatic)
    use_explicit = static_cast<long>(fs.rows.size()) * (sys.dim_x + 1) <= 4000;

  if (use_explicit) {
    LpProblem lp;
    for (int g = 0; g < ng; ++g) lp.add_var(0.0, /*free=*/true);
    lp.add_var(1.0);  // s, objective
    while (lp.num_vars < fs.num_vars) lp.add_var(0.0);  // epigraph aux, >= 0
    for (const RobustLinearRow& row : fs.rows) dualize_linear_row(row, box, lp);
    LpSolution sol = solve_lp(lp, opts.simplex);
    if (sol.status == LpStatus::infeasible)
      throw NoInteriorRuleError("robust program infeasible: no interior rule on this box");
    if (sol.status != LpStatus::optimal)
      throw DivergenceError("robust LP did not solve to optimality");
    v = sol.x.head(fs.num_vars);
    s_value = sol.x[fs.s_var];
  } else {
    // Cutting-plane loop: master LP over (gamma, s, t) with rows instantiated
    // at adversarial vertices; exact separation by componentwise signs.
    std::vector<std::set<std::string>> emitted(fs.rows.size());
    std::vector<LpRow> cuts;

    auto make_cut = [&](std::size_t ri) {
      const RobustLinearRow& r = fs.rows[ri];
      std::string pattern(r.x_idx.size(), '0');
      LpRow cut;
      double rhs = -r.base.c - r.const_worst;
      std::vector<double> dense(fs.num_vars, 0.0);
      for (const LpTerm& t : r.base.terms) dense[t.var] += t.coef;
      for (std::size_t k = 0; k < r.x_idx.size(); ++k) {
        double a = r.x_coef[k].eval(v);
        int j = r.x_idx[k];
        double xj = a >= 0.0 ? box.hi[j] : box.lo[j];
        if (a >= 0.0) pattern[k] = '1';
        for (const LpTerm& t : r.x_coef[k].terms) dense[t.var] += t.coef * xj;
        rhs -= r.x_coef[k].c * xj;
      }
      if (!emitted[ri].insert(pattern).second) return false;
      for (int var = 0; var < fs.num_vars; ++var)
        if (dense[var] != 0.0) cut.terms.push_back({var, dense[var]});
      cut.rel = LpRelation::le;
      cut.rhs = rhs;
      cuts.push_back(std::move(cut));
      return true;
    };

    v = Vec::Zero(fs.num_vars);
    for (std::size_t ri = 0; ri < fs.rows.size(); ++ri) make_cut(ri);

    int iter = 0;
    while (true) {
      if (++iter > opts.max_iterations)
        throw DivergenceError("cutting-plane fit did not converge in " +
                              std::to_string(opts.max_iterations) + " iterations");
      LpProblem lp;
      for (int g = 0; g < ng; ++g) lp.add_var(0.0, true);
      lp.add_var(1.0);
      while (lp.num_vars < fs.num_vars) lp.add_var(0.0);
      lp.rows = cuts;
      LpSolution sol = solve_lp(lp, opts.simplex);
      if (sol.status == LpStatus::infeasible)
        throw NoInteriorRuleError("robust program infeasible: no interior rule on this box");
      if (sol.status != LpStatus::optimal)
        throw DivergenceError("master LP did not solve to optimality");
      v = sol.x;
      s_value = sol.x[fs.s_var];

      double worst = -std::numeric_limits<double>::infinity();
      int added = 0;
      for (std::size_t ri = 0; ri < fs.rows.size(); ++ri) {
        double viol = fs.rows[ri].worst_value(v, box);
        worst = std::max(worst, viol);
        if (viol > opts.eps_feas && make_cut(ri)) ++added;
      }
      if (added == 0) break;
    }
  }

  AffineRule rule;
  rule.W = Mat::Zero(sys.dim_y, sys.dim_x);
  for (int i = 0; i < structure.y_rows; ++i)
    for (std::size_t slot = 0; slot < structure.x_cols.size(); ++slot)
      rule.W(i, structure.x_cols[slot]) = v[fs.vars.w_entry(i, static_cast<int>(slot))];
  rule.w = v.segment(structure.y_rows * static_cast<int>(structure.x_cols.size()), sys.dim_y);
  rule.s_star = s_value;
  rule.box = box;
  rule.network_fingerprint = net.fingerprint();
  rule.npv = sys.npv;
  if (opts.require_positive && !(rule.s_star > 0.0))
    throw NoInteriorRuleError("fitted slack s* = " + std::to_string(rule.s_star) +
                              " is not positive; shrink the scenario box");
  return rule;
}

// ---------------------------------------------------------------------------
// Rule artifact I/O
// ---------------------------------------------------------------------------

inline nlohmann::json rule_to_json(const AffineRule& rule) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["dim_y"] = rule.W.rows();
  j["dim_x"] = rule.W.cols();
  j["npv"] = rule.npv;
  j["s_star"] = rule.s_star;
  j["network_fingerprint"] = rule.network_fingerprint;
  std::vector<double> wflat(rule.W.size());
  for (int i = 0; i < rule.W.rows(); ++i)
    for (int c = 0; c < rule.W.cols(); ++c) wflat[i * rule.W.cols() + c] = rule.W(i, c);
  j["W"] = wflat;
  j["w"] = std::vector<double>(rule.w.data(), rule.w.data() + rule.w.size());
  j["box"] = {{"lo", std::vector<double>(rule.box.lo.data(), rule.box.lo.data() + rule.box.lo.size())},
              {"hi", std::vector<double>(rule.box.hi.data(), rule.box.hi.data() + rule.box.hi.size())}};
  return j;
}

inline AffineRule rule_from_json(const nlohmann::json& j) {
  AffineRule rule;
  int dim_y = j.at("dim_y").get<int>();
  int dim_x = j.at("dim_x").get<int>();
  rule.npv = j.at("npv").get<int>();
  rule.s_star = j.at("s_star").get<double>();
  rule.network_fingerprint = j.at("network_fingerprint").get<std::string>();
  auto wflat = j.at("W").get<std::vector<double>>();
  if ((int)wflat.size() != dim_y * dim_x) throw InputError("rule file: W size mismatch");
  rule.W = Mat(dim_y, dim_x);
  for (int i = 0; i < dim_y; ++i)
    for (int c = 0; c < dim_x; ++c) rule.W(i, c) = wflat[i * dim_x + c];
  auto wv = j.at("w").get<std::vector<double>>();
  rule.w = Eigen::Map<const Vec>(wv.data(), wv.size());
  auto lo = j.at("box").at("lo").get<std::vector<double>>();
  auto hi = j.at("box").at("hi").get<std::vector<double>>();
  rule.box.lo = Eigen::Map<const Vec>(lo.data(), lo.size());
  rule.box.hi = Eigen::Map<const Vec>(hi.data(), hi.size());
  return rule;
}

inline void save_rule(const AffineRule& rule, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write rule file: " + path);
  out << rule_to_json(rule).dump(2) << "\n";
}

// Loads a rule and verifies it was fitted for `net`.
inline AffineRule load_rule(const std::string& path, const NetworkData& net) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rule file: " + path);
  nlohmann::json j;
  in >> j;
  AffineRule rule = rule_from_json(j);
  if (rule.network_fingerprint != net.fingerprint())
    throw CertificateError("rule file was fitted for a different network (fingerprint mismatch)");
  return rule;
}

}  // namespace derdispatch
