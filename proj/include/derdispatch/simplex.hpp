#pragma once

// Dense two-phase simplex. Maximizes c^T v over linear rows with
// nonnegative or free variables. Free variables are split internally;
// equality and >= rows get phase-1 artificials. Pricing is Dantzig with
// lowest-index tie-breaking and an automatic switch to Bland's rule after a
// run of degenerate pivots, which keeps the method deterministic and free of
// cycling. Tolerances target 1e-8 agreement with exact vertex values on
// desk-scale problems.

#include <limits>
#include <vector>

#include "derdispatch/common.hpp"

namespace derdispatch {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

enum class LpRelation { le, ge, eq };

struct LpTerm {
  int var;
  double coef;
};

struct LpRow {
  std::vector<LpTerm> terms;
  LpRelation rel = LpRelation::le;
  double rhs = 0.0;
};

struct LpProblem {
  int num_vars = 0;
  std::vector<double> objective;  // maximize
  std::vector<char> is_free;      // otherwise v >= 0
  std::vector<LpRow> rows;

  int add_var(double obj = 0.0, bool free_var = false) {
    objective.push_back(obj);
    is_free.push_back(free_var ? 1 : 0);
    return num_vars++;
  }
  void add_row(std::vector<LpTerm> terms, LpRelation rel, double rhs) {
    rows.push_back({std::move(terms), rel, rhs});
  }
};

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  Vec x;
  int pivots = 0;
};

struct SimplexOptions {
  double tol = 1e-9;        // pivot / optimality threshold
  double feas_tol = 1e-7;   // phase-1 residual treated as infeasible above this
  int max_pivots = 0;       // 0: scaled with problem size
  int bland_after = 40;     // degenerate pivots before switching to Bland
};

namespace detail {

class SimplexTableau {
 public:
  // rows m, structural columns n (rhs kept separately).
  SimplexTableau(int m, int n) : m_(m), n_(n), a_(static_cast<std::size_t>(m) * n, 0.0), b_(m, 0.0) {}

  double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  double* row(int i) { return a_.data() + static_cast<std::size_t>(i) * n_; }
  double& rhs(int i) { return b_[i]; }

  void pivot(int r, int c) {
    double inv = 1.0 / at(r, c);
    double* pr = row(r);
    for (int j = 0; j < n_; ++j) pr[j] *= inv;
    b_[r] *= inv;
    pr[c] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double f = at(i, c);
      if (f == 0.0) continue;
      double* ri = row(i);
      for (int j = 0; j < n_; ++j) ri[j] -= f * pr[j];
      ri[c] = 0.0;
      b_[i] -= f * b_[r];
    }
  }

  int m_, n_;
  std::vector<double> a_;
  std::vector<double> b_;
};

}  // namespace detail

inline LpSolution solve_lp(const LpProblem& lp, const SimplexOptions& opts = {}) {
  const int m = static_cast<int>(lp.rows.size());

  // Column layout: one column per nonnegative var, two per free var, then
  // slack/surplus, then artificials.
  std::vector<int> col_of_var(lp.num_vars), neg_col_of_var(lp.num_vars, -1);
  int n_struct = 0;
  for (int v = 0; v < lp.num_vars; ++v) {
    col_of_var[v] = n_struct++;
    if (lp.is_free[v]) neg_col_of_var[v] = n_struct++;
  }
  int n_slack = 0;
  for (const LpRow& r : lp.rows)
    if (r.rel != LpRelation::eq) ++n_slack;

  // Row sign is normalized so rhs >= 0; artificials added where the slack
  // cannot serve as the initial basic variable.
  std::vector<double> sign(m, 1.0);
  std::vector<int> slack_col(m, -1), art_col(m, -1);
  int n_total = n_struct + n_slack;
  {
    int sc = n_struct;
    for (int i = 0; i < m; ++i) {
      const LpRow& r = lp.rows[i];
      double rhs = r.rhs;
      LpRelation rel = r.rel;
      if (rhs < 0.0) {
        sign[i] = -1.0;
        rhs = -rhs;
        if (rel == LpRelation::le) rel = LpRelation::ge;
        else if (rel == LpRelation::ge) rel = LpRelation::le;
      }
      if (r.rel != LpRelation::eq) slack_col[i] = sc++;
      bool needs_art = rel == LpRelation::eq || rel == LpRelation::ge;
      if (needs_art) art_col[i] = n_total++;
    }
  }

  detail::SimplexTableau t(m, n_total);
  std::vector<int> basis(m, -1);
  for (int i = 0; i < m; ++i) {
    const LpRow& r = lp.rows[i];
    for (const LpTerm& term : r.terms) {
      if (term.var < 0 || term.var >= lp.num_vars) throw FormulationError("bad variable index");
      t.at(i, col_of_var[term.var]) += sign[i] * term.coef;
      if (neg_col_of_var[term.var] >= 0)
        t.at(i, neg_col_of_var[term.var]) -= sign[i] * term.coef;
    }
    t.rhs(i) = sign[i] * r.rhs;
    if (slack_col[i] >= 0) {
      // after sign normalization: le -> +slack basic, ge -> -surplus
      LpRelation rel = r.rel;
      if (sign[i] < 0.0)
        rel = rel == LpRelation::le ? LpRelation::ge : (rel == LpRelation::ge ? LpRelation::le : rel);
      t.at(i, slack_col[i]) = rel == LpRelation::le ? 1.0 : -1.0;
      if (rel == LpRelation::le) basis[i] = slack_col[i];
    }
    if (basis[i] == -1) {
      t.at(i, art_col[i]) = 1.0;
      basis[i] = art_col[i];
    }
  }

  const int max_pivots =
      opts.max_pivots > 0 ? opts.max_pivots : 200 * (m + n_total) + 2000;
  LpSolution sol;

  // Reduced-cost row z_j - c_j for the current objective (all entries
  // nonnegative at optimality of a maximization); rebuilt between phases.
  std::vector<double> z(n_total, 0.0);
  double z0 = 0.0;  // current objective value
  auto rebuild_costs = [&](const std::vector<double>& c) {
    for (int j = 0; j < n_total; ++j) z[j] = -c[j];
    z0 = 0.0;
    for (int i = 0; i < m; ++i) {
      double cb = c[basis[i]];
      if (cb == 0.0) continue;
      const double* ri = t.row(i);
      for (int j = 0; j < n_total; ++j) z[j] += cb * ri[j];
      z0 += cb * t.rhs(i);
    }
  };

  int degen_streak = 0;
  auto run = [&](const std::vector<double>& c, int n_price, bool phase1) -> LpStatus {
    rebuild_costs(c);
    while (true) {
      if (sol.pivots >= max_pivots) return LpStatus::iteration_limit;
      bool bland = degen_streak >= opts.bland_after;
      int enter = -1;
      if (bland) {
        for (int j = 0; j < n_price; ++j)
          if (z[j] < -opts.tol) {
            enter = j;
            break;
          }
      } else {
        double best = -opts.tol;
        for (int j = 0; j < n_price; ++j)
          if (z[j] < best) {
            best = z[j];
            enter = j;
          }
      }
      if (enter < 0) return LpStatus::optimal;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        double a = t.at(i, enter);
        if (a <= opts.tol) continue;
        double ratio = t.rhs(i) / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && (leave == -1 || basis[i] < basis[leave]))) {
          best_ratio = ratio;
          leave = i;
        }
      }
      if (leave < 0) return phase1 ? LpStatus::infeasible : LpStatus::unbounded;

      degen_streak = best_ratio <= 1e-12 ? degen_streak + 1 : 0;
      t.pivot(leave, enter);
      basis[leave] = enter;
      // Fold the pivot into the reduced-cost row.
      double f = z[enter];
      if (f != 0.0) {
        const double* pr = t.row(leave);
        for (int j = 0; j < n_total; ++j) z[j] -= f * pr[j];
        z[enter] = 0.0;
        z0 -= f * t.rhs(leave);
      }
      ++sol.pivots;
    }
  };

  const int n_price = n_struct + n_slack;  // artificials never re-enter
  bool any_art = false;
  for (int i = 0; i < m; ++i) any_art |= art_col[i] >= 0;
  if (any_art) {
    std::vector<double> c1(n_total, 0.0);
    for (int i = 0; i < m; ++i)
      if (art_col[i] >= 0) c1[art_col[i]] = -1.0;
    LpStatus s1 = run(c1, n_total, true);
    if (s1 == LpStatus::iteration_limit) {
      sol.status = s1;
      return sol;
    }
    // z0 here equals -(sum of artificials).
    if (s1 == LpStatus::infeasible || z0 < -opts.feas_tol) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    // Drive leftover basic artificials out; a row whose structural part is
    // all zero is redundant and keeps its artificial basic at value ~0.
    for (int i = 0; i < m; ++i) {
      if (art_col[i] < 0 || basis[i] != art_col[i]) continue;
      int enter = -1;
      for (int j = 0; j < n_price; ++j) {
        if (std::abs(t.at(i, j)) > opts.tol) {
          enter = j;
          break;
        }
      }
      if (enter >= 0) {
        t.pivot(i, enter);
        basis[i] = enter;
        ++sol.pivots;
      }
    }
  }

  std::vector<double> c2(n_total, 0.0);
  for (int v = 0; v < lp.num_vars; ++v) {
    c2[col_of_var[v]] = lp.objective[v];
    if (neg_col_of_var[v] >= 0) c2[neg_col_of_var[v]] = -lp.objective[v];
  }
  degen_streak = 0;
  LpStatus s2 = run(c2, n_price, false);
  sol.status = s2;
  if (s2 != LpStatus::optimal) return sol;

  sol.x = Vec::Zero(lp.num_vars);
  Vec col_val = Vec::Zero(n_total);
  for (int i = 0; i < m; ++i) col_val[basis[i]] = t.rhs(i);
  for (int v = 0; v < lp.num_vars; ++v) {
    sol.x[v] = col_val[col_of_var[v]];
    if (neg_col_of_var[v] >= 0) sol.x[v] -= col_val[neg_col_of_var[v]];
  }
  sol.objective = 0.0;
  for (int v = 0; v < lp.num_vars; ++v) sol.objective += lp.objective[v] * sol.x[v];
  return sol;
}

}  // namespace derdispatch
