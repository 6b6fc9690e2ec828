#pragma once

// Convex inner approximation of the DistFlow feasible set.
//
// Decision vector of the approximation (all per-unit):
//   y = [ P_pv (npv), Q_pv (npv), l_lo (n), l_hi (n) ]
// where [l_lo, l_hi] is a per-branch envelope that must contain the exact
// squared currents. Parameters are the Scenario vector x.
//
// The system consists of
//   * linear rows: first-order-Taylor current underestimators evaluated at
//     the conservative corner of the flow/voltage box (so the row value lower
//     bounds the exact squared current), envelope ordering, current caps,
//     and voltage limits applied to the interval bounds of the compact form,
//     plus the PV availability box; and
//   * second-order cone blocks: per-PV inverter disks and, per branch, four
//     rotated-cone epigraph rows (P*)^2 + (Q*)^2 <= v_min * l_hi over the
//     four sign combinations of the flow bounds.
//
// Row census: n_lin = 5 n + 2 npv, n_soc = 4 n + npv, dim y = 2 npv + 2 n.
//
// Any point accepted here is feasible for the exact nonconvex model; the
// suite enforces that claim by sampling (zero violations allowed).
//
// The envelope lower bound may legitimately be negative: the Taylor plane
// evaluated at the conservative corner can dip below zero on lightly loaded
// branches (the exact current then satisfies l >= max(l_lo, 0)). Clamping
// l_lo at zero would empty the system whenever PV can reverse a light flow,
// so no nonnegativity row is imposed on it.

#include <iomanip>
#include <ostream>
#include <vector>

#include "derdispatch/affine.hpp"
#include "derdispatch/distflow.hpp"
#include "derdispatch/network.hpp"
#include "derdispatch/power_flow.hpp"

namespace derdispatch {

struct CurrentEnvelope {
  Vec lo, hi;  // squared currents per branch
};

// First-order expansion of g(P,Q,V) = (P^2+Q^2)/V at a base operating point.
// Flows are in the compact (export-positive) convention; v0 is the squared
// voltage at the branch's sending node. Since g is jointly convex for V > 0,
// the plane lower-bounds g everywhere on that half-space; jv <= 0 always.
struct TaylorCut {
  double p0 = 0.0, q0 = 0.0, v0 = 1.0;
  double l0 = 0.0;                      // g at the expansion point
  double jp = 0.0, jq = 0.0, jv = 0.0;  // gradient of g there

  double value(double p, double q, double v) const {
    return l0 + jp * (p - p0) + jq * (q - q0) + jv * (v - v0);
  }
  double g(double p, double q, double v) const { return (p * p + q * q) / v; }
};

inline std::vector<TaylorCut> make_taylor_cuts(const NetworkData& net, const SystemState& base) {
  std::vector<TaylorCut> cuts(net.n_branches());
  CompactState cv = compact_view(net, base);
  for (int b = 0; b < net.n_branches(); ++b) {
    int parent = net.branches[b].from;
    double v0 = parent == 0 ? base.v_sq[0] : base.v_sq[parent];
    if (v0 <= 0.0) throw InputError("expansion point has non-positive squared voltage");
    TaylorCut& c = cuts[b];
    c.p0 = cv.p_flow[b];
    c.q0 = cv.q_flow[b];
    c.v0 = v0;
    c.l0 = (c.p0 * c.p0 + c.q0 * c.q0) / v0;
    c.jp = 2.0 * c.p0 / v0;
    c.jq = 2.0 * c.q0 / v0;
    c.jv = -c.l0 / v0;
  }
  return cuts;
}

// Interval bounds on the compact-form flows and voltages when the squared
// currents range over the envelope. p, q are generation-positive injections.
struct AuxBounds {
  Vec p_hi, p_lo, q_hi, q_lo, v_hi, v_lo;
};

inline AuxBounds aux_bounds(const DistFlowMatrices& m, double v0_sq, const Vec& p, const Vec& q,
                            const CurrentEnvelope& env) {
  if (((env.hi - env.lo).array() < 0.0).any())
    throw InputError("current envelope must satisfy lo <= hi");
  AuxBounds a;
  Vec cp = m.C * p, cq = m.C * q;
  a.p_hi = cp - m.D_R_plus * env.lo - m.D_R_minus * env.hi;
  a.p_lo = cp - m.D_R_plus * env.hi - m.D_R_minus * env.lo;
  a.q_hi = cq - m.D_X_plus * env.lo - m.D_X_minus * env.hi;
  a.q_lo = cq - m.D_X_plus * env.hi - m.D_X_minus * env.lo;
  Vec v_base = Vec::Constant(p.size(), v0_sq) + m.M_p * p + m.M_q * q;
  a.v_hi = v_base - m.H_plus * env.lo - m.H_minus * env.hi;
  a.v_lo = v_base - m.H_plus * env.hi - m.H_minus * env.lo;
  return a;
}

enum class RowFamily { taylor, env_order, current_cap, v_low, v_high, pv_box_lo, pv_box_hi };
enum class SocFamily { inverter, epigraph };

inline const char* family_name(RowFamily f) {
  switch (f) {
    case RowFamily::taylor: return "taylor";
    case RowFamily::env_order: return "env_order";
    case RowFamily::current_cap: return "current_cap";
    case RowFamily::v_low: return "v_low";
    case RowFamily::v_high: return "v_high";
    case RowFamily::pv_box_lo: return "pv_box_lo";
    case RowFamily::pv_box_hi: return "pv_box_hi";
  }
  return "?";
}
inline const char* family_name(SocFamily f) {
  return f == SocFamily::inverter ? "inverter" : "epigraph";
}

struct LinearRow {
  AffineScalar expr;  // expr(y, x) <= 0
  RowFamily family;
  int index;  // branch / node-1 / pv slot, for reporting
};

struct SocBlock {
  std::vector<AffineScalar> vec;  // ||vec(y,x)||_2 <= rhs(y,x)
  AffineScalar rhs;
  SocFamily family;
  int index;
};

struct InnerSystem {
  int dim_y = 0, dim_x = 0;
  int n = 0, npv = 0;
  double v_min_sq = 0.0;
  std::vector<LinearRow> rows;
  std::vector<SocBlock> socs;
  // Symbolic aux bounds, exposed for tests and diagnostics.
  AffineVec p_hi, p_lo, q_hi, q_lo, v_hi, v_lo;

  int idx_p(int k) const { return k; }
  int idx_q(int k) const { return npv + k; }
  int idx_lo(int b) const { return 2 * npv + b; }
  int idx_hi(int b) const { return 2 * npv + n + b; }

  Vec pack(const Dispatch& d, const CurrentEnvelope& env) const {
    Vec y(dim_y);
    y.head(2 * npv) = d.f;
    y.segment(2 * npv, n) = env.lo;
    y.tail(n) = env.hi;
    return y;
  }
};

struct InnerAssemblyOptions {
  // Pair positive Jacobian entries with the upper aux bounds instead of the
  // lower ones. That variant maximizes the Taylor plane over the box rather
  // than minimizing it and forfeits the underestimator guarantee; it exists
  // only for comparison and is excluded from the soundness contract.
  bool letter_pairing = false;
  // Per-branch scale of the epigraph cone embedding (see below); empty means
  // derive it from the no-PV and full-PV nominal flows.
  Vec cone_scale;
};

inline InnerSystem assemble_inner_system(const NetworkData& net, const DistFlowMatrices& mat,
                                         const std::vector<TaylorCut>& cuts,
                                         const InnerAssemblyOptions& opts = {}) {
  const int n = net.n_branches();
  const int npv = net.num_pv();
  if ((int)cuts.size() != n) throw InputError("need exactly one Taylor cut per branch");

  InnerSystem sys;
  sys.n = n;
  sys.npv = npv;
  sys.dim_y = 2 * npv + 2 * n;
  sys.dim_x = 3 * n;
  sys.v_min_sq = net.v_min_sq;
  const int dy = sys.dim_y, dx = sys.dim_x;

  // Building blocks.
  AffineVec f_p = AffineVec::y_segment(0, npv, dy, dx);
  AffineVec f_q = AffineVec::y_segment(npv, npv, dy, dx);
  AffineVec l_lo = AffineVec::y_segment(2 * npv, n, dy, dx);
  AffineVec l_hi = AffineVec::y_segment(2 * npv + n, n, dy, dx);
  AffineVec p_load = AffineVec::x_segment(0, n, dy, dx);
  AffineVec q_load = AffineVec::x_segment(n, n, dy, dx);
  AffineVec pv_avail = AffineVec::x_segment(2 * n, n, dy, dx);

  Mat embed = Mat::Zero(n, npv);
  for (int k = 0; k < npv; ++k) embed(net.pv_nodes[k] - 1, k) = 1.0;
  AffineVec p_gen = embed * f_p - p_load;
  AffineVec q_gen = embed * f_q - q_load;

  AffineVec cp = mat.C * p_gen, cq = mat.C * q_gen;
  sys.p_hi = cp - mat.D_R_plus * l_lo - mat.D_R_minus * l_hi;
  sys.p_lo = cp - mat.D_R_plus * l_hi - mat.D_R_minus * l_lo;
  sys.q_hi = cq - mat.D_X_plus * l_lo - mat.D_X_minus * l_hi;
  sys.q_lo = cq - mat.D_X_plus * l_hi - mat.D_X_minus * l_lo;
  AffineVec v_base = mat.M_p * p_gen + mat.M_q * q_gen;
  v_base += Vec::Constant(n, net.v0_sq);
  sys.v_hi = v_base - mat.H_plus * l_lo - mat.H_minus * l_hi;
  sys.v_lo = v_base - mat.H_plus * l_hi - mat.H_minus * l_lo;

  // Taylor rows: l_lo[e] <= plane evaluated at the corner of the aux box that
  // minimizes it (or maximizes it under the compatibility pairing).
  for (int e = 0; e < n; ++e) {
    const TaylorCut& c = cuts[e];
    auto pick = [&](double j, const AffineScalar& lo, const AffineScalar& hi) {
      bool take_lo = (j >= 0.0) != opts.letter_pairing;
      return (take_lo ? lo : hi) * j;
    };
    AffineScalar cut = AffineScalar::constant(c.l0 - c.jp * c.p0 - c.jq * c.q0 - c.jv * c.v0, dy, dx);
    cut = cut + pick(c.jp, sys.p_lo.row(e), sys.p_hi.row(e));
    cut = cut + pick(c.jq, sys.q_lo.row(e), sys.q_hi.row(e));
    int parent = net.branches[e].from;
    if (parent == 0) {
      cut += c.jv * net.v0_sq;
    } else {
      cut = cut + pick(c.jv, sys.v_lo.row(parent - 1), sys.v_hi.row(parent - 1));
    }
    sys.rows.push_back({l_lo.row(e) - cut, RowFamily::taylor, e});
  }
  for (int e = 0; e < n; ++e)
    sys.rows.push_back({l_lo.row(e) - l_hi.row(e), RowFamily::env_order, e});
  for (int e = 0; e < n; ++e) {
    AffineScalar r = l_hi.row(e);
    r += -net.branches[e].l_max_sq;
    sys.rows.push_back({r, RowFamily::current_cap, e});
  }
  for (int m = 0; m < n; ++m) {
    AffineScalar lo = sys.v_lo.row(m) * -1.0;
    lo += net.v_min_sq;
    sys.rows.push_back({lo, RowFamily::v_low, m});
  }
  for (int m = 0; m < n; ++m) {
    AffineScalar hi = sys.v_hi.row(m);
    hi += -net.v_max_sq;
    sys.rows.push_back({hi, RowFamily::v_high, m});
  }
  for (int k = 0; k < npv; ++k)
    sys.rows.push_back({f_p.row(k) * -1.0, RowFamily::pv_box_lo, k});
  for (int k = 0; k < npv; ++k) {
    int node = net.pv_nodes[k];
    sys.rows.push_back(
        {f_p.row(k) - pv_avail.row(node - 1), RowFamily::pv_box_hi, k});
  }

  for (int k = 0; k < npv; ++k) {
    SocBlock blk;
    blk.vec = {f_p.row(k), f_q.row(k)};
    blk.rhs = AffineScalar::constant(net.inv_cap[net.pv_nodes[k]], dy, dx);
    blk.family = SocFamily::inverter;
    blk.index = k;
    sys.socs.push_back(std::move(blk));
  }
  // Epigraph cones: (P*)^2 + (Q*)^2 <= v_min * l_hi, written as the standard
  // cone ||(2P*, 2Q*, w/s0 - s0)|| <= w/s0 + s0 with w = v_min * l_hi. The
  // embedding is exact for any s0 > 0; s0 is chosen near the branch's worst
  // 1-norm flow so the conservative 1-norm treatment used by the robust fit
  // stays within a constant factor of the true quadratic requirement.
  Vec s0 = opts.cone_scale;
  if (s0.size() == 0) {
    s0 = Vec::Constant(n, 0.05);
    for (const Dispatch& d : {Dispatch::zeros(net), Dispatch::full_pv(net)}) {
      SystemState st = solve_power_flow(net, d);
      CompactState cv = compact_view(net, st);
      for (int e = 0; e < n; ++e)
        s0[e] = std::max(s0[e], 1.4 * (std::abs(cv.p_flow[e]) + std::abs(cv.q_flow[e])) + 0.05);
    }
  } else if (s0.size() != n || (s0.array() <= 0.0).any()) {
    throw InputError("cone_scale must be positive per branch");
  }
  for (int e = 0; e < n; ++e) {
    const AffineScalar p_cases[2] = {sys.p_hi.row(e), sys.p_lo.row(e)};
    const AffineScalar q_cases[2] = {sys.q_hi.row(e), sys.q_lo.row(e)};
    for (int sp = 0; sp < 2; ++sp) {
      for (int sq = 0; sq < 2; ++sq) {
        SocBlock blk;
        AffineScalar w_scaled = l_hi.row(e) * (net.v_min_sq / s0[e]);
        AffineScalar tail = w_scaled;
        tail += -s0[e];
        blk.vec = {p_cases[sp] * 2.0, q_cases[sq] * 2.0, tail};
        blk.rhs = w_scaled;
        blk.rhs += s0[e];
        blk.family = SocFamily::epigraph;
        blk.index = e;
        sys.socs.push_back(std::move(blk));
      }
    }
  }
  return sys;
}

struct MembershipReport {
  bool inside = false;
  double min_margin = 0.0;  // over all rows and cones; negative = violated
  // Worst (smallest) margin per family.
  double taylor = 0.0, env_order = 0.0, current_cap = 0.0, v_low = 0.0, v_high = 0.0,
         pv_box = 0.0, inverter = 0.0, epigraph = 0.0;
};

inline MembershipReport inner_membership(const InnerSystem& sys, const Vec& y, const Vec& x,
                                         double tol = 1e-9) {
  if (y.size() != sys.dim_y || x.size() != sys.dim_x)
    throw InputError("inner membership dimension mismatch");
  MembershipReport rep;
  double inf = std::numeric_limits<double>::infinity();
  rep.taylor = rep.env_order = rep.current_cap = rep.v_low = rep.v_high = inf;
  rep.pv_box = rep.inverter = rep.epigraph = inf;
  auto fold = [](double& slot, double margin) { slot = std::min(slot, margin); };
  for (const LinearRow& row : sys.rows) {
    double margin = -row.expr.eval(y, x);
    switch (row.family) {
      case RowFamily::taylor: fold(rep.taylor, margin); break;
      case RowFamily::env_order: fold(rep.env_order, margin); break;
      case RowFamily::current_cap: fold(rep.current_cap, margin); break;
      case RowFamily::v_low: fold(rep.v_low, margin); break;
      case RowFamily::v_high: fold(rep.v_high, margin); break;
      case RowFamily::pv_box_lo:
      case RowFamily::pv_box_hi: fold(rep.pv_box, margin); break;
    }
  }
  for (const SocBlock& blk : sys.socs) {
    double norm2 = 0.0;
    for (const AffineScalar& comp : blk.vec) {
      double v = comp.eval(y, x);
      norm2 += v * v;
    }
    double margin = blk.rhs.eval(y, x) - std::sqrt(norm2);
    fold(blk.family == SocFamily::inverter ? rep.inverter : rep.epigraph, margin);
  }
  rep.min_margin = std::min({rep.taylor, rep.env_order, rep.current_cap, rep.v_low, rep.v_high,
                             rep.pv_box, rep.inverter, rep.epigraph});
  rep.inside = rep.min_margin >= -tol;
  return rep;
}

// Plain-text dump for inspection.
inline void dump_inner_system(const InnerSystem& sys, std::ostream& os) {
  os << "inner system: dim_y=" << sys.dim_y << " dim_x=" << sys.dim_x
     << " rows=" << sys.rows.size() << " socs=" << sys.socs.size() << "\n";
  os << std::setprecision(9);
  auto put = [&os](const AffineScalar& e) {
    for (int i = 0; i < e.a_y.size(); ++i)
      if (e.a_y[i] != 0.0) os << " y" << i << ":" << e.a_y[i];
    for (int i = 0; i < e.a_x.size(); ++i)
      if (e.a_x[i] != 0.0) os << " x" << i << ":" << e.a_x[i];
    os << " const:" << e.c;
  };
  for (const LinearRow& row : sys.rows) {
    os << "row " << family_name(row.family) << "[" << row.index << "] <= 0:";
    put(row.expr);
    os << "\n";
  }
  for (const SocBlock& blk : sys.socs) {
    os << "soc " << family_name(blk.family) << "[" << blk.index << "] dim " << blk.vec.size()
       << "\n";
    for (std::size_t k = 0; k < blk.vec.size(); ++k) {
      os << "  vec" << k << ":";
      put(blk.vec[k]);
      os << "\n";
    }
    os << "  rhs:";
    put(blk.rhs);
    os << "\n";
  }
}

}  // namespace derdispatch
