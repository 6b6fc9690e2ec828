#pragma once

// Compact matrix form of the DistFlow branch equations on a tree.
//
// With generation-positive nodal injections p, q (PV minus load) and
// export-positive branch flows (the negative of the downstream sending-end
// flows used by the sweep solver), the branch recursions collapse to
//
//   P = C p - D_R l
//   Q = C q - D_X l
//   V = v0 * 1 + M_p p + M_q q - H l
//
// where C is the downstream accumulation matrix (C[e][m] = 1 iff node m lies
// in the subtree fed by branch e), D_R = C R, D_X = C X,
// M_p = 2 C^T R C, M_q = 2 C^T X C and H = C^T (2 R D_R + 2 X D_X - Z^2).
// These follow from expanding the recursions leaf-to-root; the randomized
// identity test in the suite is the ground truth for the signs. Under this
// convention D_R and D_X are elementwise nonnegative, M_p and M_q are
// symmetric positive semidefinite, and H[m][e] = 2 sum_{e' anc of e}
// (r_e' r_e + x_e' x_e) - z2_e >= z2_e > 0 whenever e feeds m, so H is
// nonnegative as well. The sign-split parts (A = A_plus + A_minus with
// A_plus >= 0 >= A_minus) are still materialized because the interval
// arithmetic downstream is written against them.

#include "derdispatch/network.hpp"

namespace derdispatch {

struct DistFlowMatrices {
  Mat C;            // n x n downstream accumulation
  Mat D_R, D_X;     // loss coupling into flows
  Mat M_p, M_q;     // injection-to-voltage, PSD
  Mat H;            // current-to-voltage
  Mat D_R_plus, D_R_minus;
  Mat D_X_plus, D_X_minus;
  Mat H_plus, H_minus;
};

inline DistFlowMatrices build_matrices(const NetworkData& net) {
  const int n = net.n_branches();
  if ((int)net.sweep_order.size() != n) throw TopologyError("network not finalized");

  DistFlowMatrices m;
  m.C = Mat::Zero(n, n);
  // Children before parents: accumulate subtree indicators.
  for (int idx = n - 1; idx >= 0; --idx) {
    int b = net.sweep_order[idx];
    int child = net.branches[b].to;
    m.C(b, child - 1) = 1.0;
    for (int cb : net.child_branches[child]) m.C.row(b) += m.C.row(cb);
  }

  Vec r(n), x(n), z2(n);
  for (int b = 0; b < n; ++b) {
    r[b] = net.branches[b].r;
    x[b] = net.branches[b].x;
    z2[b] = r[b] * r[b] + x[b] * x[b];
  }
  m.D_R = m.C * r.asDiagonal();
  m.D_X = m.C * x.asDiagonal();
  m.M_p = 2.0 * m.C.transpose() * r.asDiagonal() * m.C;
  m.M_q = 2.0 * m.C.transpose() * x.asDiagonal() * m.C;
  m.H = m.C.transpose() *
        (2.0 * r.asDiagonal() * m.D_R + 2.0 * x.asDiagonal() * m.D_X -
         Mat(z2.asDiagonal()));

  auto split = [](const Mat& a, Mat& plus, Mat& minus) {
    plus = a.cwiseMax(0.0);
    minus = a.cwiseMin(0.0);
  };
  split(m.D_R, m.D_R_plus, m.D_R_minus);
  split(m.D_X, m.D_X_plus, m.D_X_minus);
  split(m.H, m.H_plus, m.H_minus);

  if ((m.D_R_minus.array() < -1e-15).any())
    throw FormulationError("D_R has negative entries; sign convention violated");
  return m;
}

// Evaluates the compact form. p, q are generation-positive injections over
// nodes 1..n; returns export-positive flows and squared voltages V[1..n].
struct CompactState {
  Vec p_flow, q_flow, v_sq;
};

inline CompactState eval_compact(const DistFlowMatrices& m, double v0_sq, const Vec& p,
                                 const Vec& q, const Vec& l) {
  CompactState s;
  s.p_flow = m.C * p - m.D_R * l;
  s.q_flow = m.C * q - m.D_X * l;
  s.v_sq = Vec::Constant(p.size(), v0_sq) + m.M_p * p + m.M_q * q - m.H * l;
  return s;
}

// Compact-convention view of an exact power-flow state: flips the solver's
// downstream-positive flows to export-positive and drops the root voltage.
// Flows stay branch-indexed; v_sq[m] is node m+1.
inline CompactState compact_view(const NetworkData& net, const SystemState& st) {
  CompactState s;
  s.p_flow = -st.p_flow;
  s.q_flow = -st.q_flow;
  s.v_sq = st.v_sq.tail(net.n_branches());
  return s;
}

}  // namespace derdispatch
