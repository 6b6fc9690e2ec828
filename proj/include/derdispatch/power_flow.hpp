#pragma once

// Exact DistFlow power flow on radial feeders via backward/forward sweep,
// plus the feasibility and objective oracles built on it.
//
// Branch equations solved (sending end at the parent node i of branch e=(i,j),
// flows downstream-positive, injections consumption-positive):
//   P_e = load_j - pv_j + sum of child flows + r_e * l_e
//   Q_e = analogous with x_e
//   V_j = V_i - 2 (r_e P_e + x_e Q_e) + (r_e^2 + x_e^2) l_e
//   l_e V_i = P_e^2 + Q_e^2

#include <cmath>
#include <optional>
#include <string>

#include "derdispatch/network.hpp"

namespace derdispatch {

struct PowerFlowOptions {
  double tol_v_sq = 1e-10;  // stop when successive squared-voltage change is below this
  int max_iterations = 200;
};

inline SystemState solve_power_flow(const NetworkData& net, const Dispatch& d,
                                    const PowerFlowOptions& opts = {}) {
  const int n = net.n_branches();
  if (d.f.size() != net.dim_f()) throw InputError("dispatch dimension mismatch");
  if (!d.f.allFinite()) throw InputError("dispatch must be finite");

  // Consumption-positive nodal withdrawals, indexed by node.
  Vec pc = net.p_load, qc = net.q_load;
  for (int k = 0; k < net.num_pv(); ++k) {
    int node = net.pv_nodes[k];
    pc[node] -= d.f[k];
    qc[node] -= d.f[net.num_pv() + k];
  }

  SystemState st;
  st.v_sq = Vec::Constant(net.n_nodes(), net.v0_sq);
  st.l_sq = Vec::Zero(n);
  st.p_flow = Vec::Zero(n);
  st.q_flow = Vec::Zero(n);

  auto backward = [&] {
    for (int idx = n - 1; idx >= 0; --idx) {
      int b = net.sweep_order[idx];
      const Branch& br = net.branches[b];
      double p = pc[br.to] + br.r * st.l_sq[b];
      double q = qc[br.to] + br.x * st.l_sq[b];
      for (int cb : net.child_branches[br.to]) {
        p += st.p_flow[cb];
        q += st.q_flow[cb];
      }
      st.p_flow[b] = p;
      st.q_flow[b] = q;
    }
  };
  auto forward = [&] {
    for (int b : net.sweep_order) {
      const Branch& br = net.branches[b];
      double z2 = br.r * br.r + br.x * br.x;
      double v = st.v_sq[br.from] - 2.0 * (br.r * st.p_flow[b] + br.x * st.q_flow[b]) +
                 z2 * st.l_sq[b];
      if (!(v > 0.0)) throw CollapseError("non-positive squared voltage at node " + std::to_string(br.to));
      st.v_sq[br.to] = v;
    }
  };

  Vec v_prev = st.v_sq;
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    backward();
    forward();
    for (int b = 0; b < n; ++b) {
      const Branch& br = net.branches[b];
      st.l_sq[b] = (st.p_flow[b] * st.p_flow[b] + st.q_flow[b] * st.q_flow[b]) / st.v_sq[br.from];
    }
    double dv = (st.v_sq - v_prev).cwiseAbs().maxCoeff();
    st.iterations = iter;
    if (dv <= opts.tol_v_sq) {
      backward();  // consistency pass with the converged currents
      forward();
      return st;
    }
    v_prev = st.v_sq;
  }
  throw DivergenceError("power flow did not converge in " + std::to_string(opts.max_iterations) +
                        " iterations");
}

// Max absolute residuals of the four branch equation families.
struct PowerFlowResiduals {
  double p = 0.0, q = 0.0, v = 0.0, ohm = 0.0;
  double max() const { return std::max(std::max(p, q), std::max(v, ohm)); }
};

inline PowerFlowResiduals power_flow_residuals(const NetworkData& net, const Dispatch& d,
                                               const SystemState& st) {
  Vec pc = net.p_load, qc = net.q_load;
  for (int k = 0; k < net.num_pv(); ++k) {
    int node = net.pv_nodes[k];
    pc[node] -= d.f[k];
    qc[node] -= d.f[net.num_pv() + k];
  }
  PowerFlowResiduals res;
  for (int b = 0; b < net.n_branches(); ++b) {
    const Branch& br = net.branches[b];
    double p = pc[br.to] + br.r * st.l_sq[b];
    double q = qc[br.to] + br.x * st.l_sq[b];
    for (int cb : net.child_branches[br.to]) {
      p += st.p_flow[cb];
      q += st.q_flow[cb];
    }
    res.p = std::max(res.p, std::abs(st.p_flow[b] - p));
    res.q = std::max(res.q, std::abs(st.q_flow[b] - q));
    double z2 = br.r * br.r + br.x * br.x;
    double v = st.v_sq[br.from] - 2.0 * (br.r * st.p_flow[b] + br.x * st.q_flow[b]) +
               z2 * st.l_sq[b];
    res.v = std::max(res.v, std::abs(st.v_sq[br.to] - v));
    res.ohm = std::max(res.ohm, std::abs(st.l_sq[b] * st.v_sq[br.from] -
                                         st.p_flow[b] * st.p_flow[b] -
                                         st.q_flow[b] * st.q_flow[b]));
  }
  return res;
}

struct FeasibilityReport {
  bool feasible = false;
  bool diverged = false;
  // Worst violation per constraint family; 0 when satisfied. Box and current
  // families are in the units of the constraint (pu, pu^2); the inverter
  // family is on squared apparent power.
  double box = 0.0;
  double inverter = 0.0;
  double v_low = 0.0;
  double v_high = 0.0;
  double current = 0.0;
  std::optional<SystemState> state;

  double max_violation() const {
    return std::max({box, inverter, v_low, v_high, current});
  }
  std::string summary() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s box=%.3e inv=%.3e v_low=%.3e v_high=%.3e current=%.3e%s",
                  feasible ? "feasible" : "infeasible", box, inverter, v_low, v_high, current,
                  diverged ? " (power flow diverged)" : "");
    return buf;
  }
};

inline FeasibilityReport check_feasibility(const NetworkData& net, const Dispatch& d,
                                           double tol = 1e-6) {
  if (tol < 0.0) throw InputError("feasibility tolerance must be nonnegative");
  FeasibilityReport rep;
  const int npv = net.num_pv();
  for (int k = 0; k < npv; ++k) {
    int node = net.pv_nodes[k];
    double p = d.f[k], q = d.f[npv + k];
    rep.box = std::max({rep.box, -p, p - net.pv_avail[node]});
    double cap = net.inv_cap[node];
    rep.inverter = std::max(rep.inverter, p * p + q * q - cap * cap);
  }
  try {
    SystemState st = solve_power_flow(net, d);
    for (int i = 1; i < net.n_nodes(); ++i) {
      rep.v_low = std::max(rep.v_low, net.v_min_sq - st.v_sq[i]);
      rep.v_high = std::max(rep.v_high, st.v_sq[i] - net.v_max_sq);
    }
    for (int b = 0; b < net.n_branches(); ++b)
      rep.current = std::max(rep.current, st.l_sq[b] - net.branches[b].l_max_sq);
    rep.state = std::move(st);
  } catch (const Error&) {
    rep.diverged = true;
  }
  rep.feasible = !rep.diverged && rep.max_violation() <= tol;
  return rep;
}

// Line losses plus curtailed PV energy.
inline double evaluate_objective(const NetworkData& net, const SystemState& st, const Dispatch& d) {
  double cost = 0.0;
  for (int b = 0; b < net.n_branches(); ++b) cost += net.branches[b].r * st.l_sq[b];
  for (int k = 0; k < net.num_pv(); ++k) cost += net.pv_avail[net.pv_nodes[k]] - d.f[k];
  return cost;
}

}  // namespace derdispatch
