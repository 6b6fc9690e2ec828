#pragma once

// Radial feeder data model and the vector types exchanged between modules.
//
// Conventions fixed here and relied on everywhere else:
//   * node 0 is the substation with fixed squared voltage v0_sq;
//     non-root nodes are 1..n and each has exactly one incoming branch,
//     so branches can be indexed 0..n-1 in file order.
//   * all quantities are per-unit; voltages and currents are squared.
//   * Scenario x stacks [P_load(1..n), Q_load(1..n), pv_avail(1..n)].
//   * Dispatch f stacks [P_pv(pv nodes ascending), Q_pv(same order)].

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "derdispatch/common.hpp"

namespace derdispatch {

struct Branch {
  int from = 0;      // parent node
  int to = 0;        // child node
  double r = 0.0;    // pu resistance
  double x = 0.0;    // pu reactance
  double l_max_sq = 0.0;  // squared-current limit, pu^2
};

struct NetworkData {
  double base_mva = 1.0;
  double v0_sq = 1.0;
  double v_min_sq = 0.81;
  double v_max_sq = 1.21;
  std::vector<Branch> branches;
  // Per-node arrays, size n+1, entry 0 unused (substation carries no load/PV).
  Vec p_load, q_load, pv_avail, inv_cap;

  // Derived by finalize().
  std::vector<int> branch_of_node;  // node -> incoming branch (-1 for root)
  std::vector<int> parent_of_node;  // node -> parent node (-1 for root)
  std::vector<int> sweep_order;     // branch indices, parent edge before children
  std::vector<std::vector<int>> child_branches;  // node -> outgoing branch indices
  std::vector<int> pv_nodes;        // nodes with inv_cap > 0, ascending

  int n_nodes() const { return static_cast<int>(p_load.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  int num_pv() const { return static_cast<int>(pv_nodes.size()); }
  int dim_x() const { return 3 * n_branches(); }
  int dim_f() const { return 2 * num_pv(); }

  // Validates invariants and builds the derived topology arrays.
  void finalize() {
    const int nb = n_branches();
    const int nn = n_nodes();
    if (nn != nb + 1) throw TopologyError("node count must equal branch count + 1");
    if (nn < 2) throw TopologyError("network needs at least one branch");
    if (v_min_sq <= 0.0) throw InputError("v_min_sq must be positive");
    if (v_min_sq > v_max_sq) throw InputError("v_min_sq exceeds v_max_sq");
    if (v0_sq < v_min_sq || v0_sq > v_max_sq) throw InputError("substation voltage outside limits");
    if ((int)q_load.size() != nn || (int)pv_avail.size() != nn || (int)inv_cap.size() != nn)
      throw InputError("per-node arrays must all have length n+1");

    branch_of_node.assign(nn, -1);
    parent_of_node.assign(nn, -1);
    child_branches.assign(nn, {});
    for (int b = 0; b < nb; ++b) {
      const Branch& br = branches[b];
      if (br.from < 0 || br.from >= nn || br.to <= 0 || br.to >= nn)
        throw TopologyError("branch endpoint out of range");
      if (br.r <= 0.0) throw InputError("branch resistance must be positive");
      if (br.x < 0.0) throw InputError("branch reactance must be nonnegative");
      if (br.l_max_sq <= 0.0) throw InputError("branch current limit must be positive");
      if (branch_of_node[br.to] != -1) throw TopologyError("node has two incoming branches");
      branch_of_node[br.to] = b;
      parent_of_node[br.to] = br.from;
      child_branches[br.from].push_back(b);
    }
    // Reachability from the root; also checks the stated from->to orientation.
    sweep_order.clear();
    sweep_order.reserve(nb);
    std::vector<int> stack{0};
    std::vector<char> seen(nn, 0);
    seen[0] = 1;
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      for (int b : child_branches[node]) {
        int child = branches[b].to;
        if (seen[child]) throw TopologyError("cycle detected");
        seen[child] = 1;
        sweep_order.push_back(b);
        stack.push_back(child);
      }
    }
    if ((int)sweep_order.size() != nb)
      throw TopologyError("network is not a tree rooted at node 0 (check branch orientation)");

    pv_nodes.clear();
    for (int i = 1; i < nn; ++i) {
      if (pv_avail[i] < 0.0) throw InputError("pv_avail must be nonnegative");
      if (inv_cap[i] < 0.0) throw InputError("inv_cap must be nonnegative");
      if (pv_avail[i] > 0.0 && inv_cap[i] + 1e-12 < pv_avail[i])
        throw InputError("inverter capacity below PV availability at node " + std::to_string(i));
      if (inv_cap[i] > 0.0) pv_nodes.push_back(i);
    }
    if (pv_avail[0] != 0.0 || inv_cap[0] != 0.0 || p_load[0] != 0.0 || q_load[0] != 0.0)
      throw InputError("substation node must carry no load or PV");
  }

  std::string fingerprint() const {
    std::ostringstream os;
    auto put = [&os](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g;", v);
      os << buf;
    };
    put(base_mva);
    put(v0_sq);
    put(v_min_sq);
    put(v_max_sq);
    for (const Branch& b : branches) {
      os << b.from << "," << b.to << ",";
      put(b.r);
      put(b.x);
      put(b.l_max_sq);
    }
    for (int i = 0; i < n_nodes(); ++i) {
      put(p_load[i]);
      put(q_load[i]);
      put(pv_avail[i]);
      put(inv_cap[i]);
    }
    std::string s = os.str();
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return std::string(out);
  }
};

// Scenario vector layout helpers. x = [P_load, Q_load, pv_avail] over nodes 1..n.
struct Scenario {
  Vec x;

  static int idx_p_load(int node) { return node - 1; }
  static int idx_q_load(const NetworkData& net, int node) { return net.n_branches() + node - 1; }
  static int idx_pv_avail(const NetworkData& net, int node) { return 2 * net.n_branches() + node - 1; }

  static Scenario nominal(const NetworkData& net) {
    const int n = net.n_branches();
    Scenario s;
    s.x.resize(3 * n);
    for (int i = 1; i <= n; ++i) {
      s.x[i - 1] = net.p_load[i];
      s.x[n + i - 1] = net.q_load[i];
      s.x[2 * n + i - 1] = net.pv_avail[i];
    }
    return s;
  }
};

// Returns a copy of `net` with loads and PV availability taken from x.
inline NetworkData apply_scenario(const NetworkData& net, const Scenario& sc) {
  if (sc.x.size() != net.dim_x()) throw InputError("scenario dimension mismatch");
  NetworkData out = net;
  const int n = net.n_branches();
  for (int i = 1; i <= n; ++i) {
    out.p_load[i] = sc.x[i - 1];
    out.q_load[i] = sc.x[n + i - 1];
    out.pv_avail[i] = sc.x[2 * n + i - 1];
  }
  out.finalize();
  return out;
}

struct Dispatch {
  Vec f;  // [P over pv nodes, Q over pv nodes]

  static Dispatch zeros(const NetworkData& net) {
    Dispatch d;
    d.f = Vec::Zero(net.dim_f());
    return d;
  }
  // Zero curtailment at unity power factor.
  static Dispatch full_pv(const NetworkData& net) {
    Dispatch d = zeros(net);
    for (int k = 0; k < net.num_pv(); ++k) d.f[k] = net.pv_avail[net.pv_nodes[k]];
    return d;
  }
  double p_at(const NetworkData& net, int k) const {
    (void)net;
    return f[k];
  }
  double q_at(const NetworkData& net, int k) const { return f[net.num_pv() + k]; }
};

// Nodal net injections, generation-positive (PV minus load), nodes 1..n.
inline void nodal_injections(const NetworkData& net, const Dispatch& d, Vec& p, Vec& q) {
  const int n = net.n_branches();
  p.resize(n);
  q.resize(n);
  for (int i = 1; i <= n; ++i) {
    p[i - 1] = -net.p_load[i];
    q[i - 1] = -net.q_load[i];
  }
  for (int k = 0; k < net.num_pv(); ++k) {
    int node = net.pv_nodes[k];
    p[node - 1] += d.f[k];
    q[node - 1] += d.f[net.num_pv() + k];
  }
}

struct SystemState {
  Vec v_sq;    // per node, size n+1, v_sq[0] == v0_sq
  Vec l_sq;    // per branch
  Vec p_flow;  // per branch, sending-end at the parent, downstream-positive
  Vec q_flow;
  int iterations = 0;
};

// ---------------------------------------------------------------------------
// JSON file format
// ---------------------------------------------------------------------------

inline NetworkData network_from_json(const nlohmann::json& j) {
  NetworkData net;
  net.base_mva = j.at("base_mva").get<double>();
  net.v0_sq = j.at("v0_sq").get<double>();
  net.v_min_sq = j.at("v_min_sq").get<double>();
  net.v_max_sq = j.at("v_max_sq").get<double>();
  const auto& buses = j.at("buses");
  const int nn = static_cast<int>(buses.size());
  net.p_load = Vec::Zero(nn);
  net.q_load = Vec::Zero(nn);
  net.pv_avail = Vec::Zero(nn);
  net.inv_cap = Vec::Zero(nn);
  std::vector<char> seen(nn, 0);
  for (const auto& b : buses) {
    int id = b.at("id").get<int>();
    if (id < 0 || id >= nn || seen[id]) throw InputError("bus ids must be 0..n, each once");
    seen[id] = 1;
    net.p_load[id] = b.at("p_load").get<double>();
    net.q_load[id] = b.at("q_load").get<double>();
    net.pv_avail[id] = b.at("pv_avail").get<double>();
    net.inv_cap[id] = b.at("inv_cap").get<double>();
  }
  for (const auto& e : j.at("branches")) {
    Branch br;
    br.from = e.at("from").get<int>();
    br.to = e.at("to").get<int>();
    br.r = e.at("r").get<double>();
    br.x = e.at("x").get<double>();
    br.l_max_sq = e.at("l_max_sq").get<double>();
    net.branches.push_back(br);
  }
  net.finalize();
  return net;
}

inline nlohmann::json network_to_json(const NetworkData& net) {
  nlohmann::json j;
  j["base_mva"] = net.base_mva;
  j["v0_sq"] = net.v0_sq;
  j["v_min_sq"] = net.v_min_sq;
  j["v_max_sq"] = net.v_max_sq;
  j["buses"] = nlohmann::json::array();
  for (int i = 0; i < net.n_nodes(); ++i) {
    j["buses"].push_back({{"id", i},
                          {"p_load", net.p_load[i]},
                          {"q_load", net.q_load[i]},
                          {"pv_avail", net.pv_avail[i]},
                          {"inv_cap", net.inv_cap[i]}});
  }
  j["branches"] = nlohmann::json::array();
  for (const Branch& b : net.branches) {
    j["branches"].push_back(
        {{"from", b.from}, {"to", b.to}, {"r", b.r}, {"x", b.x}, {"l_max_sq", b.l_max_sq}});
  }
  return j;
}

inline NetworkData load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open network file: " + path);
  nlohmann::json j;
  in >> j;
  return network_from_json(j);
}

inline void save_network(const NetworkData& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write network file: " + path);
  out << network_to_json(net).dump(2) << "\n";
}

}  // namespace derdispatch
