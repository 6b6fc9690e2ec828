#pragma once

// Built-in feeders: the Baran-Wu 33-bus test system with 7 PV units, a
// synthetic 129-bus feeder assembled from four scaled 33-bus sections, and
// a 2-bus toy used throughout the tests.
//
// Current limits are sized from the network itself: l_max on each branch is
// a fixed multiple of the largest squared current seen across the no-PV and
// full-PV nominal power flows, with a floor for lightly loaded branches.

#include <array>

#include "derdispatch/network.hpp"
#include "derdispatch/power_flow.hpp"

namespace derdispatch {

namespace detail {

// Baran-Wu 33-bus branch table: from, to (1-indexed), R and X in ohms,
// active/reactive load at the "to" bus in kW / kvar.
struct BwRow {
  int from, to;
  double r_ohm, x_ohm, p_kw, q_kvar;
};

inline const std::array<BwRow, 32>& baran_wu_rows() {
  static const std::array<BwRow, 32> rows = {{
      {1, 2, 0.0922, 0.0470, 100, 60},   {2, 3, 0.4930, 0.2511, 90, 40},
      {3, 4, 0.3660, 0.1864, 120, 80},   {4, 5, 0.3811, 0.1941, 60, 30},
      {5, 6, 0.8190, 0.7070, 60, 20},    {6, 7, 0.1872, 0.6188, 200, 100},
      {7, 8, 0.7114, 0.2351, 200, 100},  {8, 9, 1.0300, 0.7400, 60, 20},
      {9, 10, 1.0440, 0.7400, 60, 20},   {10, 11, 0.1966, 0.0650, 45, 30},
      {11, 12, 0.3744, 0.1238, 60, 35},  {12, 13, 1.4680, 1.1550, 60, 35},
      {13, 14, 0.5416, 0.7129, 120, 80}, {14, 15, 0.5910, 0.5260, 60, 10},
      {15, 16, 0.7463, 0.5450, 60, 20},  {16, 17, 1.2890, 1.7210, 60, 20},
      {17, 18, 0.7320, 0.5740, 90, 40},  {2, 19, 0.1640, 0.1565, 90, 40},
      {19, 20, 1.5042, 1.3554, 90, 40},  {20, 21, 0.4095, 0.4784, 90, 40},
      {21, 22, 0.7089, 0.9373, 90, 40},  {3, 23, 0.4512, 0.3083, 90, 50},
      {23, 24, 0.8980, 0.7091, 420, 200},{24, 25, 0.8960, 0.7011, 420, 200},
      {6, 26, 0.2030, 0.1034, 60, 25},   {26, 27, 0.2842, 0.1447, 60, 25},
      {27, 28, 1.0590, 0.9337, 60, 20},  {28, 29, 0.8042, 0.7006, 120, 70},
      {29, 30, 0.5075, 0.2585, 200, 600},{30, 31, 0.9744, 0.9630, 150, 70},
      {31, 32, 0.3105, 0.3619, 210, 100},{32, 33, 0.3410, 0.5302, 60, 40},
  }};
  return rows;
}

constexpr double kBwBaseMva = 1.0;
constexpr double kBwBaseKv = 12.66;
inline double bw_z_base() { return kBwBaseKv * kBwBaseKv / kBwBaseMva; }  // 160.2756 ohm

// PV sites within one 33-bus section, 1-indexed bus and nominal pu size:
// feeder mid/end points plus all three lateral ends.
struct PvSite {
  int bus;
  double p_nom;
};
inline const std::array<PvSite, 7>& bw_pv_sites() {
  static const std::array<PvSite, 7> sites = {{
      {8, 0.40}, {14, 0.30}, {18, 0.30}, {22, 0.30}, {25, 0.40}, {30, 0.30}, {33, 0.25},
  }};
  return sites;
}

constexpr double kInvCapOverAvail = 1.5;   // reactive headroom on top of 1.25x availability
constexpr double kCurrentLimitFactor = 5.0;  // on squared current
constexpr double kCurrentLimitFloor = 0.05;  // pu^2

// Size per-branch current limits from nominal operating envelopes.
inline void size_current_limits(NetworkData& net) {
  for (Branch& b : net.branches) b.l_max_sq = 1e6;  // placeholder so power flow runs
  net.finalize();
  Vec worst = Vec::Zero(net.n_branches());
  for (const Dispatch& d : {Dispatch::zeros(net), Dispatch::full_pv(net)}) {
    SystemState st = solve_power_flow(net, d);
    worst = worst.cwiseMax(st.l_sq);
  }
  for (int b = 0; b < net.n_branches(); ++b)
    net.branches[b].l_max_sq = std::max(kCurrentLimitFactor * worst[b], kCurrentLimitFloor);
  net.finalize();
}

}  // namespace detail

// Single branch, r = x = 0.05 pu, one PV node; loads configurable.
inline NetworkData make_two_bus(double p_load = 0.1, double q_load = 0.05, double pv_avail = 0.1,
                                double inv_cap = 0.2) {
  NetworkData net;
  net.base_mva = 1.0;
  net.v0_sq = 1.0;
  net.v_min_sq = 0.81;
  net.v_max_sq = 1.21;
  net.branches.push_back({0, 1, 0.05, 0.05, 1.0});
  net.p_load = Vec::Zero(2);
  net.q_load = Vec::Zero(2);
  net.pv_avail = Vec::Zero(2);
  net.inv_cap = Vec::Zero(2);
  net.p_load[1] = p_load;
  net.q_load[1] = q_load;
  net.pv_avail[1] = pv_avail;
  net.inv_cap[1] = inv_cap;
  net.finalize();
  return net;
}

inline NetworkData make_ieee33() {
  NetworkData net;
  net.base_mva = detail::kBwBaseMva;
  net.v0_sq = 1.0;
  net.v_min_sq = 0.81;   // 0.90 pu voltage
  net.v_max_sq = 1.21;   // 1.10 pu voltage
  const double zb = detail::bw_z_base();
  net.p_load = Vec::Zero(33);
  net.q_load = Vec::Zero(33);
  net.pv_avail = Vec::Zero(33);
  net.inv_cap = Vec::Zero(33);
  for (const auto& row : detail::baran_wu_rows()) {
    Branch b;
    b.from = row.from - 1;
    b.to = row.to - 1;
    b.r = row.r_ohm / zb;
    b.x = row.x_ohm / zb;
    b.l_max_sq = 1.0;  // sized below
    net.branches.push_back(b);
    net.p_load[b.to] = row.p_kw / 1000.0;
    net.q_load[b.to] = row.q_kvar / 1000.0;
  }
  for (const auto& site : detail::bw_pv_sites()) {
    net.pv_avail[site.bus - 1] = site.p_nom;
    net.inv_cap[site.bus - 1] = detail::kInvCapOverAvail * site.p_nom;
  }
  detail::size_current_limits(net);
  return net;
}

// Synthetic 129-bus feeder: a 33-bus section on the substation plus three
// more scaled 33-bus sections grafted onto trunk buses 9, 17 and 25
// (1-indexed within the first section). Impedances of the first section are
// strengthened and all loads scaled down so the nominal state sits inside
// the voltage band with margin. 7 PV sites per section give 28 units.
inline NetworkData make_synth129() {
  constexpr double kTrunkZScale = 0.25;
  constexpr double kLateralZScale = 0.40;
  constexpr double kLoadScale = 0.40;
  constexpr double kPvScale = 0.40;
  const std::array<int, 3> attach_at = {9, 17, 25};  // 1-indexed buses of section 0

  NetworkData net;
  net.base_mva = detail::kBwBaseMva;
  net.v0_sq = 1.0;
  net.v_min_sq = 0.81;
  net.v_max_sq = 1.21;
  net.p_load = Vec::Zero(129);
  net.q_load = Vec::Zero(129);
  net.pv_avail = Vec::Zero(129);
  net.inv_cap = Vec::Zero(129);
  const double zb = detail::bw_z_base();

  auto add_section = [&](int section, double z_scale, int attach_node) {
    const int offset = 32 * section;
    auto global = [&](int paper_bus) {
      return paper_bus == 1 ? attach_node : offset + paper_bus - 1;
    };
    for (const auto& row : detail::baran_wu_rows()) {
      Branch b;
      b.from = global(row.from);
      b.to = global(row.to);
      b.r = z_scale * row.r_ohm / zb;
      b.x = z_scale * row.x_ohm / zb;
      b.l_max_sq = 1.0;
      net.branches.push_back(b);
      net.p_load[b.to] = kLoadScale * row.p_kw / 1000.0;
      net.q_load[b.to] = kLoadScale * row.q_kvar / 1000.0;
    }
    for (const auto& site : detail::bw_pv_sites()) {
      int bus = global(site.bus);
      net.pv_avail[bus] = kPvScale * site.p_nom;
      net.inv_cap[bus] = detail::kInvCapOverAvail * net.pv_avail[bus];
    }
  };

  add_section(0, kTrunkZScale, 0);
  for (int s = 1; s <= 3; ++s) add_section(s, kLateralZScale, attach_at[s - 1] - 1);
  detail::size_current_limits(net);
  return net;
}

}  // namespace derdispatch
