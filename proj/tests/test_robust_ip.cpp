#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "derdispatch/builtin_networks.hpp"
#include "derdispatch/robust_ip.hpp"

using namespace derdispatch;

namespace {

InnerSystem assemble_for(const NetworkData& net) {
  DistFlowMatrices mat = build_matrices(net);
  SystemState base = solve_power_flow(net, Dispatch::full_pv(net));
  return assemble_inner_system(net, mat, make_taylor_cuts(net, base));
}

// max_x A.x over the box, brute force over vertices.
double vertex_max(const Vec& a, const ScenarioBox& box) {
  double best = -1e300;
  const int d = box.dim();
  for (int mask = 0; mask < (1 << d); ++mask) {
    double v = 0.0;
    for (int j = 0; j < d; ++j) v += a[j] * ((mask >> j) & 1 ? box.hi[j] : box.lo[j]);
    best = std::max(best, v);
  }
  return best;
}

// Builds "max s subject to A.x + s <= b for all x in box" through the dual
// rows and returns s*.
double dual_certificate(const Vec& a, double b, const ScenarioBox& box) {
  LpProblem lp;
  int s = lp.add_var(1.0);
  RobustLinearRow row;
  for (int j = 0; j < a.size(); ++j) {
    if (a[j] == 0.0) continue;
    row.x_idx.push_back(j);
    LinForm f;
    f.c = a[j];
    row.x_coef.push_back(f);
  }
  row.base.c = -b;
  row.base.add(s, 1.0);
  dualize_linear_row(row, box, lp);
  LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::optimal);
  return sol.objective;
}

}  // namespace

TEST_CASE("dual certificates equal brute-force box maxima", "[robust_ip]") {
  SECTION("spec example: x1 <= 5 over [0,1]") {
    ScenarioBox box;
    box.lo = Vec::Zero(1);
    box.hi = Vec::Ones(1);
    Vec a(1);
    a << 1.0;
    CHECK_THAT(dual_certificate(a, 5.0, box), Catch::Matchers::WithinAbs(4.0, 1e-9));
  }
  SECTION("zero coefficient row ignores the box") {
    ScenarioBox box;
    box.lo = Vec::Constant(3, -7.0);
    box.hi = Vec::Constant(3, 9.0);
    Vec a = Vec::Zero(3);
    CHECK_THAT(dual_certificate(a, 2.5, box), Catch::Matchers::WithinAbs(2.5, 1e-9));
  }
  SECTION("random rows") {
    Rng rng(20240301);
    for (int rep = 0; rep < 100; ++rep) {
      const int d = 8;
      ScenarioBox box;
      box.lo = Vec(d);
      box.hi = Vec(d);
      for (int j = 0; j < d; ++j) {
        double c = uniform(rng, -1.0, 1.0), h = uniform(rng, 0.0, 1.0);
        box.lo[j] = c - h;
        box.hi[j] = c + h;
      }
      Vec a(d);
      for (int j = 0; j < d; ++j) a[j] = uniform(rng, -2.0, 2.0);
      double b = uniform(rng, -1.0, 5.0);
      double expect = b - vertex_max(a, box);
      CHECK_THAT(dual_certificate(a, b, box), Catch::Matchers::WithinAbs(expect, 1e-9));
    }
  }
}

TEST_CASE("one-norm soc rows", "[robust_ip]") {
  // Fixed blocks: no rule variables, only s and the epigraph auxiliaries.
  detail::RuleVars vars;
  vars.dim_y = 0;
  auto fit_block = [&](const SocBlock& blk, const ScenarioBox& box) {
    vars.dim_x = box.dim();
    LpProblem lp;
    int s = lp.add_var(1.0);
    one_norm_soc_rows(blk, vars, box, s, lp);
    LpSolution sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    return sol.objective;
  };
  auto scalar = [](double ax, double c, int dim_x) {
    AffineScalar e = AffineScalar::constant(c, 0, dim_x);
    e.a_x[0] = ax;
    return e;
  };

  SECTION("one-dimensional vector part is exact") {
    ScenarioBox box;
    box.lo = Vec::Constant(1, -1.0);
    box.hi = Vec::Constant(1, 2.0);
    SocBlock blk;
    blk.vec = {scalar(0.5, 0.3, 1)};  // |0.5 x + 0.3|
    blk.rhs = AffineScalar::constant(4.0, 0, 1);
    double expect = 4.0 - std::max(std::abs(0.5 * 2.0 + 0.3), std::abs(0.5 * -1.0 + 0.3));
    CHECK_THAT(fit_block(blk, box), Catch::Matchers::WithinAbs(expect, 1e-9));
  }
  SECTION("zero vector part reduces to the worst-cased rhs") {
    ScenarioBox box;
    box.lo = Vec::Constant(1, 0.0);
    box.hi = Vec::Constant(1, 1.0);
    SocBlock blk;
    blk.vec = {AffineScalar::constant(0.0, 0, 1)};
    AffineScalar rhs = AffineScalar::constant(3.0, 0, 1);
    rhs.a_x[0] = -2.0;  // rhs = 3 - 2x, worst at x = 1
    blk.rhs = rhs;
    CHECK_THAT(fit_block(blk, box), Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  SECTION("certificate implies the 2-norm block over samples") {
    Rng rng(77);
    for (int rep = 0; rep < 20; ++rep) {
      const int d = 4;
      ScenarioBox box;
      box.lo = Vec(d);
      box.hi = Vec(d);
      for (int j = 0; j < d; ++j) {
        double c = uniform(rng, -0.5, 0.5), h = uniform(rng, 0.1, 0.6);
        box.lo[j] = c - h;
        box.hi[j] = c + h;
      }
      SocBlock blk;
      for (int k = 0; k < 2; ++k) {
        AffineScalar e = AffineScalar::constant(uniform(rng, -0.3, 0.3), 0, d);
        for (int j = 0; j < d; ++j) e.a_x[j] = uniform(rng, -0.5, 0.5);
        blk.vec.push_back(e);
      }
      blk.rhs = AffineScalar::constant(uniform(rng, 2.0, 4.0), 0, d);
      double s_star = fit_block(blk, box);
      if (s_star < 0.0) continue;
      Vec none;
      for (int i = 0; i < 10000; ++i) {
        Vec x = box.sample(rng);
        double n2 = std::hypot(blk.vec[0].eval(none, x), blk.vec[1].eval(none, x));
        REQUIRE(n2 + s_star <= blk.rhs.eval(none, x) + 1e-9);
      }
    }
  }
}

TEST_CASE("explicit dual LP and cutting plane agree on the 2-bus feeder", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  ScenarioBox box = ScenarioBox::from_radius(net, 0.25);
  FitOptions explicit_opts, cg_opts;
  explicit_opts.structure = RuleStructure::full(net);
  explicit_opts.structure_set = true;
  explicit_opts.method = FitMethod::explicit_dual;
  cg_opts.structure = RuleStructure::full(net);
  cg_opts.structure_set = true;
  cg_opts.method = FitMethod::cutting_plane;
  AffineRule a = fit_affine_rule(net, sys, box, explicit_opts);
  AffineRule b = fit_affine_rule(net, sys, box, cg_opts);
  CHECK_THAT(a.s_star, Catch::Matchers::WithinAbs(b.s_star, 1e-6));
  CHECK(a.s_star > 0.0);
}

TEST_CASE("degenerate box reduces to the best uniform margin at nominal", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  Scenario nom = Scenario::nominal(net);
  ScenarioBox box{nom.x, nom.x};
  AffineRule rule = fit_affine_rule(net, sys, box);
  // Same value from a direct LP at the single scenario: maximize s subject to
  // rows(y) + s <= 0 and the 1-norm soc surrogate at x = nominal.
  FitOptions direct;
  direct.structure = RuleStructure::constant();
  direct.structure_set = true;
  direct.method = FitMethod::explicit_dual;
  AffineRule point = fit_affine_rule(net, sys, box, direct);
  CHECK_THAT(rule.s_star, Catch::Matchers::WithinAbs(point.s_star, 1e-7));
  CHECK(rule.s_star > 0.0);

  // The rule is a single interior point; its membership margin at nominal is
  // at least s* (2-norm margins dominate the 1-norm certificate).
  MembershipReport rep = inner_membership(sys, rule.eval_y(nom.x), nom.x, 1e-9);
  CHECK(rep.inside);
  CHECK(rep.min_margin >= rule.s_star - 1e-9);
}

TEST_CASE("vertex certification on the 2-bus feeder", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  ScenarioBox box = ScenarioBox::from_radius(net, 0.25);
  FitOptions opts;
  opts.structure = RuleStructure::full(net);
  opts.structure_set = true;
  AffineRule rule = fit_affine_rule(net, sys, box, opts);
  REQUIRE(rule.s_star > 0.0);
  const int d = box.dim();
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = (mask >> j) & 1 ? box.hi[j] : box.lo[j];
    MembershipReport rep = inner_membership(sys, rule.eval_y(x), x, 1e-9);
    CHECK(rep.min_margin >= rule.s_star - 1e-9);
    // And the dispatch is exactly feasible.
    Scenario sc{x};
    InteriorPointResult ip = eval_interior_point(rule, sc);
    CHECK(ip.certified);
    CHECK(check_feasibility(apply_scenario(net, sc), ip.dispatch, 1e-6).feasible);
  }
}

TEST_CASE("33-bus fit: positive slack and sampled certification", "[robust_ip]") {
  NetworkData net = make_ieee33();
  InnerSystem sys = assemble_for(net);
  ScenarioBox box = ScenarioBox::from_radius(net, 0.25);
  AffineRule rule = fit_affine_rule(net, sys, box);
  INFO("fitted s* = " << rule.s_star);
  REQUIRE(rule.s_star > 0.0);

  Rng rng(909);
  for (int i = 0; i < 1000; ++i) {
    Scenario sc{i % 5 == 0 ? box.vertex(rng) : box.sample(rng)};
    InteriorPointResult ip = eval_interior_point(rule, sc);
    FeasibilityReport rep = check_feasibility(apply_scenario(net, sc), ip.dispatch, 1e-6);
    if (!rep.feasible) {
      INFO("certificate failed at sample " << i << ": " << rep.summary());
      REQUIRE(rep.feasible);
    }
  }
}

TEST_CASE("smaller boxes cannot lose slack", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  FitOptions opts;
  opts.structure = RuleStructure::full(net);
  opts.structure_set = true;
  AffineRule wide = fit_affine_rule(net, sys, ScenarioBox::from_radius(net, 0.25), opts);
  AffineRule narrow = fit_affine_rule(net, sys, ScenarioBox::from_radius(net, 0.05), opts);
  CHECK(narrow.s_star >= wide.s_star - 1e-9);
}

TEST_CASE("interior point evaluation", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  ScenarioBox box = ScenarioBox::from_radius(net, 0.25);
  AffineRule rule = fit_affine_rule(net, sys, box);

  SECTION("affine in x") {
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
      Vec x1 = box.sample(rng), x2 = box.sample(rng);
      double al = uniform01(rng);
      Vec mix = al * x1 + (1.0 - al) * x2;
      Vec f_mix = eval_interior_point(rule, Scenario{mix}).dispatch.f;
      Vec f_lin = al * eval_interior_point(rule, Scenario{x1}).dispatch.f +
                  (1.0 - al) * eval_interior_point(rule, Scenario{x2}).dispatch.f;
      CHECK((f_mix - f_lin).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SECTION("outside the box carries a warning verdict") {
    Vec x = box.hi * 1.5;
    InteriorPointResult r = eval_interior_point(rule, Scenario{x});
    CHECK_FALSE(r.certified);
    CHECK(r.dispatch.f.allFinite());
  }
}

TEST_CASE("rule artifact round trip and fingerprint check", "[robust_ip]") {
  NetworkData net = make_two_bus();
  InnerSystem sys = assemble_for(net);
  AffineRule rule = fit_affine_rule(net, sys, ScenarioBox::from_radius(net, 0.2));
  std::string path = "test_rule_artifact.json";
  save_rule(rule, path);
  AffineRule back = load_rule(path, net);
  CHECK((back.W - rule.W).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.w - rule.w).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.s_star == rule.s_star);

  NetworkData other = make_two_bus(0.11, 0.05);
  CHECK_THROWS_AS(load_rule(path, other), CertificateError);
  std::remove(path.c_str());
}
