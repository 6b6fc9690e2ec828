#include <catch2/catch_amalgamated.hpp>

#include "derdispatch/simplex.hpp"

using namespace derdispatch;

namespace {

// Brute-force oracle: enumerate all n-subsets of the active constraint
// candidates (rows plus nonnegativity), solve the square system, keep the
// best feasible vertex. Exact up to linear algebra on small problems.
double vertex_enumeration_max(const Mat& a, const Vec& b, const Vec& c) {
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  const int total = m + n;
  std::vector<int> pick(n);
  double best = -std::numeric_limits<double>::infinity();
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Mat sys(n, n);
      Vec rhs(n);
      for (int i = 0; i < n; ++i) {
        if (pick[i] < m) {
          sys.row(i) = a.row(pick[i]);
          rhs[i] = b[pick[i]];
        } else {
          sys.row(i).setZero();
          sys(i, pick[i] - m) = 1.0;
          rhs[i] = 0.0;
        }
      }
      Eigen::PartialPivLU<Mat> lu(sys);
      Vec v = lu.solve(rhs);
      if (!(v.allFinite())) return;
      if ((sys * v - rhs).cwiseAbs().maxCoeff() > 1e-9) return;
      if ((v.array() < -1e-9).any()) return;
      if (((a * v - b).array() > 1e-9).any()) return;
      best = std::max(best, c.dot(v));
      return;
    }
    for (int j = start; j <= total - (n - depth); ++j) {
      pick[depth] = j;
      rec(j + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

LpProblem from_dense(const Mat& a, const Vec& b, const Vec& c) {
  LpProblem lp;
  for (int j = 0; j < c.size(); ++j) lp.add_var(c[j]);
  for (int i = 0; i < a.rows(); ++i) {
    std::vector<LpTerm> terms;
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) terms.push_back({j, a(i, j)});
    lp.add_row(std::move(terms), LpRelation::le, b[i]);
  }
  return lp;
}

}  // namespace

TEST_CASE("trivial single-variable programs", "[simplex]") {
  SECTION("max s subject to s <= 3") {
    LpProblem lp;
    int s = lp.add_var(1.0);
    lp.add_row({{s, 1.0}}, LpRelation::le, 3.0);
    LpSolution sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(3.0, 1e-10));
  }
  SECTION("binding pair picks the tighter bound") {
    LpProblem lp;
    int s = lp.add_var(1.0);
    lp.add_row({{s, 1.0}}, LpRelation::le, 4.0);
    lp.add_row({{s, 1.0}}, LpRelation::le, 2.0);
    LpSolution sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(2.0, 1e-10));
  }
}

TEST_CASE("free variables, equalities, and ge rows", "[simplex]") {
  // max x + y  s.t.  x + y = 1, x - y >= -2, y free, x >= 0  ->  1
  LpProblem lp;
  int x = lp.add_var(1.0);
  int y = lp.add_var(1.0, /*free=*/true);
  lp.add_row({{x, 1.0}, {y, 1.0}}, LpRelation::eq, 1.0);
  lp.add_row({{x, 1.0}, {y, -1.0}}, LpRelation::ge, -2.0);
  LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(1.0, 1e-10));
  CHECK_THAT(sol.x[x] + sol.x[y], Catch::Matchers::WithinAbs(1.0, 1e-10));

  // Negative free optimum: max -y s.t. y >= -3 (y free) -> 3 at y = -3.
  LpProblem lp2;
  int y2 = lp2.add_var(-1.0, true);
  lp2.add_row({{y2, 1.0}}, LpRelation::ge, -3.0);
  LpSolution sol2 = solve_lp(lp2);
  REQUIRE(sol2.status == LpStatus::optimal);
  CHECK_THAT(sol2.x[y2], Catch::Matchers::WithinAbs(-3.0, 1e-10));
}

TEST_CASE("infeasible and unbounded detection", "[simplex]") {
  SECTION("infeasible") {
    LpProblem lp;
    int x = lp.add_var(1.0);
    lp.add_row({{x, 1.0}}, LpRelation::le, 1.0);
    lp.add_row({{x, 1.0}}, LpRelation::ge, 2.0);
    CHECK(solve_lp(lp).status == LpStatus::infeasible);
  }
  SECTION("unbounded") {
    LpProblem lp;
    int x = lp.add_var(1.0);
    lp.add_row({{x, -1.0}}, LpRelation::le, 1.0);
    CHECK(solve_lp(lp).status == LpStatus::unbounded);
  }
}

TEST_CASE("random LPs agree with vertex enumeration", "[simplex]") {
  Rng rng(20240201);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 6, m = 6;
    Mat a(m, n);
    Vec b(m), c(n);
    for (int i = 0; i < m; ++i) {
      b[i] = uniform(rng, 1.0, 2.0);
      for (int j = 0; j < n; ++j) a(i, j) = uniform(rng, 0.1, 1.0);
    }
    for (int j = 0; j < n; ++j) c[j] = uniform(rng, -0.5, 1.0);
    double oracle = vertex_enumeration_max(a, b, c);
    LpSolution sol = solve_lp(from_dense(a, b, c));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(oracle, 1e-8));
  }
}

TEST_CASE("deterministic pivot sequence", "[simplex]") {
  Rng rng(5);
  const int n = 8, m = 10;
  Mat a(m, n);
  Vec b(m), c(n);
  for (int i = 0; i < m; ++i) {
    b[i] = uniform(rng, 0.5, 2.0);
    for (int j = 0; j < n; ++j) a(i, j) = uniform(rng, 0.0, 1.0);
  }
  for (int j = 0; j < n; ++j) c[j] = uniform(rng, -1.0, 1.0);
  LpSolution s1 = solve_lp(from_dense(a, b, c));
  LpSolution s2 = solve_lp(from_dense(a, b, c));
  CHECK(s1.pivots == s2.pivots);
  CHECK(s1.objective == s2.objective);
  CHECK((s1.x - s2.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate stalls resolve via the Bland switch", "[simplex]") {
  // Klee-Minty-ish cube with duplicated degenerate rows.
  LpProblem lp;
  const int n = 5;
  std::vector<int> v;
  for (int j = 0; j < n; ++j) v.push_back(lp.add_var(std::pow(2.0, n - 1 - j)));
  for (int i = 0; i < n; ++i) {
    std::vector<LpTerm> terms;
    for (int j = 0; j < i; ++j) terms.push_back({v[j], std::pow(2.0, i - j + 1)});
    terms.push_back({v[i], 1.0});
    lp.add_row(terms, LpRelation::le, std::pow(5.0, i + 1));
    lp.add_row(terms, LpRelation::le, std::pow(5.0, i + 1));  // duplicate row
  }
  LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(std::pow(5.0, n), 1e-6));
}
