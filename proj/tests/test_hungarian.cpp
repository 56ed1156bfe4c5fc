#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "sentgraph/hungarian.hpp"
#include "support/generators.hpp"

using sentgraph::Matching;
using sentgraph::hungarian;

namespace {

// Exhaustive minimum over all injections rows→columns.
double brute_force_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
  double best = n == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  std::vector<char> used(m, 0);
  std::vector<int> pick(n, -1);
  auto rec = [&](auto&& self, int row, double acc) -> void {
    if (row == n) {
      best = std::min(best, acc);
      return;
    }
    for (int j = 0; j < m; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      self(self, row + 1, acc + cost[row][j]);
      used[j] = 0;
    }
  };
  if (n > 0) rec(rec, 0, 0.0);
  return best;
}

bool injective(const std::vector<int>& a, int m) {
  std::vector<char> seen(m, 0);
  for (int j : a) {
    if (j < 0 || j >= m || seen[j]) return false;
    seen[j] = 1;
  }
  return true;
}

}  // namespace

TEST_CASE("single cell") {
  Matching r = hungarian({{5.0}});
  CHECK(r.assignment == std::vector<int>{0});
  CHECK(r.total_cost == 5.0);
}

TEST_CASE("two by two prefers the diagonal") {
  Matching r = hungarian({{1.0, 2.0}, {2.0, 1.0}});
  CHECK(r.assignment == std::vector<int>{0, 1});
  CHECK(r.total_cost == 2.0);
}

TEST_CASE("ties resolve to the lowest column indices") {
  Matching r = hungarian({{1.0, 1.0}, {1.0, 1.0}});
  CHECK(r.assignment == std::vector<int>{0, 1});
  CHECK(r.total_cost == 2.0);

  Matching wide = hungarian({{3.0, 1.0, 1.0}});
  CHECK(wide.assignment == std::vector<int>{1});
  CHECK(wide.total_cost == 1.0);
}

TEST_CASE("rectangular leaves extra columns unassigned") {
  Matching r = hungarian({{9.0, 2.0, 7.0}, {6.0, 8.0, 1.0}});
  CHECK(r.assignment == std::vector<int>{1, 2});
  CHECK(r.total_cost == 3.0);
}

TEST_CASE("empty matrix") {
  Matching r = hungarian({});
  CHECK(r.assignment.empty());
  CHECK(r.total_cost == 0.0);
}

TEST_CASE("negative costs are fine") {
  Matching r = hungarian({{-4.0, -1.0}, {-3.0, -5.0}});
  CHECK(r.assignment == std::vector<int>{0, 1});
  CHECK(r.total_cost == -9.0);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(hungarian({{1.0}, {2.0}}), std::invalid_argument);  // n > m
  CHECK_THROWS_AS(hungarian({{1.0, 2.0}, {3.0}}), std::invalid_argument);
  double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian({{inf}}), std::invalid_argument);
  CHECK_THROWS_AS(hungarian({{std::nan("")}}), std::invalid_argument);
}

TEST_CASE("matches brute force on 1000 random matrices") {
  std::mt19937_64 rng(0x48554e47u);
  for (int trial = 0; trial < 1000; ++trial) {
    int m = gen::rand_int(rng, 1, 6);
    int n = gen::rand_int(rng, 1, std::min(5, m));
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (auto& row : cost) {
      for (double& c : row) {
        // Dyadic values keep double sums exact, so == against the oracle
        // is meaningful.
        c = gen::rand_int(rng, -200, 400) / 4.0;
      }
    }
    Matching r = hungarian(cost);
    REQUIRE(injective(r.assignment, m));
    double check = 0.0;
    for (int i = 0; i < n; ++i) check += cost[i][r.assignment[i]];
    CHECK(r.total_cost == check);
    CHECK(r.total_cost == brute_force_min(cost));

    Matching again = hungarian(cost);
    CHECK(again.assignment == r.assignment);  // deterministic
  }
}
