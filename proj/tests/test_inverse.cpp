#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lp_oracle.hpp"
#include "resmatch/inverse.hpp"
#include "resmatch/rng.hpp"
#include "resmatch/serialize.hpp"
#include "testutil.hpp"

using namespace resmatch;

namespace {

double l1_distance(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) total += std::abs(a.data()[i] - b.data()[i]);
  return total;
}

/// Exhaustive co-optimal set under the given weights (exact comparisons).
std::vector<std::vector<int>> co_optimal_assignments(const Matrix& w, const Capacities& caps) {
  std::vector<std::vector<int>> best;
  double best_value = -1.0;
  for (const auto& a : testutil::all_feasible_assignments(w.rows(), caps)) {
    double value = assignment_objective(w, a);
    if (value > best_value) {
      best_value = value;
      best.clear();
    }
    if (value == best_value) best.push_back(a);
  }
  return best;
}

}  // namespace

TEST_CASE("employed_set splits the pool by outcome") {
  RetroRecord r{{0, 1, 0}, {1, 0, 1}, {2, 1}};
  CHECK(employed_set(r) == std::vector<int>{0, 2});
  r.employed = {0, 0, 0};
  CHECK(employed_set(r).empty());
  r.employed = {1, 1, 1};
  CHECK(employed_set(r) == std::vector<int>{0, 1, 2});
}

TEST_CASE("reduced_capacities subtracts the employed keepers") {
  SUBCASE("mixed outcomes") {
    RetroRecord r{{0, 0, 1}, {1, 0, 1}, {2, 1}};
    CHECK(reduced_capacities(r) == Capacities{1, 0});
  }
  SUBCASE("no employment leaves capacities alone") {
    RetroRecord r{{0, 0, 1}, {0, 0, 0}, {2, 1}};
    CHECK(reduced_capacities(r) == Capacities{2, 1});
  }
  SUBCASE("full single location") {
    RetroRecord r{{0}, {1}, {1}};
    CHECK(reduced_capacities(r) == Capacities{0});
  }
  SUBCASE("inconsistent records are rejected") {
    RetroRecord r{{0, 0}, {1, 1}, {1}};
    CHECK_THROWS_AS(reduced_capacities(r), std::invalid_argument);
  }
}

TEST_CASE("harmless_completion pins the employed and optimizes the rest") {
  Matrix g = Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}});
  SUBCASE("worked example") {
    RetroRecord r{{0, 1}, {1, 0}, {1, 1}};
    Assignment pi = harmless_completion(g, r);
    CHECK(pi.location == std::vector<int>{0, 1});
    CHECK(is_harmless(pi, r));
  }
  SUBCASE("everyone employed means nothing to optimize") {
    RetroRecord r{{1, 0}, {1, 1}, {1, 1}};
    CHECK(harmless_completion(g, r).location == std::vector<int>{1, 0});
  }
  SUBCASE("nobody employed degenerates to the plain optimum") {
    RetroRecord r{{0, 1}, {0, 0}, {1, 1}};
    CHECK(harmless_completion(g, r).location == solve_assignment(g, r.capacities).location);
  }
}

TEST_CASE("is_harmless checks pinning and feasibility") {
  RetroRecord r{{0, 1}, {1, 0}, {1, 1}};
  CHECK(is_harmless(Assignment{{0, 1}, 0.0}, r));
  CHECK(!is_harmless(Assignment{{1, 0}, 0.0}, r));  // employed refugee moved
  RetroRecord all_zero{{0, 1}, {0, 0}, {1, 1}};
  CHECK(is_harmless(Assignment{{1, 0}, 0.0}, all_zero));
  CHECK(!is_harmless(Assignment{{0, 0}, 0.0}, all_zero));  // capacity violated
}

TEST_CASE("modify_probabilities on the worked instance") {
  Matrix g = Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}});
  RetroRecord r{{0, 1}, {1, 0}, {1, 1}};
  const double eps = 1e-3;
  ModifiedPredictions mod = modify_probabilities(g, r, eps);

  DualSolution dual = solve_dual(g, r.capacities);
  REQUIRE(mod.mask.size() == 2);
  CHECK(mod.mask[0] == std::pair<int, int>{0, 0});
  CHECK(mod.mask[1] == std::pair<int, int>{1, 1});
  for (auto [i, l] : mod.mask) {
    CHECK(mod.values(i, l) ==
          doctest::Approx(dual.refugee_price[i] + dual.location_price[l] + eps));
  }
  // Off-mask entries untouched.
  CHECK(mod.values(0, 1) == g(0, 1));
  CHECK(mod.values(1, 0) == g(1, 0));

  Assignment induced = solve_assignment(mod.values, r.capacities);
  CHECK(induced.location == std::vector<int>{0, 1});
  // Certificate-independent: the completion's objective under the modified
  // weights is the original optimum plus one margin per refugee.
  CHECK(induced.objective == doctest::Approx(1.7 + 2 * eps).epsilon(1e-12));
}

TEST_CASE("modify_probabilities when the optimum is already harmless") {
  Matrix g = Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}});
  RetroRecord r{{0, 1}, {0, 0}, {1, 1}};  // nobody employed
  const double eps = 1e-4;
  ModifiedPredictions mod = modify_probabilities(g, r, eps);
  CHECK(l1_distance(mod.values, g) ==
        doctest::Approx(static_cast<double>(mod.mask.size()) * eps).epsilon(1e-9));
  CHECK(solve_assignment(mod.values, r.capacities).location ==
        solve_assignment(g, r.capacities).location);
}

TEST_CASE("modify_probabilities on all-zero predictions raises each mask entry to epsilon") {
  Matrix g(3, 2, 0.0);
  RetroRecord r{{0, 0, 1}, {1, 0, 0}, {2, 1}};
  ModifiedPredictions mod = modify_probabilities(g, r, 1e-6);
  for (auto [i, l] : mod.mask) CHECK(mod.values(i, l) == doctest::Approx(1e-6));
  CHECK(is_harmless(solve_assignment(mod.values, r.capacities), r));
}

TEST_CASE("modify_probabilities rejects a nonpositive margin") {
  Matrix g(1, 1, 0.5);
  RetroRecord r{{0}, {0}, {1}};
  CHECK_THROWS_AS(modify_probabilities(g, r, 0.0), std::invalid_argument);
}

TEST_CASE("harmlessness guarantee: every co-optimum under the modified weights is harmless") {
  Rng rng(101);
  const double eps = 1e-6;
  for (int trial = 0; trial < 300; ++trial) {
    int k = 2 + rng.next_index(2);
    int n = 2 + rng.next_index(3);
    RetroRecord record = testutil::random_balanced_record(rng, n, k);
    Matrix g(n, k);
    for (double& v : g.data()) v = rng.next_index(129) / 64.0;

    ModifiedPredictions mod = modify_probabilities(g, record, eps);
    CHECK(is_harmless(solve_assignment(mod.values, record.capacities), record));
    for (const auto& a : co_optimal_assignments(mod.values, record.capacities)) {
      CHECK(is_harmless(Assignment{a, 0.0}, record));
    }
  }
}

TEST_CASE("edit tightness: the margin-free L1 cost equals the optimality drop") {
  Rng rng(202);
  const double eps = 1e-6;
  for (int trial = 0; trial < 300; ++trial) {
    int k = 2 + rng.next_index(2);
    int n = 2 + rng.next_index(4);
    RetroRecord record = testutil::random_balanced_record(rng, n, k);
    Matrix g(n, k);
    for (double& v : g.data()) v = rng.next_double();

    ModifiedPredictions mod = modify_probabilities(g, record, eps);
    Assignment best = solve_assignment(g, record.capacities);
    Assignment completion = harmless_completion(g, record);
    double lhs = l1_distance(mod.values, g) - static_cast<double>(mod.mask.size()) * eps;
    double rhs = best.objective - completion.objective;
    CHECK(std::abs(lhs - rhs) <= 1e-9);

    // Sign structure: the edit only raises entries.
    for (auto [i, l] : mod.mask) CHECK(mod.values(i, l) >= g(i, l) - 1e-9);
  }
}

TEST_CASE("lower bound: no cheaper edit can make a harmless assignment optimal") {
  Rng rng(303);
  for (int trial = 0; trial < 40; ++trial) {
    int k = 2;
    int n = 2 + rng.next_index(2);
    RetroRecord record = testutil::random_balanced_record(rng, n, k);
    Matrix g(n, k);
    for (double& v : g.data()) v = rng.next_index(65) / 64.0;

    Assignment best = solve_assignment(g, record.capacities);
    Assignment completion = harmless_completion(g, record);

    double oracle = testutil::min_l1_edit_for_optimal(g, record.capacities, completion.location);
    double bound = best.objective - completion.objective;
    CHECK(oracle >= bound - 1e-9);
    // For the completion itself the bound is attained (the closed form is
    // minimal); the LP must agree to tolerance.
    CHECK(std::abs(oracle - bound) <= 1e-7);
  }
}

TEST_CASE("capacity surplus with a benign price profile still works") {
  // One refugee, two locations, both open: the dummy-refugee path.
  Matrix g = Matrix::from_rows({{1.0, 0.9}});
  RetroRecord r{{1}, {1}, {1, 1}};
  ModifiedPredictions mod = modify_probabilities(g, r, 1e-6);
  Assignment induced = solve_assignment(mod.values, r.capacities);
  CHECK(induced.location == std::vector<int>{1});
  CHECK(l1_distance(mod.values, g) == doctest::Approx(0.1 + 1e-6));
}

TEST_CASE("modified predictions serialize with their mask") {
  Matrix g = Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}});
  RetroRecord r{{0, 1}, {1, 0}, {1, 1}};
  ModifiedPredictions mod = modify_probabilities(g, r, 1e-6);
  std::string text = modified_to_json(mod);
  CHECK(text.find("\"epsilon\"") != std::string::npos);
  CHECK(text.find("\"mask\"") != std::string::npos);
  CHECK(text.find("\"gbreve\"") != std::string::npos);
}
