#include <doctest.h>

#include <cmath>

#include "resmatch/matching.hpp"
#include "resmatch/rng.hpp"
#include "resmatch/serialize.hpp"
#include "testutil.hpp"

using namespace resmatch;

TEST_CASE("pad_to_balanced leaves an already balanced instance unchanged") {
  Matrix w = Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}});
  BalancedInstance b = pad_to_balanced(w, {1, 1});
  CHECK(b.weights.rows() == 2);
  CHECK(b.weights.cols() == 2);
  CHECK(b.original_rows == 2);
  CHECK(!b.has_dummy_location());
}

TEST_CASE("pad_to_balanced adds zero-weight dummy refugees when capacity exceeds demand") {
  Matrix w = Matrix::from_rows({{0.5}});
  BalancedInstance b = pad_to_balanced(w, {2});
  CHECK(b.weights.rows() == 2);
  CHECK(b.is_dummy_row(1));
  CHECK(!b.is_dummy_row(0));
  CHECK(b.weights(1, 0) == 0.0);
}

TEST_CASE("pad_to_balanced adds a dummy location when demand exceeds capacity") {
  Matrix w = Matrix::from_rows({{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}});
  BalancedInstance b = pad_to_balanced(w, {1, 1});
  CHECK(b.weights.cols() == 3);
  CHECK(b.has_dummy_location());
  CHECK(b.capacities[2] == 1);
  for (int i = 0; i < 3; ++i) CHECK(b.weights(i, 2) == 0.0);
}

TEST_CASE("padding never changes the optimum over the original entities") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = testutil::random_grid_instance(rng);
    BalancedInstance b = pad_to_balanced(inst.weights, inst.capacities);
    Assignment padded = solve_assignment(b.weights, b.capacities);
    Assignment original = solve_assignment(inst.weights, inst.capacities);
    // Restrict the padded solution to the original rows and strip the dummy
    // location; objectives must agree exactly.
    double restricted = 0.0;
    for (int i = 0; i < inst.weights.rows(); ++i) {
      int l = padded.location[i];
      if (l != kUnassigned && l < inst.weights.cols()) restricted += inst.weights(i, l);
    }
    CHECK(original.objective == doctest::Approx(restricted).epsilon(1e-12));
  }
}

TEST_CASE("solve_assignment on the worked two-refugee instances") {
  SUBCASE("diagonal optimum") {
    Assignment a = solve_assignment(Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}}), {1, 1});
    CHECK(a.location == std::vector<int>{0, 1});
    CHECK(a.objective == doctest::Approx(1.1));
  }
  SUBCASE("single option") {
    Assignment a = solve_assignment(Matrix::from_rows({{0.5}}), {1});
    CHECK(a.location == std::vector<int>{0});
    CHECK(a.objective == doctest::Approx(0.5));
  }
  SUBCASE("anti-diagonal optimum") {
    Assignment a = solve_assignment(Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}}), {1, 1});
    CHECK(a.location == std::vector<int>{1, 0});
    CHECK(a.objective == doctest::Approx(1.7));
  }
}

TEST_CASE("solve_assignment rejects shape mismatches") {
  CHECK_THROWS_AS(solve_assignment(Matrix(2, 3, 0.1), {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(solve_assignment(Matrix(2, 2, -0.1), {1, 1}), std::invalid_argument);
}

TEST_CASE("brute force oracle handles the spec corner shapes") {
  SUBCASE("argmax of one row") {
    Assignment a = brute_force_assignment(Matrix::from_rows({{0.2, 0.7, 0.4}}), {1, 1, 1});
    CHECK(a.location == std::vector<int>{1});
    CHECK(a.objective == doctest::Approx(0.7));
  }
  SUBCASE("one refugee must stay unassigned") {
    Matrix w = Matrix::from_rows({{0.9, 0.8}, {0.7, 0.6}, {0.5, 0.4}});
    Assignment a = brute_force_assignment(w, {1, 1});
    int unassigned = 0;
    for (int l : a.location) unassigned += (l == kUnassigned);
    CHECK(unassigned == 1);
    CHECK(a.objective == doctest::Approx(1.5));  // 0.9 + 0.6, refugee 2 left out
  }
  SUBCASE("oversized instances are refused") {
    CHECK_THROWS_AS(brute_force_assignment(Matrix(30, 5, 0.5), Capacities(5, 6)),
                    std::invalid_argument);
  }
}

TEST_CASE("oracle equivalence on random grid instances") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    auto inst = testutil::random_grid_instance(rng);
    Assignment fast = solve_assignment(inst.weights, inst.capacities);
    Assignment slow = brute_force_assignment(inst.weights, inst.capacities);
    CHECK(fast.objective == slow.objective);  // exact: grid weights
    CHECK(is_feasible(fast.location, inst.weights, inst.capacities));
  }
}

TEST_CASE("dual certificates on the worked instances") {
  SUBCASE("objective equals the primal optimum") {
    DualSolution d = solve_dual(Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}}), {1, 1});
    CHECK(d.objective == doctest::Approx(1.1).epsilon(1e-12));
  }
  SUBCASE("hand-checkable certificate") {
    Matrix w = Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}});
    DualSolution d = solve_dual(w, {1, 1});
    CHECK(d.objective == doctest::Approx(1.7).epsilon(1e-12));
    for (int i = 0; i < 2; ++i) {
      CHECK(d.refugee_price[i] >= -kCertTolerance);
      for (int l = 0; l < 2; ++l) {
        CHECK(d.refugee_price[i] + d.location_price[l] >= w(i, l) - kCertTolerance);
      }
    }
  }
  SUBCASE("all-zero weights price at zero") {
    DualSolution d = solve_dual(Matrix(3, 2, 0.0), {1, 2});
    CHECK(d.objective == 0.0);
    for (double u : d.refugee_price) CHECK(u == doctest::Approx(0.0));
    for (double v : d.location_price) CHECK(v == doctest::Approx(0.0));
  }
}

TEST_CASE("verify_duality accepts solver output and flags constructed violations") {
  Matrix w = Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}});
  Capacities c{1, 1};
  auto [a, d] = solve_primal_dual(w, c);

  DualityReport ok = verify_duality(a, d, w, c);
  CHECK(ok.pass());
  CHECK(ok.duality_gap <= 1e-12);

  SUBCASE("suboptimal assignment fails with the right gap") {
    Assignment bad;
    bad.location = {1, 0};  // objective 0.9 on the 1.1 instance
    bad.objective = assignment_objective(w, bad.location);
    DualityReport r = verify_duality(bad, d, w, c);
    CHECK(!r.pass());
    CHECK(r.duality_gap == doctest::Approx(0.2));
  }
  SUBCASE("perturbed location price becomes infeasible") {
    DualSolution bad = d;
    bad.location_price[0] -= 1.0;
    DualityReport r = verify_duality(a, bad, w, c);
    CHECK(r.max_dual_infeasibility > 0.0);
  }
}

TEST_CASE("strong duality and feasibility on random instances") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto inst = testutil::random_dense_instance(rng, 1 + rng.next_index(12), 1 + rng.next_index(5),
                                                3);
    auto [a, d] = solve_primal_dual(inst.weights, inst.capacities);
    DualityReport r = verify_duality(a, d, inst.weights, inst.capacities);
    CHECK(r.max_dual_infeasibility <= kCertTolerance);
    CHECK(r.max_slackness_violation <= kCertTolerance);
    CHECK(r.duality_gap <= kCertTolerance);
  }
}

TEST_CASE("scaling all weights by a power of two scales objectives and keeps the argmax") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = testutil::random_grid_instance(rng);
    Assignment base = solve_assignment(inst.weights, inst.capacities);
    for (double alpha : {0.5, 2.0, 8.0}) {
      Matrix scaled = inst.weights;
      for (double& v : scaled.data()) v *= alpha;
      Assignment s = solve_assignment(scaled, inst.capacities);
      CHECK(s.location == base.location);
      CHECK(s.objective == base.objective * alpha);  // exact for power-of-two alpha
    }
  }
}

TEST_CASE("degenerate shapes pass through") {
  SUBCASE("no refugees") {
    Assignment a = solve_assignment(Matrix(0, 2, 0.0), {1, 1});
    CHECK(a.location.empty());
    CHECK(a.objective == 0.0);
  }
  SUBCASE("zero total capacity") {
    Assignment a = solve_assignment(Matrix(2, 2, 0.7), {0, 0});
    CHECK(a.location == std::vector<int>{kUnassigned, kUnassigned});
    CHECK(a.objective == 0.0);
    DualSolution d = solve_dual(Matrix(2, 2, 0.7), {0, 0});
    CHECK(d.objective == doctest::Approx(0.0));
    DualityReport r = verify_duality(a, d, Matrix(2, 2, 0.7), {0, 0});
    CHECK(r.pass());
  }
  SUBCASE("zero-capacity column among real ones") {
    Matrix w = Matrix::from_rows({{0.9, 0.5}, {0.8, 0.4}});
    auto [a, d] = solve_primal_dual(w, {0, 2});
    CHECK(a.location == std::vector<int>{1, 1});
    CHECK(verify_duality(a, d, w, {0, 2}).pass());
  }
}

TEST_CASE("weights above one are legal") {
  Matrix w = Matrix::from_rows({{1.4, 0.2}, {1.1, 2.3}});
  auto [a, d] = solve_primal_dual(w, {1, 1});
  CHECK(a.objective == doctest::Approx(3.7));
  CHECK(verify_duality(a, d, w, {1, 1}).pass());
}

TEST_CASE("instance fixtures round-trip through JSON") {
  Rng rng(99);
  auto inst = testutil::random_grid_instance(rng);
  std::string text = instance_to_json(inst.weights, inst.capacities);
  Matrix w;
  Capacities c;
  instance_from_json(text, &w, &c);
  CHECK(w.same_shape(inst.weights));
  CHECK(w.data() == inst.weights.data());
  CHECK(c == inst.capacities);
}
