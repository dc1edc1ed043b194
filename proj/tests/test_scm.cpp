#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "resmatch/scm.hpp"
#include "resmatch/serialize.hpp"
#include "testutil.hpp"

using namespace resmatch;

namespace {

Pool make_random_pool(Rng& rng, int n, int k) {
  Pool pool;
  pool.true_prob = Matrix(n, k);
  pool.outcome = Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < k; ++l) {
      double p = rng.next_double();
      pool.true_prob(i, l) = p;
      pool.outcome(i, l) = rng.bernoulli(p) ? 1.0 : 0.0;
    }
  }
  pool.capacities.assign(k, 0);
  for (int i = 0; i < n; ++i) ++pool.capacities[rng.next_index(k)];
  return pool;
}

Episode worked_episode(Capacities caps) {
  // Two refugees, defaults [0, 1], realized [1, 0].
  Pool pool;
  pool.true_prob = Matrix::from_rows({{0.1, 0.9}, {0.8, 0.2}});
  pool.outcome = Matrix::from_rows({{1.0, 0.0}, {1.0, 0.0}});
  pool.capacities = std::move(caps);
  Episode e;
  e.default_location = {0, 1};
  e.realized = {1, 0};
  e.noise = 0.0;
  e.pool = std::move(pool);
  return e;
}

}  // namespace

TEST_CASE("default_policy without noise reproduces the optimum") {
  Rng pool_rng(5);
  Pool pool = make_random_pool(pool_rng, 12, 3);
  Rng rng(1);
  Assignment a = default_policy(pool, 0.0, rng);
  CHECK(a.location == solve_assignment(pool.true_prob, pool.capacities).location);
}

TEST_CASE("default_policy at full noise permutes without changing the slot multiset") {
  Rng pool_rng(6);
  Pool pool = make_random_pool(pool_rng, 20, 4);
  Assignment base = solve_assignment(pool.true_prob, pool.capacities);
  Rng rng(2);
  Assignment shuffled = default_policy(pool, 1.0, rng);

  std::multiset<int> before(base.location.begin(), base.location.end());
  std::multiset<int> after(shuffled.location.begin(), shuffled.location.end());
  CHECK(before == after);
  CHECK(is_feasible(shuffled.location, pool.true_prob, pool.capacities));
}

TEST_CASE("default_policy shuffles at most the selected count") {
  Rng pool_rng(7);
  Pool pool = make_random_pool(pool_rng, 100, 5);
  Assignment base = solve_assignment(pool.true_prob, pool.capacities);
  Rng rng(3);
  Assignment noisy = default_policy(pool, 0.25, rng);
  int moved = 0;
  for (size_t i = 0; i < base.location.size(); ++i) moved += noisy.location[i] != base.location[i];
  CHECK(moved <= 25);  // floor(0.25 * 100) selected, permutation may fix points
  CHECK(moved > 0);
}

TEST_CASE("make_episode realizes outcomes along the default placements") {
  Rng pool_rng(8);
  Pool pool = make_random_pool(pool_rng, 15, 3);
  Episode e = make_episode(pool, 0.5, 99);
  for (int i = 0; i < e.pool.size(); ++i) {
    CHECK(e.realized[i] == static_cast<int>(e.pool.outcome(i, e.default_location[i])));
  }
  SUBCASE("same seed, same episode") {
    Episode f = make_episode(pool, 0.5, 99);
    CHECK(f.default_location == e.default_location);
    CHECK(f.realized == e.realized);
  }
}

TEST_CASE("biased classifier scales by one plus/minus beta") {
  Pool pool;
  pool.true_prob = Matrix(3, 4, 0.5);
  pool.outcome = Matrix(3, 4, 0.0);
  pool.capacities = {1, 1, 1, 1};

  Rng rng(4);
  BiasedClassifier classifier(4, 0.6, rng);
  CHECK(classifier.overestimated().size() == 2);
  Matrix g = classifier.predictions(pool);
  std::vector<char> over(4, 0);
  for (int l : classifier.overestimated()) over[l] = 1;
  for (int i = 0; i < 3; ++i) {
    for (int l = 0; l < 4; ++l) {
      CHECK(g(i, l) == doctest::Approx(over[l] ? 0.8 : 0.2));
    }
  }

  SUBCASE("zero bias is the identity") {
    Rng rng2(4);
    BiasedClassifier plain(4, 0.0, rng2);
    Matrix same = plain.predictions(pool);
    CHECK(same.data() == pool.true_prob.data());
  }
  SUBCASE("odd location counts are rejected") {
    Rng rng3(4);
    CHECK_THROWS_AS(BiasedClassifier(5, 0.6, rng3), std::invalid_argument);
  }
  SUBCASE("the split is a property of the classifier, not the pool") {
    Rng pool_rng(9);
    Pool other;
    other.true_prob = Matrix(7, 4, 0.25);
    other.outcome = Matrix(7, 4, 0.0);
    other.capacities = {2, 2, 2, 1};
    Matrix g2 = classifier.predictions(other);
    for (int l = 0; l < 4; ++l) {
      CHECK(g2(0, l) == doctest::Approx(over[l] ? 0.4 : 0.1));
    }
  }
}

TEST_CASE("expected counterfactual utility: kept refugees contribute outcomes, moved ones probabilities") {
  SUBCASE("keeping every default returns the realized total") {
    Episode e = worked_episode({1, 1});
    CHECK(expected_cf_utility(Assignment{{0, 1}, 0.0}, e) == doctest::Approx(1.0));
  }
  SUBCASE("infeasible assignments are rejected") {
    Episode e = worked_episode({1, 1});
    CHECK_THROWS_AS(expected_cf_utility(Assignment{{0, 0}, 0.0}, e), std::invalid_argument);
  }
  SUBCASE("moving the second refugee onto the first location") {
    Episode e = worked_episode({2, 1});
    CHECK(expected_cf_utility(Assignment{{0, 0}, 0.0}, e) == doctest::Approx(1.8));
  }
}

TEST_CASE("realized utility is a table lookup") {
  Episode e = worked_episode({2, 1});
  CHECK(realized_utility(Assignment{{0, 1}, 0.0}, e.pool) == doctest::Approx(1.0));
  Pool ones;
  ones.true_prob = Matrix(4, 2, 0.5);
  ones.outcome = Matrix(4, 2, 1.0);
  ones.capacities = {2, 2};
  CHECK(realized_utility(Assignment{{0, 0, 1, 1}, 0.0}, ones) == doctest::Approx(4.0));
}

TEST_CASE("pool harm compares against the realized default total") {
  SUBCASE("the default itself never harms") {
    Episode e = worked_episode({1, 1});
    CHECK(!is_pool_harmed(Assignment{{0, 1}, 0.0}, e));
  }
  SUBCASE("dropping expected employment below the realized total harms") {
    Episode e = worked_episode({2, 1});
    e.realized = {1, 1};
    e.pool.outcome(1, 1) = 1.0;
    CHECK(is_pool_harmed(Assignment{{0, 0}, 0.0}, e));  // 1.8 < 2
  }
  SUBCASE("harmless assignments never harm") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      Pool pool = make_random_pool(rng, 6, 3);
      Episode e = make_episode(pool, 0.5, rng.next_u64());
      RetroRecord record = e.record();
      Assignment pi = harmless_completion(pool.true_prob, record);
      CHECK(!is_pool_harmed(pi, e));
    }
  }
}

TEST_CASE("counterfactual consistency: evaluating the defaults reproduces the record") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Pool pool = make_random_pool(rng, 10, 3);
    Episode e = make_episode(pool, rng.next_double(), rng.next_u64());
    Assignment defaults{e.default_location, 0.0};
    CHECK(expected_cf_utility(defaults, e) == realized_utility(defaults, e.pool));
  }
}

TEST_CASE("Monte-Carlo check agrees with the closed form") {
  SUBCASE("no moved refugees: zero variance") {
    Episode e = worked_episode({1, 1});
    Rng rng(13);
    McEstimate est = mc_counterfactual_check(Assignment{{0, 1}, 0.0}, e, 1000, rng);
    CHECK(est.mean == doctest::Approx(1.0));
    CHECK(est.stderror == doctest::Approx(0.0));
  }
  SUBCASE("worked example at 1e5 samples") {
    Episode e = worked_episode({2, 1});
    Rng rng(14);
    McEstimate est = mc_counterfactual_check(Assignment{{0, 0}, 0.0}, e, 100000, rng);
    CHECK(std::abs(est.mean - 1.8) <= 4.0 * est.stderror);
  }
  SUBCASE("all-zero probabilities leave only the kept outcomes") {
    Episode e = worked_episode({2, 1});
    e.pool.true_prob = Matrix(2, 2, 0.0);
    Rng rng(15);
    McEstimate est = mc_counterfactual_check(Assignment{{0, 0}, 0.0}, e, 500, rng);
    CHECK(est.mean == doctest::Approx(1.0));  // kept refugee 0 contributes its outcome
  }
  SUBCASE("random episodes stay within four standard errors") {
    Rng rng(16);
    int ok = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
      Pool pool = make_random_pool(rng, 8, 3);
      Episode e = make_episode(pool, 0.5, rng.next_u64());
      Assignment a = solve_assignment(pool.true_prob, pool.capacities);
      double closed = expected_cf_utility(a, e);
      McEstimate est = mc_counterfactual_check(a, e, 10000, rng);
      double slack = est.stderror > 0 ? 4.0 * est.stderror : 1e-12;
      ok += std::abs(est.mean - closed) <= slack;
    }
    CHECK(ok >= trials - 1);
  }
}

TEST_CASE("episodes round-trip through the dataset line format") {
  Rng rng(17);
  Pool pool = make_random_pool(rng, 5, 3);
  pool.profiles.assign(5, RefugeeProfile{1, 2, 0, 1});
  Episode e = make_episode(pool, 0.375, 12345);
  Episode back = episode_from_jsonl(episode_to_jsonl(e));
  CHECK(back.default_location == e.default_location);
  CHECK(back.realized == e.realized);
  CHECK(back.noise == e.noise);
  CHECK(back.seed == e.seed);
  CHECK(back.pool.true_prob.data() == e.pool.true_prob.data());
  CHECK(back.pool.outcome.data() == e.pool.outcome.data());
  CHECK(back.pool.capacities == e.pool.capacities);
  CHECK(back.pool.profiles[3].region == 2);
}
