#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mz/options.hpp"
#include "mz/rng.hpp"

using namespace mz;

namespace {

// Distribution whose selected-action mass at depth i is products[i] (the rest
// on stop), i.e. what a perfectly calibrated network reports for a state
// whose argmax chain has those joint probabilities.
OptionDistribution ladder(const std::vector<double>& products, int num_actions, int action = 0) {
  OptionDistribution d;
  d.num_actions = num_actions;
  for (double p : products) {
    std::vector<double> row(num_actions + 1, 0.0);
    row[action] = p;
    row[num_actions] = 1.0 - p;
    d.rows.push_back(row);
  }
  return d;
}

OptionDistribution random_distribution(int num_actions, int L, Rng& rng) {
  OptionDistribution d;
  d.num_actions = num_actions;
  for (int i = 0; i < L; ++i) d.rows.push_back(dirichlet(0.5, num_actions + 1, rng));
  return d;
}

}  // namespace

TEST_CASE("row one is synthesized from the policy head") {
  PredictionOutput pred;
  pred.policy = {0.1, 0.7, 0.15, 0.05};
  pred.option_heads = {{0.2, 0.2, 0.2, 0.2, 0.2}};  // L = 2
  OptionDistribution d = OptionDistribution::from_prediction(pred);
  REQUIRE(d.max_length() == 2);
  CHECK(d.num_actions == 4);
  CHECK(d.stop_index() == 4);
  CHECK(d.row(1)[1] == doctest::Approx(0.7));
  CHECK(d.row(1)[4] == doctest::Approx(0.3));
  double sum = 0.0;
  for (double x : d.row(1)) sum += x;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(d.row(2) == pred.option_heads[0]);
}

TEST_CASE("cumulative products of 0.8 cut the option at length three") {
  OptionDistribution d = ladder({0.8, 0.64, 0.512, 0.4096}, 4, 2);
  std::vector<int> opt = derive_dominant_option(d);
  CHECK(opt == std::vector<int>{2, 2, 2});
  CHECK(cumulative_probability(d, opt) == doctest::Approx(0.512));
}

TEST_CASE("a weaker second step cuts the option at length two") {
  OptionDistribution d = ladder({0.9, 0.54, 0.486}, 2, 1);
  CHECK(derive_dominant_option(d) == std::vector<int>{1, 1});
  CHECK(cumulative_probability(d, {1, 1}) == doctest::Approx(0.54));
}

TEST_CASE("uniform policy yields an empty option") {
  PredictionOutput pred;
  pred.policy = {0.25, 0.25, 0.25, 0.25};
  pred.option_heads = {std::vector<double>(5, 0.2), std::vector<double>(5, 0.2)};
  OptionDistribution d = OptionDistribution::from_prediction(pred);
  CHECK(derive_dominant_option(d).empty());
}

TEST_CASE("deterministic rows run the option to full length") {
  OptionDistribution d = ladder({1.0, 1.0, 1.0}, 4, 3);
  CHECK(derive_dominant_option(d) == std::vector<int>{3, 3, 3});
  CHECK(cumulative_probability(d, {3, 3, 3}) == doctest::Approx(1.0));
}

TEST_CASE("ties prefer real actions over stop and lower action ids") {
  // Exact 50/50 against stop keeps the action.
  OptionDistribution even = ladder({0.5, 0.5}, 4, 1);
  CHECK(derive_dominant_option(even) == std::vector<int>{1, 1});

  // Two actions tied at the top pick the lower id.
  OptionDistribution d;
  d.num_actions = 3;
  d.rows = {{0.4, 0.4, 0.2, 0.0}, {0.3, 0.3, 0.3, 0.1}};
  std::vector<int> opt = derive_dominant_option(d);
  REQUIRE_FALSE(opt.empty());
  CHECK(opt[0] == 0);
}

TEST_CASE("cumulative probability rejects lengths outside two to L") {
  OptionDistribution d = ladder({0.9, 0.8, 0.7}, 4, 0);
  CHECK_THROWS_AS(cumulative_probability(d, {0}), RuntimeFault);
  CHECK_THROWS_AS(cumulative_probability(d, std::vector<int>{}), RuntimeFault);
  CHECK_THROWS_AS(cumulative_probability(d, {0, 0, 0, 0}), RuntimeFault);
  CHECK(cumulative_probability(d, {0, 0}) == doctest::Approx(0.8));
}

TEST_CASE("oracle walks the argmax chain while the product stays dominant") {
  PolicyTree left;  // 0.8/0.2 at every branch, first action dominant
  left[{}] = {0.8, 0.2};
  left[{0}] = {0.8, 0.2};
  left[{0, 0}] = {0.8, 0.2};
  left[{0, 0, 0}] = {0.8, 0.2};
  OracleResult res = oracle_dominant_option(left, 4);
  CHECK(res.option == std::vector<int>{0, 0, 0});
  REQUIRE(res.products.size() == 3);
  CHECK(res.products[0] == doctest::Approx(0.8));
  CHECK(res.products[1] == doctest::Approx(0.64));
  CHECK(res.products[2] == doctest::Approx(0.512));

  PolicyTree right;  // second step weaker: stops after two actions
  right[{}] = {0.9, 0.1};
  right[{0}] = {0.6, 0.4};
  right[{0, 0}] = {0.9, 0.1};
  OracleResult res2 = oracle_dominant_option(right, 3);
  CHECK(res2.option == std::vector<int>{0, 0});
  CHECK(res2.products.back() == doctest::Approx(0.54));

  PolicyTree shallow;
  shallow[{}] = {0.6, 0.4};
  OracleResult res3 = oracle_dominant_option(shallow, 1);
  CHECK(res3.option == std::vector<int>{0});
  CHECK(res3.products == std::vector<double>{0.6});
}

TEST_CASE("oracle requires every visited path entry") {
  PolicyTree tree;
  tree[{}] = {0.9, 0.1};
  CHECK_THROWS_AS(oracle_dominant_option(tree, 2), RuntimeFault);
}

TEST_CASE("derivation matches the oracle on argmax ladders hitting the threshold exactly") {
  // Per-depth argmax probabilities sweep 0.05..1.00, so running products hit
  // 0.5 exactly and exercise the boundary rule at every depth.
  for (int A = 2; A <= 4; ++A) {
    for (int L = 1; L <= 3; ++L) {
      std::vector<int> idx(L, 0);
      while (true) {
        // Every prefix at depth d carries the depth-d row, so the walk is
        // total no matter which action the row's argmax lands on.
        PolicyTree tree;
        std::vector<std::vector<int>> frontier = {{}};
        for (int d = 0; d < L; ++d) {
          double top = 0.05 * (idx[d] + 1);
          std::vector<double> row(A, (1.0 - top) / (A - 1));
          row[0] = top;
          std::vector<std::vector<int>> next;
          for (const std::vector<int>& prefix : frontier) {
            tree[prefix] = row;
            for (int a = 0; a < A; ++a) {
              std::vector<int> p = prefix;
              p.push_back(a);
              next.push_back(std::move(p));
            }
          }
          frontier = std::move(next);
        }
        OracleResult oracle = oracle_dominant_option(tree, L);
        OptionDistribution dist = distribution_from_tree(tree, L, A);
        CHECK(derive_dominant_option(dist) == oracle.option);

        int d = L - 1;
        for (; d >= 0; --d) {
          if (++idx[d] < 20) break;
          idx[d] = 0;
        }
        if (d < 0) break;
      }
    }
  }
}

TEST_CASE("derivation matches the oracle on random trees") {
  Rng rng(20260818);
  for (int trial = 0; trial < 10000; ++trial) {
    int A = 2 + static_cast<int>(rng() % 3);
    int L = 1 + static_cast<int>(rng() % 4);
    PolicyTree tree = random_policy_tree(A, L, rng);
    OracleResult oracle = oracle_dominant_option(tree, L);
    OptionDistribution dist = distribution_from_tree(tree, L, A);
    std::vector<int> derived = derive_dominant_option(dist);
    REQUIRE(derived == oracle.option);
    if (derived.size() >= 2) {
      REQUIRE(cumulative_probability(dist, derived) ==
              doctest::Approx(oracle.products.back()).epsilon(1e-12));
    }
  }
}

TEST_CASE("derived options satisfy the row-argmax invariant") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    int A = 2 + static_cast<int>(rng() % 3);
    int L = 1 + static_cast<int>(rng() % 4);
    OptionDistribution d = random_distribution(A, L, rng);
    std::vector<int> opt = derive_dominant_option(d);
    REQUIRE(static_cast<int>(opt.size()) <= L);
    for (size_t i = 0; i < opt.size(); ++i) {
      const std::vector<double>& row = d.row(static_cast<int>(i) + 1);
      for (double x : row) CHECK(row[opt[i]] >= x);
    }
    if (static_cast<int>(opt.size()) < L) {
      const std::vector<double>& next = d.row(static_cast<int>(opt.size()) + 1);
      for (int a = 0; a < A; ++a) CHECK(next[A] >= next[a] - 1e-15);
    }
  }
}

TEST_CASE("option targets copy matched decisions and stop at the first mismatch") {
  // Three decisions: a matched length-2 option, a mismatched single action,
  // then a matched length-3 option.
  std::vector<DecisionView> ds(3);
  ds[0].executed = {0, 1};
  ds[0].predicted = {0, 1};
  ds[1].executed = {2};
  ds[1].predicted = {3};  // search overrode the prediction
  ds[2].executed = {1, 2, 3};
  ds[2].predicted = {1, 2, 3};

  CHECK(build_option_targets(ds, 0, 3, 4) == std::vector<int>{0, 1, 4});
  CHECK(build_option_targets(ds, 1, 3, 4) == std::vector<int>{4, 4, 4});
  CHECK(build_option_targets(ds, 2, 3, 4) == std::vector<int>{1, 2, 3});
}

TEST_CASE("a mismatch on the first decision yields an all-stop target") {
  std::vector<DecisionView> ds(1);
  ds[0].executed = {2};
  ds[0].predicted = {1};
  CHECK(build_option_targets(ds, 0, 3, 4) == std::vector<int>{4, 4, 4});
}

TEST_CASE("empty predictions fall back to the policy argmax") {
  std::vector<DecisionView> ds(4);
  for (int i = 0; i < 4; ++i) {
    ds[i].executed = {i};
    ds[i].predicted = {};
    ds[i].policy_argmax = i;  // argmax agrees with what ran
  }
  CHECK(build_option_targets(ds, 0, 3, 4) == std::vector<int>{0, 1, 2});
  CHECK(build_option_targets(ds, 1, 3, 4) == std::vector<int>{1, 2, 3});

  ds[1].policy_argmax = 0;  // now the fallback disagrees at the second step
  CHECK(build_option_targets(ds, 0, 3, 4) == std::vector<int>{0, 4, 4});
}

TEST_CASE("episode end fills the remaining slots with stop") {
  std::vector<DecisionView> ds(1);
  ds[0].executed = {3, 3};
  ds[0].predicted = {3, 3};
  CHECK(build_option_targets(ds, 0, 4, 4) == std::vector<int>{3, 3, 4, 4});
}

TEST_CASE("matched actions are capped at L slots") {
  std::vector<DecisionView> ds(2);
  ds[0].executed = {0, 1};
  ds[0].predicted = {0, 1};
  ds[1].executed = {2, 3};
  ds[1].predicted = {2, 3};
  CHECK(build_option_targets(ds, 0, 3, 4) == std::vector<int>{0, 1, 2});
}

TEST_CASE("stop slots always form a suffix") {
  Rng rng(99);
  for (int trial = 0; trial < 3000; ++trial) {
    int A = 2 + static_cast<int>(rng() % 3);
    int L = 1 + static_cast<int>(rng() % 4);
    int count = 1 + static_cast<int>(rng() % 6);
    std::vector<DecisionView> ds(count);
    for (DecisionView& d : ds) {
      int len = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < len; ++i) d.executed.push_back(static_cast<int>(rng() % A));
      if (rng() % 2) d.predicted = d.executed;        // forced match
      else if (rng() % 2) d.predicted = {static_cast<int>(rng() % A)};
      d.policy_argmax = static_cast<int>(rng() % A);
    }
    for (int start = 0; start < count; ++start) {
      std::vector<int> phi = build_option_targets(ds, start, L, A);
      REQUIRE(static_cast<int>(phi.size()) == L);
      bool stopped = false;
      for (int slot : phi) {
        REQUIRE(slot >= 0);
        REQUIRE(slot <= A);
        if (stopped) CHECK(slot == A);
        if (slot == A) stopped = true;
      }
    }
  }
}
