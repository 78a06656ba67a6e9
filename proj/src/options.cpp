#include "mz/options.hpp"

#include <algorithm>

namespace mz {

namespace {

// Argmax over a row of |A|+1 entries. Real actions beat stop on exact ties;
// among real actions the lowest id wins.
int row_argmax(const std::vector<double>& row, int num_actions) {
  int best = 0;
  for (int a = 1; a < num_actions; ++a)
    if (row[a] > row[best]) best = a;
  if (row[num_actions] > row[best]) return num_actions;
  return best;
}

}  // namespace

OptionDistribution OptionDistribution::from_prediction(const PredictionOutput& pred) {
  OptionDistribution dist;
  dist.num_actions = static_cast<int>(pred.policy.size());
  int L = static_cast<int>(pred.option_heads.size()) + 1;
  dist.rows.reserve(L);

  // Row 1 stands in for the policy head: mass p(a*) on the argmax, the rest
  // on stop. Entries of other actions are never consulted.
  std::vector<double> row1(dist.num_actions + 1, 0.0);
  int best = 0;
  for (int a = 1; a < dist.num_actions; ++a)
    if (pred.policy[a] > pred.policy[best]) best = a;
  row1[best] = pred.policy[best];
  row1[dist.num_actions] = 1.0 - pred.policy[best];
  dist.rows.push_back(std::move(row1));

  for (const auto& head : pred.option_heads) dist.rows.push_back(head);
  return dist;
}

std::vector<int> derive_dominant_option(const OptionDistribution& dist) {
  std::vector<int> option;
  for (int depth = 1; depth <= dist.max_length(); ++depth) {
    int pick = row_argmax(dist.row(depth), dist.num_actions);
    if (pick == dist.stop_index()) break;
    option.push_back(pick);
  }
  return option;
}

double cumulative_probability(const OptionDistribution& dist, const std::vector<int>& option) {
  int len = static_cast<int>(option.size());
  if (len < 2 || len > dist.max_length())
    throw RuntimeFault("cumulative_probability needs an option of length 2..L");
  // The head at the option's final depth already carries the joint
  // probability of the whole prefix.
  return dist.row(len)[option[len - 1]];
}

OracleResult oracle_dominant_option(const PolicyTree& tree, int max_length) {
  OracleResult out;
  std::vector<int> prefix;
  double product = 1.0;
  for (int depth = 1; depth <= max_length; ++depth) {
    auto it = tree.find(prefix);
    if (it == tree.end())
      throw RuntimeFault("oracle tree is missing the entry at depth " + std::to_string(depth));
    const auto& policy = it->second;
    int best = 0;
    for (size_t a = 1; a < policy.size(); ++a)
      if (policy[a] > policy[best]) best = static_cast<int>(a);
    product *= policy[best];
    // Same tie rule as derive: an exact 50/50 against stopping keeps going.
    if (product < 0.5) break;
    prefix.push_back(best);
    out.products.push_back(product);
  }
  out.option = prefix;
  return out;
}

OptionDistribution distribution_from_tree(const PolicyTree& tree, int max_length, int num_actions) {
  OptionDistribution dist;
  dist.num_actions = num_actions;
  std::vector<int> prefix;
  double product = 1.0;
  bool walking = true;
  for (int depth = 1; depth <= max_length; ++depth) {
    std::vector<double> row(num_actions + 1, 0.0);
    auto it = walking ? tree.find(prefix) : tree.end();
    if (it == tree.end()) {
      row[num_actions] = 1.0;
      walking = false;
    } else {
      const auto& policy = it->second;
      int best = 0;
      for (int a = 1; a < num_actions; ++a)
        if (policy[a] > policy[best]) best = a;
      product *= policy[best];
      row[best] = product;
      row[num_actions] = 1.0 - product;
      prefix.push_back(best);
    }
    dist.rows.push_back(std::move(row));
  }
  return dist;
}

PolicyTree random_policy_tree(int num_actions, int depth, Rng& rng) {
  PolicyTree tree;
  std::vector<std::vector<int>> frontier = {{}};
  for (int d = 0; d < depth; ++d) {
    std::vector<std::vector<int>> next;
    for (auto& prefix : frontier) {
      tree[prefix] = dirichlet(0.35, num_actions, rng);
      for (int a = 0; a < num_actions; ++a) {
        auto child = prefix;
        child.push_back(a);
        next.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
  return tree;
}

std::vector<int> build_option_targets(const std::vector<DecisionView>& decisions, int start,
                                      int max_length, int num_actions) {
  std::vector<int> slots;
  slots.reserve(max_length);
  const int stop = num_actions;
  int i = start;
  while (static_cast<int>(slots.size()) < max_length) {
    if (i >= static_cast<int>(decisions.size())) break;  // episode end counts as a mismatch
    const DecisionView& d = decisions[i];
    std::vector<int> predicted = d.predicted;
    if (predicted.empty()) predicted = {d.policy_argmax};
    if (predicted != d.executed) break;
    for (int a : d.executed) {
      if (static_cast<int>(slots.size()) >= max_length) break;
      slots.push_back(a);
    }
    ++i;
  }
  while (static_cast<int>(slots.size()) < max_length) slots.push_back(stop);
  return slots;
}

}  // namespace mz
