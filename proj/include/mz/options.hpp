#pragma once

#include <map>
#include <vector>

#include "mz/model.hpp"
#include "mz/rng.hpp"
#include "mz/types.hpp"

namespace mz {

// Per-depth distributions over |A|+1 entries (actions then stop). Row 1 is
// synthesized from the policy head: mass p(a*) on the policy argmax, the rest
// on stop; rows 2..L come from the option heads. Rows use 1-based depth via
// row(i).
struct OptionDistribution {
  int num_actions = 0;
  std::vector<std::vector<double>> rows;  // L rows x (|A|+1)

  int max_length() const { return static_cast<int>(rows.size()); }
  int stop_index() const { return num_actions; }
  const std::vector<double>& row(int depth) const { return rows[depth - 1]; }

  static OptionDistribution from_prediction(const PredictionOutput& pred);
};

// Greedy walk down the rows: at each depth take the argmax entry (ties: real
// action beats stop, lowest id among real actions) and cut at the first stop.
// Returns the action prefix, possibly empty, never longer than L.
std::vector<int> derive_dominant_option(const OptionDistribution& dist);

// Product of selected-action masses along the option prefix; this is the
// option's prior in search. Requires 2 <= option length <= L.
double cumulative_probability(const OptionDistribution& dist, const std::vector<int>& option);

// Ground-truth decision tree for the oracle: maps an action prefix to the
// policy distribution (over |A|) at the state reached by that prefix.
using PolicyTree = std::map<std::vector<int>, std::vector<double>>;

struct OracleResult {
  std::vector<int> option;        // maximal prefix whose running product stays >= 0.5
  std::vector<double> products;   // running product after each accepted step
};

// Brute-force reference: follow per-state argmax actions (lowest id on ties)
// and keep extending while the joint probability of the prefix stays >= 0.5,
// up to depth L. Missing tree entries end the walk.
OracleResult oracle_dominant_option(const PolicyTree& tree, int max_length);

// Converts an analytically consistent PolicyTree into the OptionDistribution
// a perfectly calibrated network would output, for derive-vs-oracle checks.
OptionDistribution distribution_from_tree(const PolicyTree& tree, int max_length, int num_actions);

// Random fully populated PolicyTree down to the given depth. Rows are
// Dirichlet draws; a small concentration makes confident rows common so both
// short and long dominant options occur.
PolicyTree random_policy_tree(int num_actions, int depth, Rng& rng);

// What each decision contributes to option-target construction.
struct DecisionView {
  std::vector<int> executed;   // primitive ids actually executed this decision
  std::vector<int> predicted;  // dominant option predicted before search (may be empty)
  int policy_argmax = 0;       // fallback when predicted is empty
};

// Builds the L option-target slots for the position starting at decision
// `start`: while the predicted option matches the executed composite exactly,
// executed actions fill slots; the first mismatch or episode end fills the
// rest with stop (id |A|). Stop slots always form a suffix.
std::vector<int> build_option_targets(const std::vector<DecisionView>& decisions, int start,
                                      int max_length, int num_actions);

}  // namespace mz
