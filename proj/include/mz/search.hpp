#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mz/model.hpp"
#include "mz/options.hpp"
#include "mz/rng.hpp"
#include "mz/types.hpp"

namespace mz {

struct SearchConfig {
  int simulations = 50;
  double c_puct = 1.25;
  double discount = 0.997;
  double dirichlet_alpha = 0.3;
  double dirichlet_epsilon = 0.0;  // 0 disables root noise (evaluation)
  double temperature = 1.0;
  bool sample_actions = true;      // false: argmax play
  bool execute_options = true;     // consumed by self-play; kept here so one block configures a run
};

struct TreeMetrics {
  bool option_edge_expanded = false;
  int simulations_with_option = 0;
  int simulations = 0;
  int max_depth = 0;
  std::vector<int> depth_of_each_simulation;
};

struct SearchResult {
  std::vector<double> root_policy;      // normalized root visit counts over |A|
  double root_value = 0.0;              // visit-weighted mean Q at the root
  CompositeAction chosen;               // sampled (or argmax) composite to execute
  CompositeAction suggested;            // argmax composite, independent of sampling
  std::vector<int> root_predicted_option;  // dominant option derived at the root, pre-noise
  int root_policy_argmax = 0;           // argmax of the raw root policy head
  TreeMetrics tree;
};

struct Edge {
  int n = 0;
  double q = 0.0;
  double p = 0.0;
  double r = 0.0;        // accumulated discounted reward along the edge
  bool r_set = false;    // set on first evaluation through it
  int child = -1;        // arena index, -1 until the child node exists
};

// Nodes are identified by their primitive action path from the root; an
// option edge is a shortcut to the node at the end of its action chain.
struct Node {
  bool evaluated = false;
  int depth = 0;               // primitive steps from the root
  double cum_reward = 0.0;     // discounted reward from the root, valid once evaluated
  std::vector<double> state;
  std::vector<Edge> prim;      // one per primitive action, zero-stat until evaluated
  bool has_option = false;
  Edge option;
  std::vector<int> option_actions;  // length >= 2 when has_option
  int eval_parent = -1;        // edge that produced the evaluation, for audits
  int eval_action = -1;
  bool eval_via_option = false;
};

struct PathStep {
  int node = 0;
  bool is_option = false;
  int action = 0;  // first action for option steps
};

// Mean returns live on the game's reward scale; the selection formulas need
// them in [0, 1]. The tree tracks the min/max of every mean Q written during
// backup and normalizes on read; identity until two distinct values exist.
struct ValueBounds {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void update(double q) {
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  double norm(double q) const { return hi > lo ? (q - lo) / (hi - lo) : q; }
};

// Stage one: PUCT over primitive edges. Unvisited edges borrow the mean Q of
// visited siblings (1 when none are visited); exact score ties resolve to the
// higher prior (fresh nodes reduce to argmax P), then to the lowest id.
int select_primitive_edge(const Node& node, const ValueBounds& bounds, double c_puct);

// Stage two: the option edge against the primitive-only remainder of its
// first action's edge (option visits are included in that edge, so the
// remainder has count N_a - N_o and the excluded mean). A zero-count side
// uses the virtual-loss default Q_a*N_a/(N_a+1). Ties stay primitive.
bool option_beats_primitive(const Node& node, int action, const ValueBounds& bounds,
                            double c_puct);

struct SimRecord {
  std::vector<PathStep> path;
  int leaf_depth = 0;
  bool used_option = false;
  double leaf_value = 0.0;
};

// Option-aware MCTS. Selection runs plain PUCT over primitive edges, then,
// when the picked primitive starts this node's option, a second PUCT choice
// between the option edge and the primitive-only remainder (option visits are
// included in primitive edge statistics). Expansion evaluates the leaf with
// one dynamics call over the whole inbound composite and grows the derived
// option's unevaluated chain. Backup uses root-relative rewards:
// G(k) = (r1l - r1k)/discount^k + discount^(l-k) * v.
class SearchTree {
 public:
  SearchTree(const Model& model, const SearchConfig& cfg);

  SearchResult run(const Observation& obs, Rng& rng);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<SimRecord>& simulations() const { return sims_; }
  const ValueBounds& bounds() const { return bounds_; }

  // Deterministic text dump of every expanded node and simulation path,
  // sorted by action path; used for golden traces and equivalence checks.
  std::string trace_string() const;

 private:
  int ensure_child(int node_idx, int action);
  // Runs dynamics over the inbound edge (or represent at the root), fills
  // priors, grows the derived option chain; returns the predicted value.
  double evaluate(int node_idx, int parent_idx, bool via_option, int action,
                  const Observation* obs);
  void add_root_noise(Rng& rng);
  void backup(const std::vector<PathStep>& path, int leaf_idx, double leaf_value);
  CompositeAction pick(bool argmax, Rng& rng) const;

  const Model& model_;
  SearchConfig cfg_;
  std::vector<Node> nodes_;
  std::vector<SimRecord> sims_;
  ValueBounds bounds_;
  std::vector<int> root_predicted_option_;
  int root_policy_argmax_ = 0;
};

}  // namespace mz
