#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "mz/grid_env.hpp"
#include "mz/model.hpp"
#include "mz/search.hpp"

namespace mz {

struct TreeSummary {
  bool option_edge_expanded = false;
  int simulations_with_option = 0;
  int simulations = 0;
  int max_depth = 0;
};

struct DecisionRecord {
  Observation observation;        // state the decision was made in
  std::vector<double> pi;         // search policy over |A|
  CompositeAction executed;       // what the env actually ran (may be a truncated option)
  std::vector<int> predicted;     // option predicted before search; empty if none
  int policy_argmax = 0;          // argmax of the raw policy head at the root
  CompositeAction suggested;      // search's argmax composite
  std::vector<double> rewards;    // per executed primitive step
  double decision_reward = 0.0;   // discounted within-decision sum
  double root_value = 0.0;
  TreeSummary tree;
};

struct Trajectory {
  std::vector<DecisionRecord> records;
  bool reached_goal = false;
  int total_primitive_length = 0;
  int start_row = -1, start_col = -1;
  double total_return = 0.0;
  std::vector<double> priorities;  // one per record, filled when pushed to replay
};

struct NStepReturn {
  double z = 0.0;
  int decisions_consumed = 0;   // real records consumed (absorbing padding excluded)
  int bootstrap_offset = 0;     // primitive steps to the bootstrap state, in [n, n+L-1]
  double bootstrap_value = 0.0; // 0 past terminal
};

// z = U_i + g^t1*U_{i+1} + ... + g^tT * v at the first decision boundary at or
// past n primitive steps. Decisions past the episode end count as absorbing
// length-1 no-ops with U = 0 and v = 0.
NStepReturn compute_n_step_return(const Trajectory& traj, int i, int n, double discount);

// Called after every decision while the search tree is still alive, so dumps
// can include executed/sampled composites next to the tree internals.
using SearchDumpSink =
    std::function<void(int move, const SearchTree& tree, const SearchResult& result,
                       const CompositeAction& executed)>;

// Plays one episode to termination. When execute_options is false only the
// first primitive of each chosen composite is executed (search still plans
// with options). greedy forces argmax play and disables root noise.
Trajectory play_episode(GridEnv& env, const Model& model, const SearchConfig& cfg,
                        StartMode start_mode, Rng& rng, bool greedy = false,
                        SearchDumpSink* dump = nullptr);

// FIFO-by-game replay with proportional prioritized sampling.
// priority = |z - stored root value| + 1e-6, probability ~ priority^alpha,
// importance weight (1/(records*prob))^beta normalized by the batch max.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity_games, int n_step, double discount, double alpha, double beta);

  void push(Trajectory traj);

  struct SampleRef {
    std::shared_ptr<const Trajectory> traj;
    int decision = 0;
    double weight = 1.0;
    double probability = 0.0;
  };
  std::vector<SampleRef> sample(int batch_size, Rng& rng) const;

  int num_games() const;
  size_t num_records() const;
  std::shared_ptr<const Trajectory> game(int i) const;

 private:
  mutable std::mutex mu_;
  std::deque<std::shared_ptr<Trajectory>> games_;
  int capacity_games_;
  int n_step_;
  double discount_;
  double alpha_;
  double beta_;
};

}  // namespace mz
