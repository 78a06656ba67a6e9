#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mz/model.hpp"
#include "mz/search.hpp"
#include "mz/selfplay.hpp"

namespace mz {

struct TrainConfig {
  int iterations = 60;
  int steps_per_iteration = 150;
  int games_per_iteration = 24;
  int batch_size = 128;
  int unroll_steps = 5;   // K
  int n_step = 5;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;  // the L2 loss term already regularizes; keep 0 to avoid double-counting
  double l2_coeff = 1e-4;
  double per_alpha = 1.0;
  double per_beta = 0.4;
  int buffer_capacity_games = 256;
  int checkpoint_every = 1;
  int workers = 0;  // 0 = library default
};

// Builds the training sample anchored at decision t: K executed composites
// (padded past the end with a length-1 lowest-id action) and targets for
// positions k=0..K. Padded positions get z=0, U=0, all-stop option slots and
// a masked uniform policy.
UnrollSample assemble_unroll(const Trajectory& traj, int t, int K, int n, double discount,
                             int max_option_length, int num_actions, double weight);

struct IterationMetrics {
  int iteration = 0;
  int64_t version = 0;
  int games = 0;
  int steps = 0;
  LossBreakdown mean_loss;
  double mean_return = 0.0;
  double mean_decisions = 0.0;
  double mean_executed_length = 0.0;
  double option_usage_pct = 0.0;
  double goal_rate = 0.0;
  int buffer_games = 0;
  size_t buffer_records = 0;
  double seconds = 0.0;
};

// Orchestrates self-play -> replay -> optimizer iterations. Games within an
// iteration run against an immutable snapshot of the current parameters, in
// parallel when OpenMP is enabled; per-game RNG streams are derived from
// (seed, game index) so results do not depend on thread count.
class Trainer {
 public:
  Trainer(const GridEnv& env_proto, Model model, const TrainConfig& tcfg, const SearchConfig& scfg,
          StartMode start_mode, uint64_t seed, std::string out_dir, bool dump_search = false);
  ~Trainer();

  // Runs all remaining iterations; returns per-iteration metrics.
  std::vector<IterationMetrics> run();
  IterationMetrics run_iteration();

  const Model& model() const { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  int iteration() const { return iteration_; }
  int target_iterations() const { return tcfg_.iterations; }
  void write_checkpoint() const;

 private:
  std::vector<Trajectory> selfplay_games(int count);
  LossBreakdown train_steps(int count);

  GridEnv env_proto_;
  Model model_;
  TrainConfig tcfg_;
  SearchConfig scfg_;
  StartMode start_mode_;
  uint64_t seed_;
  std::string out_dir_;
  bool dump_search_;
  ReplayBuffer buffer_;
  Rng trainer_rng_;
  int iteration_ = 0;
  int64_t games_played_ = 0;
  struct Files;
  std::unique_ptr<Files> files_;
};

}  // namespace mz
