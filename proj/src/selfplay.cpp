#include "mz/selfplay.hpp"

#include <algorithm>
#include <cmath>

namespace mz {

Trajectory play_episode(GridEnv& env, const Model& model, const SearchConfig& cfg,
                        StartMode start_mode, Rng& rng, bool greedy, SearchDumpSink* dump) {
  SearchConfig run_cfg = cfg;
  if (greedy) {
    run_cfg.dirichlet_epsilon = 0.0;
    run_cfg.sample_actions = false;
  }
  SearchTree tree(model, run_cfg);

  Trajectory traj;
  Observation obs = env.reset(start_mode);
  traj.start_row = env.agent_row();
  traj.start_col = env.agent_col();

  int move = 0;
  while (!env.terminal()) {
    SearchResult result = tree.run(obs, rng);
    CompositeAction to_run = result.chosen;
    if (!run_cfg.execute_options && to_run.length() > 1)
      to_run = CompositeAction({to_run.actions[0]});
    StepResult sr = env.step(to_run);
    CompositeAction executed(std::vector<int>(to_run.actions.begin(),
                                              to_run.actions.begin() + sr.steps_executed));

    DecisionRecord rec;
    rec.observation = std::move(obs);
    rec.pi = result.root_policy;
    rec.executed = executed;
    rec.predicted = run_cfg.execute_options ? result.root_predicted_option
                                            : std::vector<int>{result.root_policy_argmax};
    rec.policy_argmax = result.root_policy_argmax;
    rec.suggested = result.suggested;
    rec.rewards = sr.rewards;
    double u = 0.0;
    for (size_t j = 0; j < sr.rewards.size(); ++j)
      u += std::pow(run_cfg.discount, static_cast<double>(j)) * sr.rewards[j];
    rec.decision_reward = u;
    rec.root_value = result.root_value;
    rec.tree = {result.tree.option_edge_expanded, result.tree.simulations_with_option,
                result.tree.simulations, result.tree.max_depth};
    for (double r : sr.rewards) traj.total_return += r;
    traj.total_primitive_length += sr.steps_executed;
    traj.records.push_back(std::move(rec));

    if (dump && *dump) (*dump)(move, tree, result, executed);
    obs = std::move(sr.observation);
    ++move;
  }
  traj.reached_goal =
      env.agent_row() == env.goal_row() && env.agent_col() == env.goal_col();
  return traj;
}

NStepReturn compute_n_step_return(const Trajectory& traj, int i, int n, double discount) {
  if (i < 0 || i >= static_cast<int>(traj.records.size()))
    throw RuntimeFault("n-step return at an out-of-range decision");
  NStepReturn out;
  double z = 0.0;
  int offset = 0;
  int j = i;
  const int count = static_cast<int>(traj.records.size());
  while (offset < n) {
    if (j < count) {
      z += std::pow(discount, offset) * traj.records[j].decision_reward;
      offset += traj.records[j].executed.length();
      ++j;
    } else {
      offset += 1;  // absorbing length-1 no-op past terminal, U = 0
    }
  }
  out.decisions_consumed = j - i;
  out.bootstrap_offset = offset;
  out.bootstrap_value = j < count ? traj.records[j].root_value : 0.0;
  out.z = z + std::pow(discount, offset) * out.bootstrap_value;
  return out;
}

ReplayBuffer::ReplayBuffer(int capacity_games, int n_step, double discount, double alpha,
                           double beta)
    : capacity_games_(capacity_games),
      n_step_(n_step),
      discount_(discount),
      alpha_(alpha),
      beta_(beta) {
  if (capacity_games < 1) throw ConfigError("replay capacity must be at least one game");
}

void ReplayBuffer::push(Trajectory traj) {
  if (traj.records.empty()) throw RuntimeFault("pushing an empty trajectory");
  auto t = std::make_shared<Trajectory>(std::move(traj));
  t->priorities.resize(t->records.size());
  for (size_t i = 0; i < t->records.size(); ++i) {
    NStepReturn nr = compute_n_step_return(*t, static_cast<int>(i), n_step_, discount_);
    t->priorities[i] = std::abs(nr.z - t->records[i].root_value) + 1e-6;
  }
  std::lock_guard<std::mutex> lock(mu_);
  games_.push_back(std::move(t));
  while (static_cast<int>(games_.size()) > capacity_games_) games_.pop_front();
}

std::vector<ReplayBuffer::SampleRef> ReplayBuffer::sample(int batch_size, Rng& rng) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (games_.empty()) throw RuntimeFault("sampling from an empty replay buffer");

  struct Slot {
    const std::shared_ptr<Trajectory>* traj;
    int decision;
  };
  std::vector<Slot> slots;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& g : games_)
    for (size_t i = 0; i < g->records.size(); ++i) {
      slots.push_back({&g, static_cast<int>(i)});
      total += std::pow(g->priorities[i], alpha_);
      cumulative.push_back(total);
    }
  if (total <= 0.0) throw RuntimeFault("replay priorities sum to zero");

  const double records = static_cast<double>(slots.size());
  std::uniform_real_distribution<double> unif(0.0, total);
  std::vector<SampleRef> out;
  out.reserve(batch_size);
  double max_weight = 0.0;
  for (int b = 0; b < batch_size; ++b) {
    double r = unif(rng);
    size_t idx =
        std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
    if (idx >= slots.size()) idx = slots.size() - 1;
    double mass = cumulative[idx] - (idx ? cumulative[idx - 1] : 0.0);
    SampleRef ref;
    ref.traj = *slots[idx].traj;
    ref.decision = slots[idx].decision;
    ref.probability = mass / total;
    ref.weight = std::pow(1.0 / (records * ref.probability), beta_);
    max_weight = std::max(max_weight, ref.weight);
    out.push_back(std::move(ref));
  }
  for (auto& ref : out) ref.weight /= max_weight;
  return out;
}

int ReplayBuffer::num_games() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<int>(games_.size());
}

size_t ReplayBuffer::num_records() const {
  std::lock_guard<std::mutex> lock(mu_);
  size_t n = 0;
  for (const auto& g : games_) n += g->records.size();
  return n;
}

std::shared_ptr<const Trajectory> ReplayBuffer::game(int i) const {
  std::lock_guard<std::mutex> lock(mu_);
  return games_.at(i);
}

}  // namespace mz
