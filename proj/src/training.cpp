#include "mz/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mz/logio.hpp"
#include "mz/options.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mz {

namespace fs = std::filesystem;

namespace {

std::vector<DecisionView> decision_views(const Trajectory& traj) {
  std::vector<DecisionView> views;
  views.reserve(traj.records.size());
  for (const auto& r : traj.records)
    views.push_back({r.executed.actions, r.predicted, r.policy_argmax});
  return views;
}

std::string iter_name(const char* prefix, int iteration, const char* suffix) {
  char buf[64];
  snprintf(buf, sizeof(buf), "%s%04d%s", prefix, iteration, suffix);
  return buf;
}

}  // namespace

UnrollSample assemble_unroll(const Trajectory& traj, int t, int K, int n, double discount,
                             int max_option_length, int num_actions, double weight) {
  const int count = static_cast<int>(traj.records.size());
  if (t < 0 || t >= count) throw RuntimeFault("unroll anchored outside the trajectory");

  UnrollSample s;
  s.observation = traj.records[t].observation;
  s.weight = weight;
  const std::vector<DecisionView> views = decision_views(traj);
  const std::vector<double> uniform(num_actions, 1.0 / num_actions);
  const std::vector<int> all_stop(max_option_length, num_actions);

  for (int k = 0; k <= K; ++k) {
    const int idx = t + k;
    if (k >= 1) {
      if (idx - 1 < count) {
        s.actions.push_back(traj.records[idx - 1].executed);
        s.reward_targets.push_back(traj.records[idx - 1].decision_reward);
      } else {
        s.actions.push_back(CompositeAction({0}));  // length-1 lowest-id padding
        s.reward_targets.push_back(0.0);
      }
    }
    if (idx < count) {
      s.policy_targets.push_back(traj.records[idx].pi);
      s.policy_mask.push_back(1);
      s.value_targets.push_back(compute_n_step_return(traj, idx, n, discount).z);
      s.option_targets.push_back(build_option_targets(views, idx, max_option_length, num_actions));
    } else {
      s.policy_targets.push_back(uniform);
      s.policy_mask.push_back(0);
      s.value_targets.push_back(0.0);
      s.option_targets.push_back(all_stop);
    }
  }
  return s;
}

struct Trainer::Files {
  std::ofstream metrics;
};

Trainer::Trainer(const GridEnv& env_proto, Model model, const TrainConfig& tcfg,
                 const SearchConfig& scfg, StartMode start_mode, uint64_t seed,
                 std::string out_dir, bool dump_search)
    : env_proto_(env_proto),
      model_(std::move(model)),
      tcfg_(tcfg),
      scfg_(scfg),
      start_mode_(start_mode),
      seed_(seed),
      out_dir_(std::move(out_dir)),
      dump_search_(dump_search),
      buffer_(tcfg.buffer_capacity_games, tcfg.n_step, scfg.discount, tcfg.per_alpha,
              tcfg.per_beta),
      trainer_rng_(derive_seed(seed, "trainer")),
      files_(new Files) {
  fs::create_directories(fs::path(out_dir_) / "logs");
  fs::create_directories(fs::path(out_dir_) / "checkpoints");
  files_->metrics.open(fs::path(out_dir_) / "metrics.jsonl", std::ios::app);
  if (!files_->metrics) throw RuntimeFault("cannot open metrics stream in " + out_dir_);
#ifdef _OPENMP
  if (tcfg_.workers > 0) omp_set_num_threads(tcfg_.workers);
#endif
  // Resumed models continue iteration numbering from their version.
  if (tcfg_.steps_per_iteration > 0)
    iteration_ = static_cast<int>(model_.version() / tcfg_.steps_per_iteration);
}

Trainer::~Trainer() = default;

std::vector<Trajectory> Trainer::selfplay_games(int count) {
  std::vector<Trajectory> games(count);
  std::vector<std::string> dumps(count);
  const Model& snapshot = model_;  // trainer is the only writer; games see one version

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int g = 0; g < count; ++g) {
    const uint64_t game_seed =
        derive_seed(seed_, "selfplay", static_cast<uint64_t>(games_played_ + g));
    GridEnv env = env_proto_;
    env.seed(derive_seed(game_seed, "env"));
    Rng rng(game_seed);
    if (dump_search_) {
      std::ostringstream dump_out;
      const int game_index = static_cast<int>(games_played_ + g);
      SearchDumpSink sink = [&](int move, const SearchTree& tree, const SearchResult& result,
                                const CompositeAction& executed) {
        append_search_dump(dump_out, game_index, move, tree, result, executed);
      };
      games[g] = play_episode(env, snapshot, scfg_, start_mode_, rng, false, &sink);
      dumps[g] = dump_out.str();
    } else {
      games[g] = play_episode(env, snapshot, scfg_, start_mode_, rng, false, nullptr);
    }
  }

  if (dump_search_) {
    std::ofstream out(fs::path(out_dir_) / "logs" / iter_name("dump_", iteration_ + 1, ".jsonl"));
    for (const auto& d : dumps) out << d;
  }
  games_played_ += count;
  return games;
}

LossBreakdown Trainer::train_steps(int count) {
  LossBreakdown mean;
  const ModelConfig& mc = model_.config();
  for (int step = 0; step < count; ++step) {
    auto refs = buffer_.sample(tcfg_.batch_size, trainer_rng_);
    std::vector<UnrollSample> batch;
    batch.reserve(refs.size());
    for (const auto& ref : refs)
      batch.push_back(assemble_unroll(*ref.traj, ref.decision, tcfg_.unroll_steps, tcfg_.n_step,
                                      scfg_.discount, mc.max_option_length, mc.num_actions,
                                      ref.weight));
    LossResult res = model_.loss_and_gradient(batch, tcfg_.l2_coeff);
    model_.sgd_step(res.gradient, tcfg_.lr, tcfg_.momentum, tcfg_.weight_decay);
    mean.policy += res.loss.policy;
    mean.value += res.loss.value;
    mean.reward += res.loss.reward;
    mean.option += res.loss.option;
    mean.l2 += res.loss.l2;
  }
  if (count > 0) {
    mean.policy /= count;
    mean.value /= count;
    mean.reward /= count;
    mean.option /= count;
    mean.l2 /= count;
    mean.total = mean.policy + mean.value + mean.reward + mean.option + mean.l2;
  }
  return mean;
}

IterationMetrics Trainer::run_iteration() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Trajectory> games = selfplay_games(tcfg_.games_per_iteration);

  IterationMetrics m;
  m.iteration = iteration_ + 1;
  m.games = static_cast<int>(games.size());
  long decisions = 0, option_decisions = 0, primitive_steps = 0, goals = 0;
  for (const auto& g : games) {
    m.mean_return += g.total_return;
    decisions += static_cast<long>(g.records.size());
    primitive_steps += g.total_primitive_length;
    goals += g.reached_goal ? 1 : 0;
    for (const auto& r : g.records) option_decisions += r.executed.length() >= 2 ? 1 : 0;
  }
  m.mean_return /= games.size();
  m.mean_decisions = static_cast<double>(decisions) / games.size();
  m.mean_executed_length = decisions ? static_cast<double>(primitive_steps) / decisions : 0.0;
  m.option_usage_pct = decisions ? 100.0 * option_decisions / decisions : 0.0;
  m.goal_rate = static_cast<double>(goals) / games.size();

  {
    std::ofstream log(fs::path(out_dir_) / "logs" / iter_name("selfplay_", iteration_ + 1, ".jsonl"));
    if (!log) throw RuntimeFault("cannot write trajectory log in " + out_dir_);
    for (size_t g = 0; g < games.size(); ++g)
      append_trajectory_log(log, games[g], static_cast<int>(games_played_ - games.size() + g));
  }
  for (auto& g : games) buffer_.push(std::move(g));

  m.steps = tcfg_.steps_per_iteration;
  m.mean_loss = train_steps(tcfg_.steps_per_iteration);
  m.version = model_.version();
  m.buffer_games = buffer_.num_games();
  m.buffer_records = buffer_.num_records();
  iteration_ += 1;
  if (iteration_ % tcfg_.checkpoint_every == 0 || iteration_ == tcfg_.iterations)
    write_checkpoint();
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json line = {{"iteration", m.iteration},
                         {"version", m.version},
                         {"games", m.games},
                         {"steps", m.steps},
                         {"loss_total", m.mean_loss.total},
                         {"loss_policy", m.mean_loss.policy},
                         {"loss_value", m.mean_loss.value},
                         {"loss_reward", m.mean_loss.reward},
                         {"loss_option", m.mean_loss.option},
                         {"loss_l2", m.mean_loss.l2},
                         {"mean_return", m.mean_return},
                         {"mean_decisions", m.mean_decisions},
                         {"mean_executed_length", m.mean_executed_length},
                         {"option_usage_pct", m.option_usage_pct},
                         {"goal_rate", m.goal_rate},
                         {"buffer_games", m.buffer_games},
                         {"buffer_records", m.buffer_records},
                         {"seconds", m.seconds}};
  files_->metrics << line.dump() << "\n";
  files_->metrics.flush();
  return m;
}

std::vector<IterationMetrics> Trainer::run() {
  std::vector<IterationMetrics> all;
  while (iteration_ < tcfg_.iterations) all.push_back(run_iteration());
  return all;
}

void Trainer::write_checkpoint() const {
  const fs::path dir = fs::path(out_dir_) / "checkpoints";
  model_.save((dir / iter_name("iter_", iteration_, ".ckpt")).string());
  model_.save((dir / "latest.ckpt").string());
}

}  // namespace mz
