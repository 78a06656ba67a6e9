// macrozero: latent-dynamics planning over macro actions on grid mazes.
// Commands: train, eval, analyze, oracle-check.
// Exit codes: 0 ok, 2 configuration error, 3 runtime error.

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "mz/analysis.hpp"
#include "mz/config.hpp"
#include "mz/logio.hpp"
#include "mz/options.hpp"
#include "mz/training.hpp"

namespace fs = std::filesystem;
using namespace mz;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_interrupt(int) { g_stop = 1; }

std::string join(const std::vector<int>& v, const char* sep = ";") {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

// ---------------------------------------------------------------- train ----

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& resume) {
  RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);
  cfg.validate();

  GridEnv env = GridEnv::from_file(cfg.map_path(), cfg.decision_cap());
  const uint64_t seed = cfg.seed();
  ModelConfig mc = cfg.model_config(env);

  Model model = resume.empty() ? Model(mc, derive_seed(seed, "model")) : Model::load(resume);
  if (!(model.config() == mc))
    throw ConfigError("checkpoint " + resume + " does not match the configured model shape");

  const std::string out_dir = cfg.output_dir();
  fs::create_directories(out_dir);
  {
    std::ofstream echo(fs::path(out_dir) / "config.txt");
    echo << cfg.render();
  }

  Trainer trainer(env, std::move(model), cfg.train_config(), cfg.search_config(),
                  cfg.start_mode(), seed, out_dir, cfg.dump_search());

  std::signal(SIGINT, handle_interrupt);
  printf("training to %s (%d iterations, map %s, seed %llu)\n", out_dir.c_str(),
         trainer.target_iterations(), cfg.map_path().c_str(),
         static_cast<unsigned long long>(seed));
  while (trainer.iteration() < trainer.target_iterations() && !g_stop) {
    IterationMetrics m = trainer.run_iteration();
    printf(
        "iter %3d  loss %.4f (pi %.4f v %.4f r %.4f opt %.4f)  return %.1f  "
        "decisions %.1f  len %.2f  opt%% %.1f  goal %.0f%%  %.1fs\n",
        m.iteration, m.mean_loss.total, m.mean_loss.policy, m.mean_loss.value, m.mean_loss.reward,
        m.mean_loss.option, m.mean_return, m.mean_decisions, m.mean_executed_length,
        m.option_usage_pct, 100.0 * m.goal_rate, m.seconds);
    fflush(stdout);
  }
  if (g_stop) {
    trainer.write_checkpoint();
    fprintf(stderr, "interrupted: checkpoint and logs flushed at iteration %d\n",
            trainer.iteration());
  }
  return 0;
}

// ----------------------------------------------------------------- eval ----

// Cells entered by the composite, walked over the observation's wall plane
// (wall bumps stay in place, matching the env).
std::vector<std::pair<int, int>> composite_path(const Observation& obs,
                                                const std::vector<int>& actions) {
  static const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  int r = -1, c = -1;
  for (int y = 0; y < obs.height && r < 0; ++y)
    for (int x = 0; x < obs.width; ++x)
      if (obs.at(1, y, x)) {
        r = y;
        c = x;
        break;
      }
  std::vector<std::pair<int, int>> cells;
  for (int a : actions) {
    int nr = r + dr[a], nc = c + dc[a];
    bool blocked = nr < 0 || nr >= obs.height || nc < 0 || nc >= obs.width || obs.at(0, nr, nc);
    if (!blocked) {
      r = nr;
      c = nc;
    }
    cells.push_back({r, c});
  }
  return cells;
}

std::string frame_with_overlay(const Observation& obs, const std::vector<int>& actions) {
  std::string out;
  for (int y = 0; y < obs.height; ++y) {
    for (int x = 0; x < obs.width; ++x) {
      char ch = '.';
      if (obs.at(0, y, x)) ch = '#';
      if (obs.at(2, y, x)) ch = 'G';
      if (obs.at(1, y, x)) ch = 'A';
      out += ch;
    }
    out += '\n';
  }
  if (actions.size() >= 2) {
    auto cells = composite_path(obs, actions);
    for (size_t i = 0; i < cells.size(); ++i) {
      auto [r, c] = cells[i];
      size_t pos = static_cast<size_t>(r) * (obs.width + 1) + c;
      if (out[pos] == '.') out[pos] = static_cast<char>('1' + i % 9);
    }
  }
  return out;
}

int cmd_eval(const std::string& checkpoint, const std::string& map_path, int games,
             const std::string& start, int simulations, double discount, double c_puct,
             uint64_t seed, int decision_cap, bool render) {
  Model model = Model::load(checkpoint);
  GridEnv env = GridEnv::from_file(map_path, decision_cap);
  env.seed(derive_seed(seed, "env"));

  Observation probe = env.observe();
  const ModelConfig& mc = model.config();
  if (probe.channels != mc.obs_channels || probe.height != mc.obs_height ||
      probe.width != mc.obs_width)
    throw ConfigError("map shape does not match the checkpoint's observation shape");

  StartMode mode = StartMode::kFixed;
  if (start == "random") {
    mode = StartMode::kRandom;
  } else if (start != "fixed") {
    int r = 0, c = 0;
    if (sscanf(start.c_str(), "%d,%d", &r, &c) != 2)
      throw ConfigError("--start expects fixed, random, or row,col");
    env.pin_start(r, c);
  }

  SearchConfig scfg;
  scfg.simulations = simulations;
  scfg.discount = discount;
  scfg.c_puct = c_puct;
  scfg.execute_options = mc.max_option_length > 1;

  double return_sum = 0, decision_sum = 0, length_sum = 0;
  int solved = 0;
  for (int g = 0; g < games; ++g) {
    Rng rng(derive_seed(seed, "eval", static_cast<uint64_t>(g)));
    Trajectory traj = play_episode(env, model, scfg, mode, rng, /*greedy=*/true);
    printf("episode %d: start=(%d,%d) decisions=%zu primitive_steps=%d return=%.1f goal=%s\n",
           g + 1, traj.start_row, traj.start_col, traj.records.size(),
           traj.total_primitive_length, traj.total_return, traj.reached_goal ? "yes" : "no");
    for (size_t i = 0; i < traj.records.size(); ++i) {
      const DecisionRecord& rec = traj.records[i];
      if (rec.executed.length() >= 2)
        printf("  move %zu: option [%s] value %.2f\n", i + 1, join(rec.executed.actions).c_str(),
               rec.root_value);
      else
        printf("  move %zu: action %d value %.2f\n", i + 1, rec.executed.actions[0],
               rec.root_value);
      if (render) fputs(frame_with_overlay(rec.observation, rec.executed.actions).c_str(), stdout);
    }
    return_sum += traj.total_return;
    decision_sum += static_cast<double>(traj.records.size());
    length_sum += traj.total_primitive_length;
    solved += traj.reached_goal ? 1 : 0;
  }
  printf("mean: return %.2f decisions %.2f primitive_steps %.2f solved %d/%d\n",
         return_sum / games, decision_sum / games, length_sum / games, solved, games);
  return 0;
}

// -------------------------------------------------------------- analyze ----

int cmd_analyze(const std::vector<std::string>& logs, const std::vector<std::string>& dumps,
                bool usage, bool tree, bool accuracy, int topk, int max_option_length, bool csv,
                const std::string& out_dir) {
  if (!usage && !tree && !accuracy && topk == 0)
    throw ConfigError("nothing to do: pass --usage, --tree, --accuracy, or --topk N");
  if ((usage || accuracy || topk > 0) && logs.empty())
    throw ConfigError("--usage/--accuracy/--topk need --logs");
  if (tree && dumps.empty()) throw ConfigError("--tree needs --dumps");

  std::string unreadable;
  for (const auto& p : logs)
    if (!fs::exists(p)) unreadable += (unreadable.empty() ? "" : ", ") + p;
  for (const auto& p : dumps)
    if (!fs::exists(p)) unreadable += (unreadable.empty() ? "" : ", ") + p;
  if (!unreadable.empty()) throw ConfigError("unreadable inputs: " + unreadable);

  std::vector<LoggedGame> games;
  if (!logs.empty()) games = read_trajectory_logs(logs);

  int L = max_option_length;
  if (L <= 0) {
    L = 1;
    for (const auto& g : games)
      for (const auto& d : g.decisions) {
        L = std::max(L, static_cast<int>(d.executed.size()));
        L = std::max(L, static_cast<int>(d.suggested.size()));
        L = std::max(L, static_cast<int>(d.predicted.size()));
      }
  }

  auto emit = [&](const std::string& name, const std::string& text) {
    if (out_dir.empty()) {
      printf("== %s ==\n%s", name.c_str(), text.c_str());
      return;
    }
    fs::create_directories(out_dir);
    fs::path file = fs::path(out_dir) / (name + (csv ? ".csv" : ".txt"));
    std::ofstream out(file);
    out << text;
    printf("wrote %s\n", file.string().c_str());
  };

  if (usage) {
    UsageReport r = usage_stats(games, L);
    emit("usage", csv ? usage_csv(r, L) : format_usage(r, L));
  }
  if (tree) {
    TreeReport r = tree_stats(read_search_dumps(dumps));
    emit("tree", csv ? tree_csv(r) : format_tree(r));
  }
  if (accuracy) {
    AccuracyReport r = prediction_accuracy(games, L);
    emit("accuracy", csv ? accuracy_csv(r) : format_accuracy(r));
  }
  if (topk > 0) {
    TopOptionsReport r = top_k_options(games, topk);
    emit("top_options", csv ? top_options_csv(r) : format_top_options(r));
  }
  return 0;
}

// --------------------------------------------------------- oracle-check ----

// Path-shaped tree: at each depth the argmax action gets mass p[k] and the
// rest is spread over the other actions.
PolicyTree ladder_tree(const std::vector<double>& p, int num_actions, int argmax_id) {
  // Every prefix at depth d carries the depth-d row: when p[d] is small the
  // row's argmax is not argmax_id, and the walk must stay defined wherever
  // it goes.
  PolicyTree tree;
  std::vector<std::vector<int>> frontier = {{}};
  for (double pk : p) {
    std::vector<double> row(num_actions, (1.0 - pk) / (num_actions - 1));
    row[argmax_id] = pk;
    std::vector<std::vector<int>> next;
    for (const std::vector<int>& prefix : frontier) {
      tree[prefix] = row;
      for (int a = 0; a < num_actions; ++a) {
        std::vector<int> q = prefix;
        q.push_back(a);
        next.push_back(std::move(q));
      }
    }
    frontier = std::move(next);
  }
  return tree;
}

int cmd_oracle_check(int trials, uint64_t seed) {
  long checked = 0, failed = 0;
  auto check_tree = [&](const PolicyTree& tree, int L, int A) {
    checked += 1;
    OracleResult want = oracle_dominant_option(tree, L);
    std::vector<int> got = derive_dominant_option(distribution_from_tree(tree, L, A));
    if (got != want.option) {
      failed += 1;
      if (failed <= 5) {
        printf("mismatch: |A|=%d L=%d derived=[%s] oracle=[%s]\n", A, L, join(got).c_str(),
               join(want.option).c_str());
        for (const auto& [prefix, row] : tree) {
          printf("  state [%s]:", join(prefix).c_str());
          for (double v : row) printf(" %.4f", v);
          printf("\n");
        }
      }
    }
  };

  // Grid sweep of argmax-probability ladders; products hit 0.5 exactly.
  for (int A = 2; A <= 4; ++A)
    for (int L = 1; L <= 3; ++L) {
      std::vector<int> idx(L, 1);
      while (true) {
        std::vector<double> p(L);
        for (int k = 0; k < L; ++k) p[k] = idx[k] * 0.05;
        check_tree(ladder_tree(p, A, A - 1), L, A);
        int k = L - 1;
        while (k >= 0 && idx[k] == 20) idx[k--] = 1;
        if (k < 0) break;
        idx[k] += 1;
      }
    }

  Rng rng(derive_seed(seed, "oracle"));
  for (int t = 0; t < trials; ++t) {
    int A = 2 + static_cast<int>(rng() % 3);
    int L = 1 + static_cast<int>(rng() % 4);
    check_tree(random_policy_tree(A, L, rng), L, A);
  }

  printf("oracle equivalence: %ld trees checked, %ld mismatches\n", checked, failed);
  if (failed) throw RuntimeFault("dominant-option derivation disagrees with the oracle");
  printf("PASS\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-dynamics planning over macro actions on grid mazes"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "run self-play training per a config file");
  std::string train_config, train_resume;
  std::vector<std::string> train_sets;
  train->add_option("-c,--config", train_config, "config file (key = value lines)");
  train->add_option("--set", train_sets, "override, key=value (repeatable)");
  train->add_option("--resume", train_resume, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "greedy episodes from a checkpoint");
  std::string eval_ckpt, eval_map, eval_start = "fixed";
  int eval_games = 1, eval_sims = 50, eval_cap = 200;
  double eval_discount = 0.997, eval_cpuct = 1.25;
  uint64_t eval_seed = 1;
  bool eval_render = false;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--map", eval_map, "map file")->required();
  eval->add_option("--games", eval_games, "episodes to play");
  eval->add_option("--start", eval_start, "fixed, random, or row,col");
  eval->add_option("--simulations", eval_sims, "search simulations per move");
  eval->add_option("--discount", eval_discount, "discount factor");
  eval->add_option("--c-puct", eval_cpuct, "exploration constant");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--decision-cap", eval_cap, "max decisions per episode");
  eval->add_flag("--render", eval_render, "print a frame per decision with the option path");

  auto* analyze = app.add_subcommand("analyze", "reports over trajectory logs and search dumps");
  std::vector<std::string> an_logs, an_dumps;
  bool an_usage = false, an_tree = false, an_acc = false, an_csv = false;
  int an_topk = 0, an_L = 0;
  std::string an_out;
  analyze->add_option("--logs", an_logs, "trajectory log files");
  analyze->add_option("--dumps", an_dumps, "search dump files");
  analyze->add_flag("--usage", an_usage, "decision-level option usage");
  analyze->add_flag("--tree", an_tree, "search-tree option statistics");
  analyze->add_flag("--accuracy", an_acc, "suggested-vs-executed step accuracy");
  analyze->add_option("--topk", an_topk, "list the K most used option types");
  analyze->add_option("--max-option-length", an_L, "L for report tables (default: infer)");
  analyze->add_flag("--csv", an_csv, "emit CSV instead of text");
  analyze->add_option("--out", an_out, "write reports to this directory");

  auto* oracle = app.add_subcommand("oracle-check", "dominant-option derivation vs brute force");
  int oc_trials = 10000;
  uint64_t oc_seed = 1;
  oracle->add_option("--trials", oc_trials, "random trees to check");
  oracle->add_option("--seed", oc_seed, "rng seed");

  try {
    app.parse(argc, argv);
    if (*train) return cmd_train(train_config, train_sets, train_resume);
    if (*eval)
      return cmd_eval(eval_ckpt, eval_map, eval_games, eval_start, eval_sims, eval_discount,
                      eval_cpuct, eval_seed, eval_cap, eval_render);
    if (*analyze)
      return cmd_analyze(an_logs, an_dumps, an_usage, an_tree, an_acc, an_topk, an_L, an_csv,
                         an_out);
    if (*oracle) return cmd_oracle_check(oc_trials, oc_seed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
  return 0;
}
