#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mz/search.hpp"
#include "mz/selfplay.hpp"

namespace mz {

// Trajectory logs are JSON lines, one object per decision, grouped by game.
// Observations are not stored; the first record of a game carries the start
// cell so a trajectory can be rebuilt by replaying executed actions through
// the deterministic env.

struct LoggedDecision {
  int move = 0;
  std::vector<double> pi;
  std::vector<int> executed;
  std::vector<int> predicted;
  std::vector<int> suggested;
  int policy_argmax = 0;
  std::vector<double> rewards;
  double decision_reward = 0.0;
  double root_value = 0.0;
  TreeSummary tree;
};

struct LoggedGame {
  int game = 0;
  int start_row = -1, start_col = -1;
  bool reached_goal = false;
  std::vector<LoggedDecision> decisions;
};

void append_trajectory_log(std::ostream& out, const Trajectory& traj, int game_index);
std::vector<LoggedGame> read_trajectory_log(const std::string& path);
std::vector<LoggedGame> read_trajectory_logs(const std::vector<std::string>& paths);

// Rebuilds full trajectories (with observations) from a log by replaying the
// executed actions on a fresh copy of the map.
std::vector<Trajectory> reload_trajectories(const GridEnv& map_proto,
                                            const std::vector<LoggedGame>& games);

// Per-move search dump: JSON lines carrying per-simulation depths/option
// flags and per-node edge statistics. Input to analysis tree_stats and to
// trace-level debugging.
struct DumpSimulation {
  int depth = 0;
  bool used_option = false;
};

struct SearchDumpRecord {
  int game = 0;
  int move = 0;
  std::vector<int> suggested;
  std::vector<int> executed;
  std::vector<DumpSimulation> sims;
};

void append_search_dump(std::ostream& out, int game, int move, const SearchTree& tree,
                        const SearchResult& result, const CompositeAction& executed);
std::vector<SearchDumpRecord> read_search_dumps(const std::vector<std::string>& paths);

}  // namespace mz
