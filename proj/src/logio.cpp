#include "mz/logio.hpp"

#include <fstream>
#include <ostream>

#include "json.hpp"

namespace mz {

using nlohmann::json;

void append_trajectory_log(std::ostream& out, const Trajectory& traj, int game_index) {
  for (size_t m = 0; m < traj.records.size(); ++m) {
    const DecisionRecord& r = traj.records[m];
    json line = {
        {"game", game_index},
        {"move", static_cast<int>(m)},
        {"pi", r.pi},
        {"executed", r.executed.actions},
        {"predicted", r.predicted},
        {"suggested", r.suggested.actions},
        {"argmax_p", r.policy_argmax},
        {"rewards", r.rewards},
        {"u", r.decision_reward},
        {"root_value", r.root_value},
        {"tree",
         {{"opt_edge", r.tree.option_edge_expanded},
          {"sims_opt", r.tree.simulations_with_option},
          {"sims", r.tree.simulations},
          {"max_depth", r.tree.max_depth}}},
    };
    if (m == 0) line["start"] = {traj.start_row, traj.start_col};
    if (m + 1 == traj.records.size()) line["goal"] = traj.reached_goal;
    out << line.dump() << "\n";
  }
}

namespace {

LoggedDecision parse_decision(const json& j) {
  LoggedDecision d;
  d.move = j.at("move").get<int>();
  d.pi = j.at("pi").get<std::vector<double>>();
  d.executed = j.at("executed").get<std::vector<int>>();
  d.predicted = j.at("predicted").get<std::vector<int>>();
  d.suggested = j.at("suggested").get<std::vector<int>>();
  d.policy_argmax = j.at("argmax_p").get<int>();
  d.rewards = j.at("rewards").get<std::vector<double>>();
  d.decision_reward = j.at("u").get<double>();
  d.root_value = j.at("root_value").get<double>();
  const json& t = j.at("tree");
  d.tree.option_edge_expanded = t.at("opt_edge").get<bool>();
  d.tree.simulations_with_option = t.at("sims_opt").get<int>();
  d.tree.simulations = t.at("sims").get<int>();
  d.tree.max_depth = t.at("max_depth").get<int>();
  return d;
}

}  // namespace

std::vector<LoggedGame> read_trajectory_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read trajectory log: " + path);
  std::vector<LoggedGame> games;
  int last_game_id = -1;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad log line: " + e.what());
    }
    int game_id = j.at("game").get<int>();
    if (games.empty() || game_id != last_game_id) {
      games.emplace_back();
      games.back().game = static_cast<int>(games.size()) - 1;
      last_game_id = game_id;
    }
    LoggedGame& g = games.back();
    if (j.contains("start")) {
      auto s = j.at("start").get<std::vector<int>>();
      g.start_row = s.at(0);
      g.start_col = s.at(1);
    }
    if (j.contains("goal")) g.reached_goal = j.at("goal").get<bool>();
    g.decisions.push_back(parse_decision(j));
  }
  return games;
}

std::vector<LoggedGame> read_trajectory_logs(const std::vector<std::string>& paths) {
  std::vector<LoggedGame> all;
  for (const auto& p : paths) {
    auto games = read_trajectory_log(p);
    for (auto& g : games) {
      g.game = static_cast<int>(all.size());
      all.push_back(std::move(g));
    }
  }
  return all;
}

std::vector<Trajectory> reload_trajectories(const GridEnv& map_proto,
                                            const std::vector<LoggedGame>& games) {
  std::vector<Trajectory> out;
  out.reserve(games.size());
  for (const auto& g : games) {
    if (g.start_row < 0) throw ConfigError("logged game has no start cell; cannot replay");
    GridEnv env = map_proto;
    env.place_agent(g.start_row, g.start_col);
    Trajectory traj;
    traj.start_row = g.start_row;
    traj.start_col = g.start_col;
    for (const auto& d : g.decisions) {
      DecisionRecord rec;
      rec.observation = env.observe();
      rec.pi = d.pi;
      rec.policy_argmax = d.policy_argmax;
      rec.predicted = d.predicted;
      rec.suggested = CompositeAction(d.suggested);
      rec.root_value = d.root_value;
      rec.tree = d.tree;
      StepResult sr = env.step(CompositeAction(d.executed));
      if (sr.steps_executed != static_cast<int>(d.executed.size()))
        throw ConfigError("logged decision does not replay cleanly on this map");
      rec.executed = CompositeAction(d.executed);
      rec.rewards = sr.rewards;
      rec.decision_reward = d.decision_reward;
      for (double r : sr.rewards) traj.total_return += r;
      traj.total_primitive_length += sr.steps_executed;
      traj.records.push_back(std::move(rec));
    }
    traj.reached_goal = g.reached_goal;
    out.push_back(std::move(traj));
  }
  return out;
}

void append_search_dump(std::ostream& out, int game, int move, const SearchTree& tree,
                        const SearchResult& result, const CompositeAction& executed) {
  json sims = json::array();
  for (const SimRecord& s : tree.simulations())
    sims.push_back({{"d", s.leaf_depth}, {"o", s.used_option}});

  json nodes = json::array();
  // Nodes carry their primitive depth and edge statistics; paths are implied
  // by child indices, which is enough for audits without re-walking.
  for (const Node& n : tree.nodes()) {
    if (!n.evaluated) continue;
    json edges = json::array();
    for (size_t a = 0; a < n.prim.size(); ++a) {
      const Edge& e = n.prim[a];
      edges.push_back({{"a", static_cast<int>(a)}, {"n", e.n}, {"q", e.q}, {"p", e.p}, {"r", e.r}});
    }
    json node = {{"depth", n.depth}, {"cum", n.cum_reward}, {"edges", edges}};
    if (n.has_option) {
      node["option"] = {{"acts", n.option_actions},
                        {"n", n.option.n},
                        {"q", n.option.q},
                        {"p", n.option.p},
                        {"r", n.option.r}};
    }
    nodes.push_back(std::move(node));
  }

  json line = {{"game", game},
               {"move", move},
               {"suggested", result.suggested.actions},
               {"executed", executed.actions},
               {"sims", sims},
               {"nodes", nodes}};
  out << line.dump() << "\n";
}

std::vector<SearchDumpRecord> read_search_dumps(const std::vector<std::string>& paths) {
  std::vector<SearchDumpRecord> out;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read search dump: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": bad dump line: " + e.what());
      }
      SearchDumpRecord rec;
      rec.game = j.at("game").get<int>();
      rec.move = j.at("move").get<int>();
      rec.suggested = j.at("suggested").get<std::vector<int>>();
      rec.executed = j.at("executed").get<std::vector<int>>();
      for (const auto& s : j.at("sims"))
        rec.sims.push_back({s.at("d").get<int>(), s.at("o").get<bool>()});
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace mz
