#include "mz/grid_env.hpp"

#include <fstream>
#include <queue>
#include <sstream>

namespace mz {

namespace {
constexpr int kDr[4] = {-1, 1, 0, 0};  // up, down, left, right
constexpr int kDc[4] = {0, 0, -1, 1};
}  // namespace

GridEnv GridEnv::from_text(const std::string& text, int decision_cap) {
  if (decision_cap <= 0) throw ConfigError("decision cap must be positive");
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw ConfigError("map is empty");

  GridEnv env;
  env.height_ = static_cast<int>(rows.size());
  env.width_ = static_cast<int>(rows[0].size());
  env.decision_cap_ = decision_cap;
  env.walls_.assign(env.height_ * env.width_, 0);
  for (int r = 0; r < env.height_; ++r) {
    if (static_cast<int>(rows[r].size()) != env.width_)
      throw ConfigError("map rows have unequal widths");
    for (int c = 0; c < env.width_; ++c) {
      switch (rows[r][c]) {
        case '#': env.walls_[r * env.width_ + c] = 1; break;
        case '.': break;
        case 'S':
          if (env.start_row_ >= 0) throw ConfigError("map has more than one start cell");
          env.start_row_ = r;
          env.start_col_ = c;
          break;
        case 'G':
          if (env.goal_row_ >= 0) throw ConfigError("map has more than one goal cell");
          env.goal_row_ = r;
          env.goal_col_ = c;
          break;
        default:
          throw ConfigError(std::string("map has an unknown glyph '") + rows[r][c] + "'");
      }
    }
  }
  if (env.goal_row_ < 0) throw ConfigError("map has no goal cell");
  if (env.start_row_ < 0) throw ConfigError("map has no start cell");
  if (env.shortest_path_length(env.start_row_, env.start_col_) < 0)
    throw ConfigError("goal is unreachable from the start cell");
  env.agent_row_ = env.start_row_;
  env.agent_col_ = env.start_col_;
  return env;
}

GridEnv GridEnv::from_file(const std::string& path, int decision_cap) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read map file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), decision_cap);
}

Observation GridEnv::reset(StartMode mode) {
  decisions_ = 0;
  terminal_ = false;
  if (mode == StartMode::kFixed) {
    agent_row_ = pinned_row_ >= 0 ? pinned_row_ : start_row_;
    agent_col_ = pinned_row_ >= 0 ? pinned_col_ : start_col_;
  } else {
    std::vector<int> candidates;
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c) {
        if (is_wall(r, c) || (r == goal_row_ && c == goal_col_)) continue;
        if (shortest_path_length(r, c) < 0) continue;
        candidates.push_back(r * width_ + c);
      }
    if (candidates.empty()) throw ConfigError("map has no usable start cell");
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    int cell = candidates[pick(rng_)];
    agent_row_ = cell / width_;
    agent_col_ = cell % width_;
  }
  return observe();
}

void GridEnv::pin_start(int row, int col) {
  if (is_wall(row, col)) throw ConfigError("start override is a wall or out of bounds");
  if (row == goal_row_ && col == goal_col_) throw ConfigError("start override is the goal");
  if (shortest_path_length(row, col) < 0)
    throw ConfigError("start override cannot reach the goal");
  pinned_row_ = row;
  pinned_col_ = col;
}

void GridEnv::place_agent(int row, int col) {
  if (is_wall(row, col)) throw ConfigError("cannot place the agent inside a wall");
  agent_row_ = row;
  agent_col_ = col;
  decisions_ = 0;
  terminal_ = false;
}

StepResult GridEnv::step(const CompositeAction& action) {
  if (terminal_) throw RuntimeFault("step on a terminal env");
  if (action.empty()) throw RuntimeFault("step with an empty composite action");

  StepResult out;
  decisions_ += 1;
  for (int i = 0; i < action.length(); ++i) {
    int a = action.actions[i];
    if (a < 0 || a >= 4) throw RuntimeFault("invalid action id " + std::to_string(a));
    int nr = agent_row_ + kDr[a];
    int nc = agent_col_ + kDc[a];
    if (!is_wall(nr, nc)) {  // walls and borders are legal no-ops
      agent_row_ = nr;
      agent_col_ = nc;
    }
    double reward = (i == 0) ? kDecisionCost : 0.0;
    out.steps_executed += 1;
    if (agent_row_ == goal_row_ && agent_col_ == goal_col_) {
      reward += kGoalReward;
      out.rewards.push_back(reward);
      terminal_ = true;
      break;
    }
    out.rewards.push_back(reward);
  }
  if (!terminal_ && decisions_ >= decision_cap_) terminal_ = true;
  out.terminal = terminal_;
  out.observation = observe();
  return out;
}

Observation GridEnv::observe() const {
  Observation obs;
  obs.channels = 3;
  obs.height = height_;
  obs.width = width_;
  obs.planes.assign(3 * height_ * width_, 0);
  for (int i = 0; i < height_ * width_; ++i) obs.planes[i] = walls_[i];
  obs.planes[height_ * width_ + agent_row_ * width_ + agent_col_] = 1;
  obs.planes[2 * height_ * width_ + goal_row_ * width_ + goal_col_] = 1;
  return obs;
}

// The agent's cell renders 'S' when it sits on the start, so a fresh render
// parses back to the same map; elsewhere it renders 'A'.
std::string GridEnv::render_ascii() const {
  std::string out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      char ch = is_wall(r, c) ? '#' : '.';
      if (r == goal_row_ && c == goal_col_) ch = 'G';
      if (r == start_row_ && c == start_col_) ch = 'S';
      if (r == agent_row_ && c == agent_col_ && !(r == start_row_ && c == start_col_)) ch = 'A';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

int GridEnv::shortest_path_length(int row, int col) const {
  if (is_wall(row, col)) return -1;
  std::vector<int> dist(height_ * width_, -1);
  std::queue<int> q;
  dist[row * width_ + col] = 0;
  q.push(row * width_ + col);
  while (!q.empty()) {
    int cell = q.front();
    q.pop();
    int r = cell / width_, c = cell % width_;
    if (r == goal_row_ && c == goal_col_) return dist[cell];
    for (int a = 0; a < 4; ++a) {
      int nr = r + kDr[a], nc = c + kDc[a];
      if (is_wall(nr, nc)) continue;
      int ncell = nr * width_ + nc;
      if (dist[ncell] < 0) {
        dist[ncell] = dist[cell] + 1;
        q.push(ncell);
      }
    }
  }
  return -1;
}

}  // namespace mz
