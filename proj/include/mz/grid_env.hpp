#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mz/rng.hpp"
#include "mz/types.hpp"

namespace mz {

// Binary observation planes: channel 0 walls, 1 agent, 2 goal.
struct Observation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> planes;  // channels*height*width, row-major per channel

  uint8_t at(int c, int y, int x) const { return planes[(c * height + y) * width + x]; }
  bool operator==(const Observation& o) const {
    return channels == o.channels && height == o.height && width == o.width && planes == o.planes;
  }
};

struct StepResult {
  Observation observation;          // state after the executed prefix
  std::vector<double> rewards;      // one entry per executed primitive step
  bool terminal = false;
  int steps_executed = 0;           // < action.length() only when terminal cut it short
};

enum class StartMode { kFixed, kRandom };

// Four-connected maze with one goal. Moving into a wall or off the grid is a
// legal no-op. Reward: -1 on the first primitive step of every decision plus
// +200 on the step that reaches the goal, so a solved episode's return is
// exactly 200 - decisions. Episodes end at the goal or at the decision cap.
class GridEnv {
 public:
  static constexpr int kUp = 0, kDown = 1, kLeft = 2, kRight = 3;
  static constexpr int kNumActions = 4;
  static constexpr double kGoalReward = 200.0;
  static constexpr double kDecisionCost = -1.0;

  static GridEnv from_text(const std::string& text, int decision_cap = 200);
  static GridEnv from_file(const std::string& path, int decision_cap = 200);

  void seed(uint64_t s) { rng_.seed(s); }

  // Places the agent (fixed: at S; random: uniform over open cells that can
  // reach the goal, goal excluded) and clears counters.
  Observation reset(StartMode mode);

  // Executes the composite prefix until done or terminal. Must not be called
  // on a terminal env or with an empty/invalid action list.
  StepResult step(const CompositeAction& action);

  std::vector<int> legal_actions() const { return {kUp, kDown, kLeft, kRight}; }
  int num_actions() const { return 4; }
  bool terminal() const { return terminal_; }
  int decision_count() const { return decisions_; }
  int decision_cap() const { return decision_cap_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int agent_row() const { return agent_row_; }
  int agent_col() const { return agent_col_; }
  int start_row() const { return start_row_; }
  int start_col() const { return start_col_; }
  int goal_row() const { return goal_row_; }
  int goal_col() const { return goal_col_; }

  // Teleports the agent (used by log replay).
  void place_agent(int row, int col);

  // Makes every fixed reset start at (row, col) instead of S. The cell must
  // be open, off the goal, and able to reach it.
  void pin_start(int row, int col);

  Observation observe() const;
  std::string render_ascii() const;

  // BFS distance from (row,col) to the goal; -1 if unreachable.
  int shortest_path_length(int row, int col) const;
  int shortest_path_from_start() const { return shortest_path_length(start_row_, start_col_); }

  bool is_wall(int row, int col) const {
    if (row < 0 || row >= height_ || col < 0 || col >= width_) return true;
    return walls_[row * width_ + col];
  }

 private:
  GridEnv() = default;

  int height_ = 0, width_ = 0;
  std::vector<uint8_t> walls_;
  int start_row_ = -1, start_col_ = -1;
  int pinned_row_ = -1, pinned_col_ = -1;
  int goal_row_ = -1, goal_col_ = -1;
  int agent_row_ = -1, agent_col_ = -1;
  int decisions_ = 0;
  int decision_cap_ = 200;
  bool terminal_ = false;
  Rng rng_{0};
};

}  // namespace mz
