#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mz {

// A composite action: one or more primitive action ids executed as a unit.
// Length 1 is a plain primitive move; longer sequences are macro-actions.
struct CompositeAction {
  std::vector<int> actions;

  CompositeAction() = default;
  explicit CompositeAction(std::vector<int> a) : actions(std::move(a)) {}
  CompositeAction(std::initializer_list<int> a) : actions(a) {}

  int length() const { return static_cast<int>(actions.size()); }
  bool empty() const { return actions.empty(); }
  bool operator==(const CompositeAction& o) const { return actions == o.actions; }
  bool operator!=(const CompositeAction& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (size_t i = 0; i < actions.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(actions[i]);
    }
    return s + "]";
  }
};

// Bad user input: unreadable/invalid maps, malformed config, mismatched
// checkpoints. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal faults during a run: non-finite network output, I/O failure,
// sampling from an empty buffer. The CLI maps this to exit code 3.
struct RuntimeFault : std::runtime_error {
  explicit RuntimeFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mz
