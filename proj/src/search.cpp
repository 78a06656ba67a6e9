#include "mz/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <limits>

namespace mz {

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void fmt(std::string& out, const char* format, ...) {
  char buf[256];
  va_list args;
  va_start(args, format);
  vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  out += buf;
}

}  // namespace

int select_primitive_edge(const Node& node, const ValueBounds& bounds, double c_puct) {
  const int A = static_cast<int>(node.prim.size());
  double total_n = 0.0;
  double q_sum = 0.0;
  int visited = 0;
  for (const Edge& e : node.prim) {
    total_n += e.n;
    if (e.n > 0) {
      q_sum += e.q;
      visited += 1;
    }
  }
  // Substitute for unvisited edges: mean Q of visited siblings, or 1 if none.
  double q_hat = visited > 0 ? bounds.norm(q_sum / visited) : 1.0;
  double sqrt_total = std::sqrt(total_n);
  // Exact score ties fall back to the prior (a fresh node, where every
  // exploration term is zero, then reduces to argmax P), then lowest id.
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_p = -1.0;
  for (int a = 0; a < A; ++a) {
    const Edge& e = node.prim[a];
    double q = e.n > 0 ? bounds.norm(e.q) : q_hat;
    double score = q + e.p * sqrt_total / (1.0 + e.n) * c_puct;
    if (score > best_score || (score == best_score && e.p > best_p)) {
      best_score = score;
      best = a;
      best_p = e.p;
    }
  }
  return best;
}

bool option_beats_primitive(const Node& node, int action, const ValueBounds& bounds,
                            double c_puct) {
  const Edge& pa = node.prim[action];
  const Edge& po = node.option;
  double sqrt_total = std::sqrt(static_cast<double>(pa.n));  // option visits are inside N(s,a)
  double virtual_q = bounds.norm(pa.q) * pa.n / (pa.n + 1.0);

  double q_o = po.n > 0 ? bounds.norm(po.q) : virtual_q;
  double score_o = q_o + po.p * sqrt_total / (1.0 + po.n) * c_puct;

  int n_rest = pa.n - po.n;  // the primitive-only remainder of the shared edge
  double p_rest = std::max(0.0, pa.p - po.p);
  double q_rest = n_rest > 0 ? bounds.norm((pa.n * pa.q - po.n * po.q) / n_rest) : virtual_q;
  double score_rest = q_rest + p_rest * sqrt_total / (1.0 + n_rest) * c_puct;

  return score_o > score_rest;  // ties stay primitive
}

SearchTree::SearchTree(const Model& model, const SearchConfig& cfg) : model_(model), cfg_(cfg) {
  if (cfg.simulations < 1) throw ConfigError("search needs at least one simulation");
}

int SearchTree::ensure_child(int node_idx, int action) {
  int child = nodes_[node_idx].prim[action].child;
  if (child >= 0) return child;
  child = static_cast<int>(nodes_.size());
  Node n;
  n.depth = nodes_[node_idx].depth + 1;
  n.prim.assign(model_.config().num_actions, Edge{});
  nodes_.push_back(std::move(n));
  nodes_[node_idx].prim[action].child = child;
  return child;
}

double SearchTree::evaluate(int node_idx, int parent_idx, bool via_option, int action,
                            const Observation* obs) {
  if (node_idx == 0) {
    nodes_[0].state = model_.represent(*obs);
    nodes_[0].cum_reward = 0.0;
  } else {
    const Node& parent = nodes_[parent_idx];
    CompositeAction step_action =
        via_option ? CompositeAction(parent.option_actions) : CompositeAction({action});
    DynamicsOutput dyn = model_.dynamics(parent.state, step_action);
    if (!std::isfinite(dyn.reward) || !all_finite(dyn.next_state))
      throw RuntimeFault("search fault: non-finite dynamics output");
    Edge& e = via_option ? nodes_[parent_idx].option : nodes_[parent_idx].prim[action];
    e.r = dyn.reward;
    e.r_set = true;
    Node& node = nodes_[node_idx];
    node.state = std::move(dyn.next_state);
    node.cum_reward =
        parent.cum_reward + std::pow(cfg_.discount, parent.depth) * dyn.reward;
    node.eval_parent = parent_idx;
    node.eval_action = action;
    node.eval_via_option = via_option;
  }
  nodes_[node_idx].evaluated = true;

  PredictionOutput pred = model_.predict(nodes_[node_idx].state);
  if (!std::isfinite(pred.value) || !all_finite(pred.policy))
    throw RuntimeFault("search fault: non-finite prediction output");
  for (int a = 0; a < model_.config().num_actions; ++a) nodes_[node_idx].prim[a].p = pred.policy[a];

  OptionDistribution dist = OptionDistribution::from_prediction(pred);
  std::vector<int> derived = derive_dominant_option(dist);
  if (node_idx == 0) {
    root_predicted_option_ = derived;
    root_policy_argmax_ = 0;
    for (size_t a = 1; a < pred.policy.size(); ++a)
      if (pred.policy[a] > pred.policy[root_policy_argmax_]) root_policy_argmax_ = static_cast<int>(a);
  }
  if (derived.size() >= 2) {
    double prior = cumulative_probability(dist, derived);
    // Grow the option's chain of unevaluated nodes, reusing what exists.
    int cur = node_idx;
    for (int a : derived) cur = ensure_child(cur, a);
    Node& node = nodes_[node_idx];  // re-fetch: ensure_child may reallocate
    node.has_option = true;
    node.option.p = prior;
    node.option.child = cur;
    node.option_actions = derived;
  }
  return pred.value;
}

void SearchTree::add_root_noise(Rng& rng) {
  const int A = model_.config().num_actions;
  const double eps = cfg_.dirichlet_epsilon;
  std::vector<double> noise = dirichlet(cfg_.dirichlet_alpha, A, rng);
  for (int a = 0; a < A; ++a)
    nodes_[0].prim[a].p = (1.0 - eps) * nodes_[0].prim[a].p + eps * noise[a];
  if (nodes_[0].has_option) {
    // Scalar mix for the option prior; a 2-bin Dirichlet draw is Beta(a, a).
    std::vector<double> pair = dirichlet(cfg_.dirichlet_alpha, 2, rng);
    double mixed = (1.0 - eps) * nodes_[0].option.p + eps * pair[0];
    nodes_[0].option.p = std::clamp(mixed, 0.0, 1.0);
  }
}

void SearchTree::backup(const std::vector<PathStep>& path, int leaf_idx, double leaf_value) {
  const double r1l = nodes_[leaf_idx].cum_reward;
  const int l = nodes_[leaf_idx].depth;
  for (const PathStep& step : path) {
    Node& node = nodes_[step.node];
    const int k = node.depth;
    double g = (r1l - node.cum_reward) / std::pow(cfg_.discount, k) +
               std::pow(cfg_.discount, l - k) * leaf_value;
    Edge& e = step.is_option ? node.option : node.prim[step.action];
    e.q = (e.n * e.q + g) / (e.n + 1);
    e.n += 1;
    bounds_.update(e.q);
    if (step.is_option) {
      // The option's visits and returns also count toward its first action.
      Edge& pe = node.prim[step.action];
      pe.q = (pe.n * pe.q + g) / (pe.n + 1);
      pe.n += 1;
      bounds_.update(pe.q);
    }
  }
}

SearchResult SearchTree::run(const Observation& obs, Rng& rng) {
  const int A = model_.config().num_actions;
  nodes_.clear();
  sims_.clear();
  bounds_ = ValueBounds{};
  Node root;
  root.prim.assign(A, Edge{});
  nodes_.push_back(std::move(root));
  evaluate(0, -1, false, -1, &obs);
  if (cfg_.dirichlet_epsilon > 0.0) add_root_noise(rng);

  for (int sim = 0; sim < cfg_.simulations; ++sim) {
    std::vector<PathStep> path;
    int cur = 0;
    int leaf = -1, parent = -1, act = -1;
    bool via_option = false;
    while (true) {
      int a = select_primitive_edge(nodes_[cur], bounds_, cfg_.c_puct);
      bool use_option = nodes_[cur].has_option && nodes_[cur].option_actions[0] == a &&
                        option_beats_primitive(nodes_[cur], a, bounds_, cfg_.c_puct);
      int child = use_option ? nodes_[cur].option.child : ensure_child(cur, a);
      path.push_back({cur, use_option, a});
      if (!nodes_[child].evaluated) {
        leaf = child;
        parent = cur;
        act = a;
        via_option = use_option;
        break;
      }
      cur = child;
    }
    double value = evaluate(leaf, parent, via_option, act, nullptr);
    backup(path, leaf, value);

    SimRecord rec;
    rec.path = std::move(path);
    rec.leaf_depth = nodes_[leaf].depth;
    rec.leaf_value = value;
    for (const PathStep& s : rec.path)
      if (s.is_option) rec.used_option = true;
    sims_.push_back(std::move(rec));
  }

  SearchResult result;
  const Node& rt = nodes_[0];
  double n_total = 0.0, nq_total = 0.0;
  for (const Edge& e : rt.prim) {
    n_total += e.n;
    nq_total += e.n * e.q;
  }
  result.root_policy.resize(A);
  for (int a = 0; a < A; ++a)
    result.root_policy[a] = n_total > 0 ? rt.prim[a].n / n_total : 1.0 / A;
  result.root_value = n_total > 0 ? nq_total / n_total : 0.0;
  result.suggested = pick(true, rng);
  result.chosen = cfg_.sample_actions ? pick(false, rng) : result.suggested;
  result.root_predicted_option = root_predicted_option_;
  result.root_policy_argmax = root_policy_argmax_;

  TreeMetrics& tm = result.tree;
  tm.simulations = static_cast<int>(sims_.size());
  for (const Node& n : nodes_)
    if (n.has_option) {
      tm.option_edge_expanded = true;
      break;
    }
  for (const SimRecord& s : sims_) {
    tm.depth_of_each_simulation.push_back(s.leaf_depth);
    tm.max_depth = std::max(tm.max_depth, s.leaf_depth);
    if (s.used_option) tm.simulations_with_option += 1;
  }
  return result;
}

CompositeAction SearchTree::pick(bool argmax, Rng& rng) const {
  const Node& root = nodes_[0];
  const int A = static_cast<int>(root.prim.size());
  int a;
  if (argmax) {
    a = 0;
    for (int b = 1; b < A; ++b)
      if (root.prim[b].n > root.prim[a].n) a = b;
  } else {
    std::vector<double> weights(A);
    for (int b = 0; b < A; ++b) {
      double n = root.prim[b].n;
      weights[b] = cfg_.temperature == 1.0 ? n : std::pow(n, 1.0 / cfg_.temperature);
    }
    a = sample_index(weights, rng);
  }
  if (root.has_option && root.option_actions[0] == a && root.prim[a].n > 0) {
    int n_option = root.option.n;
    int n_rest = root.prim[a].n - n_option;
    bool take_option;
    if (argmax) {
      take_option = n_option > n_rest;  // ties stay primitive
    } else {
      take_option = sample_index({static_cast<double>(n_rest), static_cast<double>(n_option)},
                                 rng) == 1;
    }
    if (take_option) return CompositeAction(root.option_actions);
  }
  return CompositeAction({a});
}

std::string SearchTree::trace_string() const {
  // Nodes keyed by primitive path, emitted depth-first in action order.
  std::string out;
  std::function<void(int, const std::string&)> walk = [&](int idx, const std::string& path) {
    const Node& n = nodes_[idx];
    fmt(out, "node path=[%s] depth=%d eval=%d cum=%.12g\n", path.c_str(), n.depth,
        n.evaluated ? 1 : 0, n.cum_reward);
    for (size_t a = 0; a < n.prim.size(); ++a) {
      const Edge& e = n.prim[a];
      fmt(out, "  edge a=%zu n=%d q=%.12g p=%.12g r=%.12g rset=%d\n", a, e.n, e.q, e.p, e.r,
          e.r_set ? 1 : 0);
    }
    if (n.has_option) {
      std::string acts;
      for (size_t i = 0; i < n.option_actions.size(); ++i) {
        if (i) acts += ",";
        acts += std::to_string(n.option_actions[i]);
      }
      fmt(out, "  option acts=[%s] n=%d q=%.12g p=%.12g r=%.12g rset=%d\n", acts.c_str(),
          n.option.n, n.option.q, n.option.p, n.option.r, n.option.r_set ? 1 : 0);
    }
    for (size_t a = 0; a < n.prim.size(); ++a) {
      if (n.prim[a].child < 0) continue;
      std::string child_path = path.empty() ? std::to_string(a) : path + "," + std::to_string(a);
      walk(n.prim[a].child, child_path);
    }
  };
  walk(0, "");
  for (size_t i = 0; i < sims_.size(); ++i) {
    const SimRecord& s = sims_[i];
    fmt(out, "sim %zu leaf_depth=%d value=%.12g opt=%d path=", i, s.leaf_depth, s.leaf_value,
        s.used_option ? 1 : 0);
    for (size_t j = 0; j < s.path.size(); ++j) {
      if (j) out += ";";
      fmt(out, "%s%d", s.path[j].is_option ? "o" : "a", s.path[j].action);
    }
    out += "\n";
  }
  return out;
}

}  // namespace mz
