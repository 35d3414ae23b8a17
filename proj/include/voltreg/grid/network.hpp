#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::grid {

enum class NodeKind { slack, load };

struct Node {
  std::string id;
  NodeKind kind = NodeKind::load;
};

// Line as given by the user: endpoints by node id, impedance in ohm.
struct LineSpec {
  std::string from;
  std::string to;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

// Line after validation, oriented away from the slack node: `from` is the
// sending (upstream) end.
struct Line {
  std::size_t from = 0;
  std::size_t to = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

struct BaseValues {
  double v_base_volt = 400.0;
  double s_base_va = 100e3;

  double z_base_ohm() const { return v_base_volt * v_base_volt / s_base_va; }
};

// Radial distribution feeder. Immutable after construction; all derived tree
// structure (parents, children, sweep order) is computed once in build().
class Network {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  static Network build(std::vector<Node> nodes, const std::vector<LineSpec>& lines,
                       BaseValues base = {}, double slack_voltage = 1.0) {
    Network net;
    net.nodes_ = std::move(nodes);
    net.base_ = base;
    net.slack_voltage_ = slack_voltage;

    if (!(base.v_base_volt > 0.0) || !(base.s_base_va > 0.0))
      throw InvalidTopology("base voltage and power must be positive");
    if (!(slack_voltage > 0.0) || !std::isfinite(slack_voltage))
      throw InvalidTopology("slack voltage must be positive");
    if (net.nodes_.empty()) throw InvalidTopology("network has no nodes");

    for (std::size_t i = 0; i < net.nodes_.size(); ++i) {
      const auto& n = net.nodes_[i];
      if (n.id.empty()) throw InvalidTopology("empty node id");
      if (!net.index_.emplace(n.id, i).second)
        throw InvalidTopology("duplicate node id '" + n.id + "'");
      if (n.kind == NodeKind::slack) {
        if (net.slack_ != npos) throw InvalidTopology("more than one slack node");
        net.slack_ = i;
      }
    }
    if (net.slack_ == npos) throw InvalidTopology("no slack node");
    if (lines.size() + 1 != net.nodes_.size())
      throw InvalidTopology("a radial network needs exactly |nodes|-1 lines (got " +
                            std::to_string(lines.size()) + " lines for " +
                            std::to_string(net.nodes_.size()) + " nodes)");

    // Undirected adjacency, then orient by BFS from the slack.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(net.nodes_.size());
    for (std::size_t l = 0; l < lines.size(); ++l) {
      const auto& spec = lines[l];
      auto a = net.find(spec.from);
      auto b = net.find(spec.to);
      if (!a || !b)
        throw InvalidTopology("line " + spec.from + "-" + spec.to + " references unknown node");
      if (*a == *b) throw InvalidTopology("self-loop at node " + spec.from);
      if (!(spec.r_ohm >= 0.0) || !(spec.x_ohm >= 0.0) || !std::isfinite(spec.r_ohm) ||
          !std::isfinite(spec.x_ohm))
        throw InvalidTopology("line " + spec.from + "-" + spec.to +
                              " needs finite non-negative R and X");
      if (spec.r_ohm == 0.0 && spec.x_ohm == 0.0)
        throw InvalidTopology("line " + spec.from + "-" + spec.to + " has zero impedance");
      adj[*a].emplace_back(*b, l);
      adj[*b].emplace_back(*a, l);
    }

    const std::size_t n_nodes = net.nodes_.size();
    net.parent_line_.assign(n_nodes, npos);
    net.children_.assign(n_nodes, {});
    std::vector<bool> seen(n_nodes, false);
    std::queue<std::size_t> frontier;
    frontier.push(net.slack_);
    seen[net.slack_] = true;
    while (!frontier.empty()) {
      const std::size_t m = frontier.front();
      frontier.pop();
      net.order_.push_back(m);
      for (auto [n, l] : adj[m]) {
        if (seen[n]) {
          if (net.parent_line_[m] != l) throw InvalidTopology("network contains a cycle");
          continue;
        }
        seen[n] = true;
        net.lines_.push_back(Line{m, n, lines[l].r_ohm, lines[l].x_ohm});
        net.parent_line_[n] = l;
        frontier.push(n);
      }
    }
    if (net.order_.size() != n_nodes) throw InvalidTopology("network is not connected");

    // parent_line_ held input indices during BFS; remap to oriented lines.
    for (std::size_t k = 0; k < net.lines_.size(); ++k) {
      net.parent_line_[net.lines_[k].to] = k;
      net.children_[net.lines_[k].from].push_back(k);
    }
    return net;
  }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Line>& lines() const { return lines_; }
  const BaseValues& base() const { return base_; }
  double slack_voltage() const { return slack_voltage_; }
  std::size_t slack() const { return slack_; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t index_of(const std::string& id) const {
    auto i = find(id);
    if (!i) throw InvalidTopology("unknown node '" + id + "'");
    return *i;
  }

  // Line feeding `node` from upstream; npos for the slack.
  std::size_t parent_line(std::size_t node) const { return parent_line_[node]; }
  // Lines leaving `node` downstream.
  const std::vector<std::size_t>& child_lines(std::size_t node) const { return children_[node]; }
  // Nodes in breadth-first order from the slack (parents before children).
  const std::vector<std::size_t>& sweep_order() const { return order_; }

  double r_pu(std::size_t line) const { return lines_[line].r_ohm / base_.z_base_ohm(); }
  double x_pu(std::size_t line) const { return lines_[line].x_ohm / base_.z_base_ohm(); }

  // Copy with a different slack set-point.
  Network with_slack_voltage(double v) const {
    Network copy = *this;
    if (!(v > 0.0)) throw InvalidTopology("slack voltage must be positive");
    copy.slack_voltage_ = v;
    return copy;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Line> lines_;
  BaseValues base_;
  double slack_voltage_ = 1.0;
  std::size_t slack_ = npos;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> parent_line_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> order_;
};

}  // namespace voltreg::grid
