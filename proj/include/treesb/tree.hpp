#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "treesb/errors.hpp"

namespace treesb {

/// Node of a binary tree identified by its root-to-node path: digit 0 for a
/// left turn, 1 for a right turn. The empty path is the root.
class NodeId {
 public:
  NodeId() = default;
  explicit NodeId(std::string bits) : bits_(std::move(bits)) {
    for (char c : bits_) {
      if (c != '0' && c != '1') throw InvalidArgument("node id must be a string of 0/1 digits: '" + bits_ + "'");
    }
  }

  static NodeId root() { return NodeId(); }

  /// Inverse of serialize(): "root" names the empty path.
  static NodeId parse(std::string_view text) {
    if (text == "root") return NodeId();
    if (text.empty()) throw InvalidArgument("empty node id");
    return NodeId(std::string(text));
  }

  std::string serialize() const { return bits_.empty() ? std::string("root") : bits_; }

  const std::string& bits() const noexcept { return bits_; }
  std::size_t level() const noexcept { return bits_.size(); }
  bool is_root() const noexcept { return bits_.empty(); }

  NodeId child(int digit) const { return NodeId(bits_ + (digit == 0 ? '0' : '1'), Unchecked{}); }
  NodeId left() const { return child(0); }
  NodeId right() const { return child(1); }

  NodeId parent() const {
    if (is_root()) throw InvalidArgument("root has no parent");
    return NodeId(bits_.substr(0, bits_.size() - 1), Unchecked{});
  }

  /// True iff this node lies in the subtree rooted at `node` (inclusive).
  bool descends_from(const NodeId& node) const {
    return bits_.size() >= node.bits_.size() && bits_.compare(0, node.bits_.size(), node.bits_) == 0;
  }

  friend bool operator==(const NodeId&, const NodeId&) = default;
  friend auto operator<=>(const NodeId& a, const NodeId& b) { return a.bits_ <=> b.bits_; }

 private:
  struct Unchecked {};
  NodeId(std::string bits, Unchecked) : bits_(std::move(bits)) {}

  std::string bits_;
};

enum class TreeKind { Lopsided, Balanced, Custom };

inline std::string_view to_string(TreeKind kind) {
  switch (kind) {
    case TreeKind::Lopsided: return "lopsided";
    case TreeKind::Balanced: return "balanced";
    case TreeKind::Custom: return "custom";
  }
  return "custom";
}

inline TreeKind parse_tree_kind(std::string_view text) {
  if (text == "lopsided" || text == "lt" || text == "LT") return TreeKind::Lopsided;
  if (text == "balanced" || text == "bt" || text == "BT") return TreeKind::Balanced;
  if (text == "custom") return TreeKind::Custom;
  throw InvalidArgument("unknown tree kind '" + std::string(text) + "'");
}

/// One step on a leaf's root-to-leaf path: the internal node passed and the
/// direction taken there (0 = left, 1 = right).
struct PathStep {
  std::size_t node;
  int digit;
};

/// A finite rooted binary tree whose leaves carry the mixture weights.
/// Internal nodes are ordered by level and then lexicographically; leaves are
/// ordered left to right. Immutable after construction.
class TreeTopology {
 public:
  static TreeTopology lopsided(std::size_t num_leaves) {
    if (num_leaves == 0) throw InvalidArgument("lopsided tree needs at least one leaf");
    std::vector<NodeId> leaves;
    std::string spine;
    for (std::size_t k = 0; k + 1 < num_leaves; ++k) {
      leaves.emplace_back(spine + '0');
      spine += '1';
    }
    leaves.emplace_back(spine);
    return TreeTopology(std::move(leaves), TreeKind::Lopsided);
  }

  static TreeTopology balanced(std::size_t num_leaves) {
    if (num_leaves == 0 || !std::has_single_bit(num_leaves)) {
      throw InvalidArgument("balanced tree needs a power-of-two number of leaves, got " +
                            std::to_string(num_leaves));
    }
    const auto depth = static_cast<std::size_t>(std::countr_zero(num_leaves));
    std::vector<NodeId> leaves;
    leaves.reserve(num_leaves);
    for (std::size_t k = 0; k < num_leaves; ++k) {
      std::string bits(depth, '0');
      for (std::size_t b = 0; b < depth; ++b) {
        if ((k >> (depth - 1 - b)) & 1U) bits[b] = '1';
      }
      leaves.emplace_back(std::move(bits));
    }
    return TreeTopology(std::move(leaves), TreeKind::Balanced);
  }

  /// Builds a tree from an explicit leaf set, which must form a complete
  /// prefix-free code.
  static TreeTopology custom(std::vector<NodeId> leaves) { return TreeTopology(std::move(leaves), TreeKind::Custom); }

  static TreeTopology build(TreeKind kind, std::size_t num_leaves) {
    switch (kind) {
      case TreeKind::Lopsided: return lopsided(num_leaves);
      case TreeKind::Balanced: return balanced(num_leaves);
      case TreeKind::Custom: break;
    }
    throw InvalidArgument("custom trees must be built from an explicit leaf set");
  }

  TreeKind kind() const noexcept { return kind_; }
  std::size_t num_leaves() const noexcept { return leaves_.size(); }
  std::size_t num_internal() const noexcept { return internal_.size(); }

  const std::vector<NodeId>& leaves() const noexcept { return leaves_; }
  const std::vector<NodeId>& internal_nodes() const noexcept { return internal_; }
  const NodeId& leaf(std::size_t index) const { return leaves_.at(index); }
  const NodeId& internal_node(std::size_t index) const { return internal_.at(index); }

  std::size_t leaf_index(const NodeId& id) const {
    auto it = leaf_lookup_.find(id);
    if (it == leaf_lookup_.end()) throw NotFound("'" + id.serialize() + "' is not a leaf of this tree");
    return it->second;
  }
  std::size_t internal_index(const NodeId& id) const {
    auto it = internal_lookup_.find(id);
    if (it == internal_lookup_.end()) {
      throw InvalidArgument("'" + id.serialize() + "' is not an internal node of this tree");
    }
    return it->second;
  }
  bool is_leaf(const NodeId& id) const { return leaf_lookup_.contains(id); }
  bool is_internal(const NodeId& id) const { return internal_lookup_.contains(id); }

  /// Root-to-leaf path of the leaf with the given index.
  std::span<const PathStep> path(std::size_t leaf) const { return paths_.at(leaf); }

  /// Internal nodes on the path from the root to the leaf's parent.
  std::vector<NodeId> ancestors(const NodeId& leaf) const {
    std::vector<NodeId> out;
    for (const auto& step : path(leaf_index(leaf))) out.push_back(internal_[step.node]);
    return out;
  }

  /// True iff `leaf` is the left child of `node` or descends from it.
  bool is_left_descendant(const NodeId& node, const NodeId& leaf) const {
    if (!is_internal(node)) throw InvalidArgument("'" + node.serialize() + "' is not an internal node");
    return leaf.descends_from(node.left());
  }

  bool is_right_descendant(const NodeId& node, const NodeId& leaf) const {
    if (!is_internal(node)) throw InvalidArgument("'" + node.serialize() + "' is not an internal node");
    return leaf.descends_from(node.right());
  }

  /// Leaves judged close enough for a label switch to be likely: siblings in
  /// a balanced tree, leaves at most one level apart in a lopsided tree, and
  /// sibling leaves for custom trees.
  std::vector<std::pair<NodeId, NodeId>> adjacent_leaf_pairs() const {
    std::vector<std::pair<NodeId, NodeId>> pairs;
    if (kind_ == TreeKind::Lopsided) {
      for (std::size_t a = 0; a < leaves_.size(); ++a) {
        for (std::size_t b = a + 1; b < leaves_.size(); ++b) {
          const auto la = leaves_[a].level();
          const auto lb = leaves_[b].level();
          if ((la > lb ? la - lb : lb - la) <= 1) pairs.emplace_back(leaves_[a], leaves_[b]);
        }
      }
      return pairs;
    }
    for (const auto& node : internal_) {
      if (is_leaf(node.left()) && is_leaf(node.right())) pairs.emplace_back(node.left(), node.right());
    }
    return pairs;
  }

  std::size_t max_level() const {
    std::size_t m = 0;
    for (const auto& leaf : leaves_) m = std::max(m, leaf.level());
    return m;
  }

 private:
  TreeTopology(std::vector<NodeId> leaves, TreeKind kind) : kind_(kind), leaves_(std::move(leaves)) {
    if (leaves_.empty()) throw InvalidArgument("a tree needs at least one leaf");
    std::sort(leaves_.begin(), leaves_.end());
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
      if (!leaf_lookup_.emplace(leaves_[k], k).second) {
        throw InvalidArgument("duplicate leaf '" + leaves_[k].serialize() + "'");
      }
    }
    // Internal nodes are exactly the proper prefixes of the leaves.
    std::vector<NodeId> internal;
    for (const auto& leaf : leaves_) {
      for (std::size_t l = 0; l < leaf.level(); ++l) internal.emplace_back(leaf.bits().substr(0, l));
    }
    std::sort(internal.begin(), internal.end(), [](const NodeId& a, const NodeId& b) {
      return a.level() != b.level() ? a.level() < b.level() : a < b;
    });
    internal.erase(std::unique(internal.begin(), internal.end()), internal.end());
    internal_ = std::move(internal);
    for (std::size_t k = 0; k < internal_.size(); ++k) {
      if (leaf_lookup_.contains(internal_[k])) {
        throw InvalidArgument("leaf set is not prefix-free: '" + internal_[k].serialize() + "' has descendants");
      }
      internal_lookup_.emplace(internal_[k], k);
    }
    for (const auto& node : internal_) {
      for (int digit : {0, 1}) {
        const auto c = node.child(digit);
        if (!leaf_lookup_.contains(c) && !internal_lookup_.contains(c)) {
          throw InvalidArgument("leaf set is incomplete: node '" + node.serialize() + "' lacks child '" +
                                c.serialize() + "'");
        }
      }
    }
    paths_.resize(leaves_.size());
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
      const auto& bits = leaves_[k].bits();
      for (std::size_t l = 0; l < bits.size(); ++l) {
        paths_[k].push_back({internal_lookup_.at(NodeId(bits.substr(0, l))), bits[l] == '0' ? 0 : 1});
      }
    }
  }

  TreeKind kind_;
  std::vector<NodeId> leaves_;
  std::vector<NodeId> internal_;
  std::map<NodeId, std::size_t> leaf_lookup_;
  std::map<NodeId, std::size_t> internal_lookup_;
  std::vector<std::vector<PathStep>> paths_;
};

/// Rule of thumb for the leaf count: the smallest power of two at least twice
/// the expected number of clusters.
inline std::size_t choose_num_leaves(std::size_t expected_clusters) {
  if (expected_clusters == 0) throw InvalidArgument("expected number of clusters must be positive");
  return std::bit_ceil(2 * expected_clusters);
}

}  // namespace treesb
