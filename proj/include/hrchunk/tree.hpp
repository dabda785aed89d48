#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hrchunk {

// Binary constituency tree over token positions 0..n-1. Nodes live in a flat
// arena; leaves must be added left to right, and internal nodes may only join
// two adjacent subtrees.
class BinaryTree {
 public:
  using NodeId = std::int32_t;
  static constexpr NodeId kNone = -1;

  struct Node {
    NodeId left = kNone;
    NodeId right = kNone;
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    bool is_leaf() const { return left == kNone; }
  };

  NodeId add_leaf(std::string word = {});
  NodeId add_internal(NodeId left, NodeId right);
  void set_root(NodeId id) { root_ = id; }

  NodeId root() const { return root_; }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  // Leaf indices are exactly 0..n-1 in order and the root spans all of them.
  bool is_valid() const;

  // "((a b) c)"; a single-leaf tree is written as the bare word. Leaves with no
  // word are written as their index.
  std::string to_brackets() const;

 private:
  std::vector<Node> nodes_;
  std::vector<std::string> words_;
  NodeId root_ = kNone;
};

// Parses one bracketed tree, e.g. "((a b) c)". Throws ParseError on unbalanced
// brackets and ArityError when a node does not have exactly two children.
BinaryTree parse_tree(std::string_view text, std::size_t line_no = 1);

// One tree per non-blank line; lines starting with '#' are comments.
std::vector<BinaryTree> read_trees(std::string_view text);

std::string write_trees(const std::vector<BinaryTree>& trees);

}  // namespace hrchunk
