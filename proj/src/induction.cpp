#include "hrchunk/induction.hpp"

#include "hrchunk/error.hpp"

namespace hrchunk {

namespace {

template <class Keep>
void collect_maximal(const BinaryTree& tree, BinaryTree::NodeId id, Keep&& keep, ChunkSet& out) {
  const auto& n = tree.node(id);
  if (keep(id)) {
    out.push_back({n.start, n.end});
    return;
  }
  collect_maximal(tree, n.left, keep, out);
  collect_maximal(tree, n.right, keep, out);
}

}  // namespace

Heuristic parse_heuristic(std::string_view name) {
  if (name == "left") return Heuristic::Left;
  if (name == "right") return Heuristic::Right;
  if (name == "small") return Heuristic::Small;
  throw Error("unknown heuristic '" + std::string(name) + "' (expected left, right or small)");
}

bool is_left_branching(const BinaryTree& tree, BinaryTree::NodeId id) {
  while (true) {
    const auto& n = tree.node(id);
    if (n.is_leaf()) return true;
    if (!tree.node(n.right).is_leaf()) return false;
    id = n.left;
  }
}

bool is_right_branching(const BinaryTree& tree, BinaryTree::NodeId id) {
  while (true) {
    const auto& n = tree.node(id);
    if (n.is_leaf()) return true;
    if (!tree.node(n.left).is_leaf()) return false;
    id = n.right;
  }
}

// Top-down: the first left-branching node met on any root-to-leaf path is
// maximal, because all of its ancestors failed the test.
ChunkSet induce_left_branching(const BinaryTree& tree) {
  ChunkSet out;
  collect_maximal(tree, tree.root(), [&](BinaryTree::NodeId id) { return is_left_branching(tree, id); },
                  out);
  return out;
}

ChunkSet induce_right_branching(const BinaryTree& tree) {
  ChunkSet out;
  collect_maximal(tree, tree.root(),
                  [&](BinaryTree::NodeId id) { return is_right_branching(tree, id); }, out);
  return out;
}

ChunkSet induce_small_chunks(const BinaryTree& tree) {
  ChunkSet out;
  collect_maximal(
      tree, tree.root(),
      [&](BinaryTree::NodeId id) {
        const auto& n = tree.node(id);
        return n.is_leaf() || (tree.node(n.left).is_leaf() && tree.node(n.right).is_leaf());
      },
      out);
  return out;
}

ChunkSet induce(const BinaryTree& tree, Heuristic h) {
  switch (h) {
    case Heuristic::Left: return induce_left_branching(tree);
    case Heuristic::Right: return induce_right_branching(tree);
    case Heuristic::Small: return induce_small_chunks(tree);
  }
  return {};
}

}  // namespace hrchunk
