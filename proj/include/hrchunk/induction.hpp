#pragma once

#include <string_view>

#include "hrchunk/corpus.hpp"
#include "hrchunk/tree.hpp"

namespace hrchunk {

enum class Heuristic { Left, Right, Small };

Heuristic parse_heuristic(std::string_view name);  // "left" | "right" | "small"

// A leaf, or a node whose right child is a leaf and whose left child is
// left-branching: ((..((x_i x_i+1) x_i+2)..) x_j).
bool is_left_branching(const BinaryTree& tree, BinaryTree::NodeId id);
bool is_right_branching(const BinaryTree& tree, BinaryTree::NodeId id);

// Spans of all left-branching subtrees not contained in a larger
// left-branching subtree. Always a partition of the leaves.
ChunkSet induce_left_branching(const BinaryTree& tree);
ChunkSet induce_right_branching(const BinaryTree& tree);

// Every two-leaf subtree becomes a chunk; remaining leaves are singletons.
ChunkSet induce_small_chunks(const BinaryTree& tree);

ChunkSet induce(const BinaryTree& tree, Heuristic h);

}  // namespace hrchunk
