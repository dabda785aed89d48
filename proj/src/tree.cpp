#include "hrchunk/tree.hpp"

#include <functional>

#include "hrchunk/error.hpp"

namespace hrchunk {

BinaryTree::NodeId BinaryTree::add_leaf(std::string word) {
  Node n;
  n.start = n.end = words_.size();
  words_.push_back(std::move(word));
  nodes_.push_back(n);
  root_ = static_cast<NodeId>(nodes_.size() - 1);
  return root_;
}

BinaryTree::NodeId BinaryTree::add_internal(NodeId left, NodeId right) {
  const Node& l = node(left);
  const Node& r = node(right);
  if (l.end + 1 != r.start) throw Error("add_internal: children are not adjacent");
  Node n;
  n.left = left;
  n.right = right;
  n.start = l.start;
  n.end = r.end;
  nodes_.push_back(n);
  root_ = static_cast<NodeId>(nodes_.size() - 1);
  return root_;
}

bool BinaryTree::is_valid() const {
  if (root_ == kNone || words_.empty()) return false;
  std::size_t next_leaf = 0;
  std::size_t visited = 0;
  std::function<bool(NodeId)> walk = [&](NodeId id) -> bool {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) return false;
    ++visited;
    const Node& n = node(id);
    if (n.is_leaf()) {
      if (n.right != kNone || n.start != next_leaf || n.end != n.start) return false;
      ++next_leaf;
      return true;
    }
    if (n.right == kNone) return false;
    if (!walk(n.left) || !walk(n.right)) return false;
    return n.start == node(n.left).start && n.end == node(n.right).end &&
           node(n.left).end + 1 == node(n.right).start;
  };
  if (!walk(root_)) return false;
  const Node& r = node(root_);
  return next_leaf == words_.size() && r.start == 0 && r.end + 1 == words_.size() &&
         visited == 2 * words_.size() - 1;
}

std::string BinaryTree::to_brackets() const {
  std::string out;
  std::function<void(NodeId)> emit = [&](NodeId id) {
    const Node& n = node(id);
    if (n.is_leaf()) {
      const std::string& w = words_[n.start];
      out += w.empty() ? std::to_string(n.start) : w;
      return;
    }
    out += '(';
    emit(n.left);
    out += ' ';
    emit(n.right);
    out += ')';
  };
  if (root_ != kNone) emit(root_);
  return out;
}

BinaryTree parse_tree(std::string_view text, std::size_t line_no) {
  BinaryTree tree;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
  };

  // Recursive descent; each call consumes one subtree.
  std::function<BinaryTree::NodeId()> subtree = [&]() -> BinaryTree::NodeId {
    skip_ws();
    if (i >= text.size()) throw ParseError("unbalanced brackets: unexpected end of tree", line_no);
    if (text[i] == ')') throw ParseError("unbalanced brackets: unexpected ')'", line_no);
    if (text[i] != '(') {
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '(' &&
             text[j] != ')' && text[j] != '\r')
        ++j;
      std::string word(text.substr(i, j - i));
      i = j;
      return tree.add_leaf(std::move(word));
    }
    std::size_t open_at = i;
    ++i;
    std::vector<BinaryTree::NodeId> kids;
    while (true) {
      skip_ws();
      if (i >= text.size()) throw ParseError("unbalanced brackets: missing ')'", line_no);
      if (text[i] == ')') {
        ++i;
        break;
      }
      kids.push_back(subtree());
    }
    if (kids.size() != 2)
      throw ArityError("line " + std::to_string(line_no) + ": node at offset " +
                           std::to_string(open_at) + " has " + std::to_string(kids.size()) +
                           " children, expected 2",
                       open_at);
    return tree.add_internal(kids[0], kids[1]);
  };

  BinaryTree::NodeId root = subtree();
  skip_ws();
  if (i != text.size()) {
    if (text[i] == ')') throw ParseError("unbalanced brackets: extra ')'", line_no);
    throw ParseError("trailing input after tree", line_no);
  }
  tree.set_root(root);
  return tree;
}

std::vector<BinaryTree> read_trees(std::string_view text) {
  std::vector<BinaryTree> trees;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    trees.push_back(parse_tree(line, line_no));
  }
  return trees;
}

std::string write_trees(const std::vector<BinaryTree>& trees) {
  std::string out;
  for (const auto& t : trees) {
    out += t.to_brackets();
    out += '\n';
  }
  return out;
}

}  // namespace hrchunk
