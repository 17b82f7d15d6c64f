#pragma once

// Unlabeled binary trees (parser output), labeled n-ary trees (gold
// annotations), bracketed-text readers/writers and span extraction.

#include <cctype>
#include <compare>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vgnsl/error.hpp"

namespace vgnsl {

// Half-open token interval [begin, end).
struct Span {
  int begin = 0;
  int end = 0;

  int length() const noexcept { return end - begin; }
  auto operator<=>(const Span&) const = default;
};

using SpanSet = std::set<Span>;

// Which constituents count as brackets when scoring.
enum class SpanPolicy {
  kNonTrivial,    // length >= 2, whole-sentence span excluded (default)
  kWithSentence,  // length >= 2, whole-sentence span kept
  kAll,           // every constituent, leaves included
};

inline bool keep_span(const Span& s, int n, SpanPolicy policy) noexcept {
  switch (policy) {
    case SpanPolicy::kNonTrivial:
      return s.length() >= 2 && !(s.begin == 0 && s.end == n);
    case SpanPolicy::kWithSentence:
      return s.length() >= 2;
    case SpanPolicy::kAll:
      return true;
  }
  return false;
}

// Binary tree over n tokens stored as a node array: ids [0, n) are the
// leaves in token order, ids >= n are internal nodes in creation order.
// A complete tree holds 2n-1 nodes and its root is the last one.
class BinaryTree {
 public:
  struct Node {
    int left = -1;
    int right = -1;
    Span span;

    bool is_leaf() const noexcept { return left < 0; }
  };

  BinaryTree() : BinaryTree(1) {}

  // A forest of n unmerged leaves.
  explicit BinaryTree(int n) : n_(n) {
    if (n < 1) throw ShapeError("binary tree needs at least one leaf");
    nodes_.reserve(2 * static_cast<std::size_t>(n) - 1);
    parent_.reserve(2 * static_cast<std::size_t>(n) - 1);
    for (int i = 0; i < n; ++i) {
      nodes_.push_back(Node{-1, -1, Span{i, i + 1}});
      parent_.push_back(-1);
    }
  }

  // Joins two adjacent, still-unattached subtrees and returns the new node id.
  int merge(int a, int b) {
    const int count = static_cast<int>(nodes_.size());
    if (a < 0 || b < 0 || a >= count || b >= count || a == b)
      throw ShapeError("merge: node id out of range");
    if (parent_[a] >= 0 || parent_[b] >= 0)
      throw ShapeError("merge: node already has a parent");
    if (nodes_[a].span.end != nodes_[b].span.begin)
      throw ShapeError("merge: subtrees are not adjacent");
    const int id = count;
    nodes_.push_back(Node{a, b, Span{nodes_[a].span.begin, nodes_[b].span.end}});
    parent_.push_back(-1);
    parent_[a] = id;
    parent_[b] = id;
    return id;
  }

  int num_leaves() const noexcept { return n_; }
  int num_nodes() const noexcept { return static_cast<int>(nodes_.size()); }
  bool complete() const noexcept { return num_nodes() == 2 * n_ - 1; }

  int root() const {
    if (!complete()) throw ShapeError("tree is not complete");
    return num_nodes() - 1;
  }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  int parent(int id) const { return parent_.at(static_cast<std::size_t>(id)); }

  // Spans of every node, leaves included.
  SpanSet all_spans() const {
    SpanSet out;
    for (const auto& nd : nodes_) out.insert(nd.span);
    return out;
  }

  static BinaryTree left_branching(int n) {
    BinaryTree t(n);
    int acc = 0;
    for (int i = 1; i < n; ++i) acc = t.merge(acc, i);
    return t;
  }

  static BinaryTree right_branching(int n) {
    BinaryTree t(n);
    int acc = n - 1;
    for (int i = n - 2; i >= 0; --i) acc = t.merge(i, acc);
    return t;
  }

  // Structural equality: a binary tree is determined by its span set.
  friend bool operator==(const BinaryTree& a, const BinaryTree& b) {
    return a.n_ == b.n_ && a.complete() == b.complete() &&
           a.all_spans() == b.all_spans();
  }

 private:
  int n_ = 1;
  std::vector<Node> nodes_;
  std::vector<int> parent_;
};

// Gold-standard tree. Terminal nodes carry a word and no children;
// internal nodes carry a nonempty label and at least one child.
struct LabeledTree {
  std::string label;
  std::string word;
  std::vector<LabeledTree> children;

  bool is_terminal() const noexcept { return children.empty(); }

  static LabeledTree terminal(std::string w) { return LabeledTree{{}, std::move(w), {}}; }

  std::vector<std::string> terminals() const {
    std::vector<std::string> out;
    collect(*this, out);
    return out;
  }

 private:
  static void collect(const LabeledTree& t, std::vector<std::string>& out) {
    if (t.is_terminal()) {
      out.push_back(t.word);
      return;
    }
    for (const auto& c : t.children) collect(c, out);
  }
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_atom_char(char c) { return c != '(' && c != ')' && !is_space(c); }

class BracketLexer {
 public:
  explicit BracketLexer(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  std::size_t pos() const { return pos_; }

  void expect(char c) {
    skip_space();
    if (at_end()) throw ParseError("unexpected end of input", pos_);
    if (text_[pos_] != c) throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  std::string atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_atom_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

inline LabeledTree parse_labeled_node(BracketLexer& lex) {
  lex.expect('(');
  lex.skip_space();
  if (lex.at_end()) throw ParseError("unexpected end of input", lex.pos());
  if (lex.peek() == ')') throw ParseError("empty constituent", lex.pos());
  if (lex.peek() == '(') throw ParseError("constituent label missing", lex.pos());
  LabeledTree node;
  node.label = lex.atom();
  for (;;) {
    lex.skip_space();
    if (lex.at_end()) throw ParseError("unexpected end of input", lex.pos());
    const char c = lex.peek();
    if (c == ')') break;
    if (c == '(') {
      node.children.push_back(parse_labeled_node(lex));
    } else {
      node.children.push_back(LabeledTree::terminal(lex.atom()));
    }
  }
  if (node.children.empty()) throw ParseError("empty constituent", lex.pos());
  lex.expect(')');
  return node;
}

// Reads one binary node, pushing a leaf marker or merge marker onto stack_ids.
inline void parse_binary_shape(BracketLexer& lex, std::vector<std::string>& tokens,
                               std::vector<std::pair<int, int>>& merges,
                               std::vector<int>& stack_ids) {
  lex.skip_space();
  if (lex.at_end()) throw ParseError("unexpected end of input", lex.pos());
  if (lex.peek() == ')') throw ParseError("unexpected ')'", lex.pos());
  if (lex.peek() != '(') {
    tokens.push_back(lex.atom());
    stack_ids.push_back(-static_cast<int>(tokens.size()));  // leaf marker: -(index+1)
    return;
  }
  const std::size_t open = lex.pos();
  lex.expect('(');
  parse_binary_shape(lex, tokens, merges, stack_ids);
  parse_binary_shape(lex, tokens, merges, stack_ids);
  lex.skip_space();
  if (lex.at_end()) throw ParseError("unexpected end of input", lex.pos());
  if (lex.peek() != ')')
    throw ParseError("binary node opened at offset " + std::to_string(open) +
                         " has more than two children",
                     lex.pos());
  lex.expect(')');
  const int right = stack_ids.back();
  stack_ids.pop_back();
  const int left = stack_ids.back();
  stack_ids.pop_back();
  merges.emplace_back(left, right);
  stack_ids.push_back(static_cast<int>(merges.size()) - 1);  // merge marker: >= 0
}

inline void collect_labeled_spans(const LabeledTree& t, int& cursor, const std::string* label,
                                  SpanSet& out, std::vector<Span>* all) {
  if (t.is_terminal()) {
    ++cursor;
    return;
  }
  const int begin = cursor;
  for (const auto& c : t.children) collect_labeled_spans(c, cursor, label, out, all);
  const Span s{begin, cursor};
  if (label != nullptr) {
    if (t.label == *label) out.insert(s);
  } else if (all != nullptr) {
    all->push_back(s);
  }
}

}  // namespace detail

// Reads a PTB-style labeled tree such as "(NP (DT a) (NN cat))".
inline LabeledTree parse_bracketed(std::string_view line) {
  detail::BracketLexer lex(line);
  LabeledTree tree = detail::parse_labeled_node(lex);
  lex.skip_space();
  if (!lex.at_end()) throw ParseError("trailing input after tree", lex.pos());
  return tree;
}

struct BinaryReading {
  BinaryTree tree;
  std::vector<std::string> tokens;
};

// Reads an unlabeled binary bracketing such as "( ( a b ) c )" or a bare token.
inline BinaryReading read_binary(std::string_view line) {
  detail::BracketLexer lex(line);
  std::vector<std::string> tokens;
  std::vector<std::pair<int, int>> merges;
  std::vector<int> stack_ids;
  detail::parse_binary_shape(lex, tokens, merges, stack_ids);
  lex.skip_space();
  if (!lex.at_end()) throw ParseError("trailing input after tree", lex.pos());

  BinaryReading out{BinaryTree(static_cast<int>(tokens.size())), std::move(tokens)};
  const int n = out.tree.num_leaves();
  auto resolve = [n](int marker) { return marker < 0 ? -marker - 1 : n + marker; };
  for (const auto& [l, r] : merges) out.tree.merge(resolve(l), resolve(r));
  return out;
}

namespace detail {
inline void format_node(const BinaryTree& t, int id, std::span<const std::string> tokens,
                        std::string& out) {
  const auto& nd = t.node(id);
  if (nd.is_leaf()) {
    out += tokens[static_cast<std::size_t>(nd.span.begin)];
    return;
  }
  out += "( ";
  format_node(t, nd.left, tokens, out);
  out += ' ';
  format_node(t, nd.right, tokens, out);
  out += " )";
}
}  // namespace detail

inline std::string format_binary(const BinaryTree& tree, std::span<const std::string> tokens) {
  if (static_cast<int>(tokens.size()) != tree.num_leaves())
    throw ShapeError("format_binary: tree has " + std::to_string(tree.num_leaves()) +
                     " leaves but " + std::to_string(tokens.size()) + " tokens were given");
  std::string out;
  detail::format_node(tree, tree.root(), tokens, out);
  return out;
}

inline SpanSet spans_of(const BinaryTree& tree, SpanPolicy policy = SpanPolicy::kNonTrivial) {
  SpanSet out;
  const int n = tree.num_leaves();
  for (const auto& nd : tree.nodes())
    if (keep_span(nd.span, n, policy)) out.insert(nd.span);
  return out;
}

// Constituent spans of a labeled tree. Leaves (terminals) themselves are
// not constituents; preterminals are, with length 1.
inline SpanSet spans_of(const LabeledTree& tree, SpanPolicy policy = SpanPolicy::kNonTrivial) {
  std::vector<Span> all;
  int cursor = 0;
  SpanSet unused;
  detail::collect_labeled_spans(tree, cursor, nullptr, unused, &all);
  SpanSet out;
  for (const auto& s : all)
    if (keep_span(s, cursor, policy)) out.insert(s);
  return out;
}

// Spans of every constituent labeled exactly `label`, length-1 spans included.
inline SpanSet labeled_spans(const LabeledTree& tree, const std::string& label) {
  SpanSet out;
  int cursor = 0;
  detail::collect_labeled_spans(tree, cursor, &label, out, nullptr);
  return out;
}

inline int leaf_count(const LabeledTree& tree) {
  if (tree.is_terminal()) return 1;
  int n = 0;
  for (const auto& c : tree.children) n += leaf_count(c);
  return n;
}

}  // namespace vgnsl
