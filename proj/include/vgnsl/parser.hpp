#pragma once

// Easy-first bottom-up parsing: score every adjacent pair of constituents,
// pick one (sampled from the softmax while training, argmax at test time),
// replace it by the normalized sum of its halves, repeat n-1 times.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "vgnsl/model.hpp"
#include "vgnsl/rng.hpp"
#include "vgnsl/trees.hpp"

namespace vgnsl {

enum class SelectMode { kSample, kGreedy };

template <class T>
Vec<T> embed_token(int id, const ModelParams<T>& p) {
  if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size())
    throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
  auto row = p.embedding.row(static_cast<std::size_t>(id));
  if (!p.normalize_leaves) return Vec<T>(row.begin(), row.end());
  return normalized<T>(row, "embedding row");
}

template <class T>
std::vector<Vec<T>> embed_tokens(std::span<const int> ids, const ModelParams<T>& p) {
  std::vector<Vec<T>> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(embed_token(id, p));
  return out;
}

// (x_a + x_b) / |x_a + x_b|.
template <class T>
Vec<T> combine(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("combine: dimension mismatch");
  Vec<T> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
  const T n = norm2<T>(sum);
  if (!(n > T(0))) throw DegenerateInput("combine: constituents cancel exactly");
  for (auto& x : sum) x /= n;
  return sum;
}

// Pre-activations of the hidden layer for the pair (x, y).
template <class T>
void score_hidden(std::span<const T> x, std::span<const T> y, const ModelParams<T>& p,
                  std::span<T> pre) {
  const std::size_t d = x.size();
  const std::size_t h = p.hidden_dim();
  for (std::size_t c = 0; c < h; ++c) pre[c] = p.b1.data[c];
  for (std::size_t r = 0; r < d; ++r) {
    const T xr = x[r];
    if (xr == T(0)) continue;
    auto wrow = p.w1.row(r);
    for (std::size_t c = 0; c < h; ++c) pre[c] += xr * wrow[c];
  }
  for (std::size_t r = 0; r < d; ++r) {
    const T yr = y[r];
    if (yr == T(0)) continue;
    auto wrow = p.w1.row(d + r);
    for (std::size_t c = 0; c < h; ++c) pre[c] += yr * wrow[c];
  }
}

template <class T>
T score_pair(std::span<const T> x, std::span<const T> y, const ModelParams<T>& p,
             std::span<T> scratch) {
  score_hidden(x, y, p, scratch);
  T s = p.b2.data[0];
  for (std::size_t c = 0; c < scratch.size(); ++c)
    if (scratch[c] > T(0)) s += p.w2.data[c] * scratch[c];
  return s;
}

// score_j = w2 . relu(w1^T [x_j; x_{j+1}] + b1) + b2 for each adjacent pair.
template <class T>
Vec<T> score_pairs(std::span<const Vec<T>> xs, const ModelParams<T>& p) {
  if (xs.size() < 2) throw ShapeError("score_pairs needs at least two constituents");
  Vec<T> scratch(p.hidden_dim());
  Vec<T> out(xs.size() - 1);
  for (std::size_t j = 0; j + 1 < xs.size(); ++j)
    out[j] = score_pair<T>(xs[j], xs[j + 1], p, scratch);
  return out;
}

template <class T>
Vec<T> log_softmax(std::span<const T> scores) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T s : scores) mx = std::max(mx, s);
  T z = 0;
  for (T s : scores) z += std::exp(s - mx);
  const T lse = mx + std::log(z);
  Vec<T> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
  return out;
}

template <class T>
struct Selection {
  int index = 0;
  T log_prob = 0;
};

// Samples from softmax(scores), or takes the leftmost argmax in greedy mode.
template <class T>
Selection<T> select_pair(std::span<const T> scores, SelectMode mode, Rng& rng) {
  if (scores.empty()) throw ShapeError("select_pair: no candidate pairs");
  if (!all_finite(scores)) throw DegenerateInput("select_pair: non-finite score");
  const Vec<T> logp = log_softmax(scores);
  int pick = 0;
  if (mode == SelectMode::kGreedy) {
    for (std::size_t j = 1; j < scores.size(); ++j)
      if (scores[j] > scores[static_cast<std::size_t>(pick)]) pick = static_cast<int>(j);
  } else {
    const double u = rng.uniform();
    double acc = 0;
    pick = static_cast<int>(scores.size()) - 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      acc += std::exp(static_cast<double>(logp[j]));
      if (u < acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
  }
  return {pick, logp[static_cast<std::size_t>(pick)]};
}

// One merge decision: `index` is the position of the chosen pair among the
// constituents present at that step, `node` the id of the created node.
template <class T>
struct ParseStep {
  int index = 0;
  T log_prob = 0;
  int node = 0;
  Span span;
};

template <class T>
struct ParseTrace {
  std::vector<ParseStep<T>> steps;

  T total_log_prob() const {
    T s = 0;
    for (const auto& st : steps) s += st.log_prob;
    return s;
  }
};

// vectors[id] is the representation of tree node id (leaves first, then
// internal nodes in creation order): 2n-1 entries.
template <class T>
struct ParseResult {
  BinaryTree tree;
  ParseTrace<T> trace;
  std::vector<Vec<T>> vectors;
};

template <class T>
ParseResult<T> parse(std::span<const int> ids, const ModelParams<T>& p, SelectMode mode,
                     Rng& rng) {
  const int n = static_cast<int>(ids.size());
  if (n < 1) throw ShapeError("parse: empty caption");
  ParseResult<T> out{BinaryTree(n), {}, embed_tokens(ids, p)};
  out.vectors.reserve(2 * static_cast<std::size_t>(n) - 1);

  std::vector<int> frontier(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) frontier[static_cast<std::size_t>(i)] = i;
  // Scores of adjacent frontier pairs; only the neighbours of a merge change.
  Vec<T> scratch(p.hidden_dim());
  Vec<T> scores;
  for (int j = 0; j + 1 < n; ++j)
    scores.push_back(score_pair<T>(out.vectors[static_cast<std::size_t>(j)],
                                   out.vectors[static_cast<std::size_t>(j + 1)], p, scratch));

  while (frontier.size() > 1) {
    const auto sel = select_pair<T>(scores, mode, rng);
    const auto j = static_cast<std::size_t>(sel.index);
    const int a = frontier[j];
    const int b = frontier[j + 1];
    Vec<T> z = combine<T>(out.vectors[static_cast<std::size_t>(a)],
                          out.vectors[static_cast<std::size_t>(b)]);
    const int id = out.tree.merge(a, b);
    out.vectors.push_back(std::move(z));
    out.trace.steps.push_back({sel.index, sel.log_prob, id, out.tree.node(id).span});

    frontier[j] = id;
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    scores.erase(scores.begin() + static_cast<std::ptrdiff_t>(j));
    const auto& zv = out.vectors[static_cast<std::size_t>(id)];
    if (j > 0)
      scores[j - 1] = score_pair<T>(out.vectors[static_cast<std::size_t>(frontier[j - 1])], zv, p,
                                    scratch);
    if (j < scores.size())
      scores[j] = score_pair<T>(zv, out.vectors[static_cast<std::size_t>(frontier[j + 1])], p,
                                scratch);
  }
  return out;
}

template <class T>
ParseResult<T> parse_greedy(std::span<const int> ids, const ModelParams<T>& p) {
  Rng unused(0);
  return parse(ids, p, SelectMode::kGreedy, unused);
}

// Representations of every node of a fixed tree under parameters p.
template <class T>
std::vector<Vec<T>> constituent_vectors(const BinaryTree& tree, std::span<const int> ids,
                                        const ModelParams<T>& p) {
  if (static_cast<int>(ids.size()) != tree.num_leaves())
    throw ShapeError("constituent_vectors: tree/caption length mismatch");
  auto vecs = embed_tokens(ids, p);
  for (int id = tree.num_leaves(); id < tree.num_nodes(); ++id) {
    const auto& nd = tree.node(id);
    vecs.push_back(combine<T>(vecs[static_cast<std::size_t>(nd.left)],
                              vecs[static_cast<std::size_t>(nd.right)]));
  }
  return vecs;
}

// Pushes dL/d(node vector) through the composition normalizations down to
// the embedding rows. grads is consumed (modified in place).
template <class T>
void backprop_tree(const BinaryTree& tree, std::span<const int> ids,
                   std::span<const Vec<T>> vecs, std::vector<Vec<T>>& grads,
                   const ModelParams<T>& p, Tensor<T>& d_embedding) {
  const std::size_t d = p.embed_dim();
  for (int id = tree.num_nodes() - 1; id >= tree.num_leaves(); --id) {
    const auto& nd = tree.node(id);
    const auto& z = vecs[static_cast<std::size_t>(id)];
    const auto& g = grads[static_cast<std::size_t>(id)];
    // z = s / |s|, s = x_l + x_r:  ds = (g - z (z.g)) / |s|
    Vec<T> s(d);
    for (std::size_t k = 0; k < d; ++k)
      s[k] = vecs[static_cast<std::size_t>(nd.left)][k] + vecs[static_cast<std::size_t>(nd.right)][k];
    const T sn = norm2<T>(s);
    const T zg = dot<T>(z, g);
    auto& gl = grads[static_cast<std::size_t>(nd.left)];
    auto& gr = grads[static_cast<std::size_t>(nd.right)];
    for (std::size_t k = 0; k < d; ++k) {
      const T ds = (g[k] - z[k] * zg) / sn;
      gl[k] += ds;
      gr[k] += ds;
    }
  }
  for (int leaf = 0; leaf < tree.num_leaves(); ++leaf) {
    const auto row_id = static_cast<std::size_t>(ids[static_cast<std::size_t>(leaf)]);
    auto row = d_embedding.row(row_id);
    const auto& g = grads[static_cast<std::size_t>(leaf)];
    if (!p.normalize_leaves) {
      for (std::size_t k = 0; k < d; ++k) row[k] += g[k];
      continue;
    }
    auto e = p.embedding.row(row_id);
    const T en = norm2<T>(e);
    const auto& x = vecs[static_cast<std::size_t>(leaf)];
    const T xg = dot<T>(x, g);
    for (std::size_t k = 0; k < d; ++k) row[k] += (g[k] - x[k] * xg) / en;
  }
}

}  // namespace vgnsl
