#pragma once

// Visual-semantic matching: cosine scores between mapped images and
// constituents, the bidirectional hinge ranking loss with its analytic
// gradient, and the concreteness/abstractness rewards derived from it.
// Every contrastive sum ranges over the current minibatch.

#include <cmath>
#include <span>
#include <vector>

#include "vgnsl/parser.hpp"

namespace vgnsl {

struct VseHyper {
  double margin = 0.2;           // ranking-loss margin
  double concrete_margin = 0.2;  // margin inside concreteness/abstractness
  double lambda = 20.0;          // head-initial penalty weight
};

inline void check_hyper(const VseHyper& h) {
  if (!(h.margin >= 0) || !(h.concrete_margin >= 0) || !(h.lambda >= 0))
    throw ConfigError("margins and lambda must be non-negative");
}

template <class T>
Vec<T> map_image(std::span<const float> v, const ModelParams<T>& p) {
  if (v.size() != p.image_dim())
    throw ShapeError("image feature has dimension " + std::to_string(v.size()) + ", model expects " +
                     std::to_string(p.image_dim()));
  Vec<T> u(p.embed_dim(), T(0));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const T vr = static_cast<T>(v[r]);
    if (vr == T(0)) continue;
    auto prow = p.phi.row(r);
    for (std::size_t c = 0; c < u.size(); ++c) u[c] += vr * prow[c];
  }
  return u;
}

template <class T>
T cosine(std::span<const T> a, std::span<const T> b) {
  const T na = norm2(a);
  const T nb = norm2(b);
  if (!(na > T(0)) || !(nb > T(0))) throw DegenerateInput("cosine of a zero-norm vector");
  return dot(a, b) / (na * nb);
}

// m(v, c) = cos(phi^T v, c).
template <class T>
T match_score(std::span<const float> v, std::span<const T> c, const ModelParams<T>& p) {
  const Vec<T> u = map_image(v, p);
  return cosine<T>(u, c);
}

template <class T>
T hinge(T x) {
  return x > T(0) ? x : T(0);
}

// scores[i](j, k) = m(c^i_j, v_k): constituent j of caption i against image k.
// Sum over anchors i, k != i of
//   [m(c^k_l, v_i) - m(c^i_j, v_i) + margin]_+   (contrastive constituents)
//   [m(c^i_j, v_k) - m(c^i_j, v_i) + margin]_+   (contrastive images)
template <class T>
T vse_loss_from_scores(std::span<const Tensor<T>> scores, double margin) {
  const std::size_t b = scores.size();
  const T delta = static_cast<T>(margin);
  double loss = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& si = scores[i];
    for (std::size_t j = 0; j < si.rows(); ++j) {
      const T pos = si(j, i);
      for (std::size_t k = 0; k < b; ++k) {
        if (k == i) continue;
        const auto& sk = scores[k];
        for (std::size_t l = 0; l < sk.rows(); ++l) loss += hinge<T>(sk(l, i) - pos + delta);
        loss += hinge<T>(si(j, k) - pos + delta);
      }
    }
  }
  return static_cast<T>(loss);
}

// concrete = sum [own - neg_c - margin]_+ + sum [own - neg_v - margin]_+
template <class T>
T concreteness_from_scores(T own, std::span<const T> neg_constituents,
                           std::span<const T> neg_images, double margin) {
  const T delta = static_cast<T>(margin);
  T s = 0;
  for (T x : neg_constituents) s += hinge<T>(own - x - delta);
  for (T x : neg_images) s += hinge<T>(own - x - delta);
  return s;
}

// abstract = sum [neg_c - own + margin]_+ + sum [neg_v - own + margin]_+
template <class T>
T abstractness_from_scores(T own, std::span<const T> neg_constituents,
                           std::span<const T> neg_images, double margin) {
  const T delta = static_cast<T>(margin);
  T s = 0;
  for (T x : neg_constituents) s += hinge<T>(x - own + delta);
  for (T x : neg_images) s += hinge<T>(x - own + delta);
  return s;
}

// Mapped images and matched constituents of one minibatch, with the full
// constituent-by-image cosine table.
template <class T>
struct MatchBatch {
  std::vector<Vec<T>> images;
  std::vector<std::vector<Vec<T>>> constituents;
  std::vector<Tensor<T>> scores;

  std::size_t size() const noexcept { return images.size(); }

  static MatchBatch build(std::vector<std::vector<Vec<T>>> constituents,
                          std::span<const std::span<const float>> features,
                          const ModelParams<T>& p) {
    if (constituents.size() != features.size())
      throw ShapeError("match batch: caption and image counts differ");
    MatchBatch mb;
    mb.constituents = std::move(constituents);
    for (auto f : features) mb.images.push_back(map_image(f, p));
    mb.compute_scores();
    return mb;
  }

  void compute_scores() {
    const std::size_t b = images.size();
    std::vector<T> inorm(b);
    for (std::size_t k = 0; k < b; ++k) {
      inorm[k] = norm2<T>(images[k]);
      if (!(inorm[k] > T(0))) throw DegenerateInput("mapped image has zero norm");
    }
    scores.clear();
    for (const auto& cs : constituents) {
      if (cs.empty()) throw ShapeError("caption contributes no constituents");
      Tensor<T> s({cs.size(), b});
      for (std::size_t j = 0; j < cs.size(); ++j) {
        const T cn = norm2<T>(cs[j]);
        if (!(cn > T(0))) throw DegenerateInput("constituent has zero norm");
        for (std::size_t k = 0; k < b; ++k) s(j, k) = dot<T>(cs[j], images[k]) / (cn * inorm[k]);
      }
      scores.push_back(std::move(s));
    }
  }

  // Scores of constituent z (belonging to caption i) against every image.
  Vec<T> image_scores(std::span<const T> z) const {
    Vec<T> out(images.size());
    for (std::size_t k = 0; k < images.size(); ++k) out[k] = cosine<T>(z, images[k]);
    return out;
  }

  // m(c^k_p, v_i) for every constituent of every other caption k.
  Vec<T> negative_constituent_scores(std::size_t i) const {
    Vec<T> out;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (k == i) continue;
      for (std::size_t p = 0; p < scores[k].rows(); ++p) out.push_back(scores[k](p, i));
    }
    return out;
  }
};

template <class T>
T vse_loss(const MatchBatch<T>& batch, const VseHyper& h) {
  return vse_loss_from_scores<T>(batch.scores, h.margin);
}

template <class T>
T concreteness(std::span<const T> z, std::size_t i, const MatchBatch<T>& batch,
               const VseHyper& h) {
  const Vec<T> zs = batch.image_scores(z);
  Vec<T> neg_images;
  for (std::size_t k = 0; k < zs.size(); ++k)
    if (k != i) neg_images.push_back(zs[k]);
  const Vec<T> neg_c = batch.negative_constituent_scores(i);
  return concreteness_from_scores<T>(zs[i], neg_c, neg_images, h.concrete_margin);
}

template <class T>
T abstractness(std::span<const T> z, std::size_t i, const MatchBatch<T>& batch,
               const VseHyper& h) {
  const Vec<T> zs = batch.image_scores(z);
  Vec<T> neg_images;
  for (std::size_t k = 0; k < zs.size(); ++k)
    if (k != i) neg_images.push_back(zs[k]);
  const Vec<T> neg_c = batch.negative_constituent_scores(i);
  return abstractness_from_scores<T>(zs[i], neg_c, neg_images, h.concrete_margin);
}

// Reward for merging (x_left, x_right) inside caption i.
template <class T>
T reward(std::span<const T> x_left, std::span<const T> x_right, std::size_t i,
         const MatchBatch<T>& batch, const VseHyper& h) {
  const Vec<T> z = combine<T>(x_left, x_right);
  return concreteness<T>(z, i, batch, h);
}

// reward / (lambda * abstractness + 1)
template <class T>
T damp_reward(T reward, T abstractness, double lambda) {
  return reward / (static_cast<T>(lambda) * abstractness + T(1));
}

// Head-initial variant: damped by the abstractness of the right constituent.
template <class T>
T reward_hi(std::span<const T> x_left, std::span<const T> x_right, std::size_t i,
            const MatchBatch<T>& batch, const VseHyper& h) {
  const T r = reward<T>(x_left, x_right, i, batch, h);
  const T a = abstractness<T>(x_right, i, batch, h);
  return damp_reward<T>(r, a, h.lambda);
}

// Per-step rewards for a parsed caption i, in trace order. `vectors` are the
// node representations (possibly recomputed after a parameter update).
template <class T>
Vec<T> step_rewards(const BinaryTree& tree, std::span<const Vec<T>> vectors, std::size_t i,
                    const MatchBatch<T>& batch, const VseHyper& h, bool head_initial) {
  Vec<T> out;
  const Vec<T> neg_c = batch.negative_constituent_scores(i);
  auto with_negatives = [&](std::span<const T> z, bool concrete) {
    const Vec<T> zs = batch.image_scores(z);
    Vec<T> neg_images;
    for (std::size_t k = 0; k < zs.size(); ++k)
      if (k != i) neg_images.push_back(zs[k]);
    return concrete ? concreteness_from_scores<T>(zs[i], neg_c, neg_images, h.concrete_margin)
                    : abstractness_from_scores<T>(zs[i], neg_c, neg_images, h.concrete_margin);
  };
  for (int id = tree.num_leaves(); id < tree.num_nodes(); ++id) {
    const auto& nd = tree.node(id);
    T r = with_negatives(vectors[static_cast<std::size_t>(id)], true);
    if (head_initial) {
      const T a = with_negatives(vectors[static_cast<std::size_t>(nd.right)], false);
      r = damp_reward<T>(r, a, h.lambda);
    }
    out.push_back(r);
  }
  return out;
}

// Node ids of a tree that take part in matching.
inline std::vector<int> matched_nodes(const BinaryTree& tree, bool include_leaves) {
  std::vector<int> out;
  const int first = (include_leaves || tree.num_leaves() == 1) ? 0 : tree.num_leaves();
  for (int id = first; id < tree.num_nodes(); ++id) out.push_back(id);
  return out;
}

template <class T>
struct VseItem {
  std::span<const int> ids;
  const BinaryTree* tree = nullptr;
  std::span<const float> feature;
};

template <class T>
struct VseResult {
  T loss = 0;
  GradientSet<T> grads;  // embedding and visual.phi only
};

// Loss and exact gradient with respect to phi and the embeddings, holding
// every tree fixed. Hinge terms that are exactly zero contribute nothing.
template <class T>
VseResult<T> vse_backward(std::span<const VseItem<T>> batch, const ModelParams<T>& p,
                          const VseHyper& h, bool include_leaves = true) {
  const std::size_t b = batch.size();
  if (b == 0) throw ShapeError("vse_backward: empty batch");
  const std::size_t d = p.embed_dim();
  const T delta = static_cast<T>(h.margin);

  std::vector<std::vector<Vec<T>>> node_vecs(b);
  std::vector<std::vector<int>> nodes(b);
  std::vector<std::vector<Vec<T>>> matched(b);
  std::vector<std::span<const float>> feats(b);
  for (std::size_t i = 0; i < b; ++i) {
    node_vecs[i] = constituent_vectors<T>(*batch[i].tree, batch[i].ids, p);
    nodes[i] = matched_nodes(*batch[i].tree, include_leaves);
    for (int id : nodes[i]) matched[i].push_back(node_vecs[i][static_cast<std::size_t>(id)]);
    feats[i] = batch[i].feature;
  }
  const auto mb = MatchBatch<T>::build(matched, feats, p);

  // dL/dS for every table entry.
  std::vector<Tensor<T>> gs;
  for (const auto& s : mb.scores) gs.push_back(s.zeros_like());
  double loss = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& si = mb.scores[i];
    for (std::size_t j = 0; j < si.rows(); ++j) {
      const T pos = si(j, i);
      for (std::size_t k = 0; k < b; ++k) {
        if (k == i) continue;
        const auto& sk = mb.scores[k];
        for (std::size_t l = 0; l < sk.rows(); ++l) {
          const T arg = sk(l, i) - pos + delta;
          if (arg > T(0)) {
            loss += arg;
            gs[k](l, i) += T(1);
            gs[i](j, i) -= T(1);
          }
        }
        const T arg = si(j, k) - pos + delta;
        if (arg > T(0)) {
          loss += arg;
          gs[i](j, k) += T(1);
          gs[i](j, i) -= T(1);
        }
      }
    }
  }
  if (!std::isfinite(loss)) throw DegenerateInput("vse_backward: non-finite loss");

  VseResult<T> out;
  out.loss = static_cast<T>(loss);
  out.grads.embedding = p.embedding.zeros_like();
  out.grads.phi = p.phi.zeros_like();
  if (loss == 0) return out;

  // Through the cosines: dcos/dc = u/(|u||c|) - cos c/|c|^2, symmetric for u.
  std::vector<Vec<T>> du(b, Vec<T>(d, T(0)));
  std::vector<T> un(b);
  for (std::size_t k = 0; k < b; ++k) un[k] = norm2<T>(mb.images[k]);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<Vec<T>> dnode(node_vecs[i].size(), Vec<T>(d, T(0)));
    for (std::size_t j = 0; j < nodes[i].size(); ++j) {
      const auto& c = matched[i][j];
      const T cn = norm2<T>(c);
      auto& dc = dnode[static_cast<std::size_t>(nodes[i][j])];
      for (std::size_t k = 0; k < b; ++k) {
        const T g = gs[i](j, k);
        if (g == T(0)) continue;
        const T cs = mb.scores[i](j, k);
        const auto& u = mb.images[k];
        const T inv = T(1) / (un[k] * cn);
        for (std::size_t q = 0; q < d; ++q) {
          dc[q] += g * (u[q] * inv - cs * c[q] / (cn * cn));
          du[k][q] += g * (c[q] * inv - cs * u[q] / (un[k] * un[k]));
        }
      }
    }
    backprop_tree<T>(*batch[i].tree, batch[i].ids, node_vecs[i], dnode, p, out.grads.embedding);
  }
  for (std::size_t k = 0; k < b; ++k) {
    const auto& v = feats[k];
    for (std::size_t r = 0; r < v.size(); ++r) {
      const T vr = static_cast<T>(v[r]);
      if (vr == T(0)) continue;
      auto grow = out.grads.phi.row(r);
      for (std::size_t q = 0; q < d; ++q) grow[q] += vr * du[k][q];
    }
  }
  if (!all_finite<T>(out.grads.embedding.data) || !all_finite<T>(out.grads.phi.data))
    throw DegenerateInput("vse_backward: non-finite gradient");
  return out;
}

}  // namespace vgnsl
