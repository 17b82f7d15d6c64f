#pragma once

// Trainable parameters: word embeddings, the pair-scoring network and the
// visual map into the joint embedding space.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>

#include "vgnsl/corpus.hpp"
#include "vgnsl/rng.hpp"
#include "vgnsl/tensor.hpp"

namespace vgnsl {

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 512;
  std::size_t hidden = 128;
  std::size_t image = 2048;
};

// The six named tensors shared by parameters, gradients and optimizer moments.
//   embedding  V x d
//   score.w1   2d x h   (hidden = relu(w1^T [x; y] + b1))
//   score.b1   h
//   score.w2   h
//   score.b2   1
//   visual.phi D x d    (mapped image = phi^T v)
template <class T>
struct ParamTensors {
  Tensor<T> embedding, w1, b1, w2, b2, phi;

  static constexpr std::array<std::string_view, 6> kNames = {
      "embedding", "score.w1", "score.b1", "score.w2", "score.b2", "visual.phi"};

  template <class F>
  void for_each(F&& f) {
    f(kNames[0], embedding);
    f(kNames[1], w1);
    f(kNames[2], b1);
    f(kNames[3], w2);
    f(kNames[4], b2);
    f(kNames[5], phi);
  }
  template <class F>
  void for_each(F&& f) const {
    f(kNames[0], embedding);
    f(kNames[1], w1);
    f(kNames[2], b1);
    f(kNames[3], w2);
    f(kNames[4], b2);
    f(kNames[5], phi);
  }

  static ParamTensors zeros(const ModelDims& dims) {
    ParamTensors p;
    p.embedding = Tensor<T>({dims.vocab, dims.embed});
    p.w1 = Tensor<T>({2 * dims.embed, dims.hidden});
    p.b1 = Tensor<T>({dims.hidden});
    p.w2 = Tensor<T>({dims.hidden});
    p.b2 = Tensor<T>({1});
    p.phi = Tensor<T>({dims.image, dims.embed});
    return p;
  }

  friend bool operator==(const ParamTensors&, const ParamTensors&) = default;
};

// Gradient accumulators; a tensor left empty was not written by the pass.
template <class T>
using GradientSet = ParamTensors<T>;

template <class T>
struct ModelParams : ParamTensors<T> {
  // Leaves are L2-normalized at lookup, like composed constituents.
  bool normalize_leaves = true;
  // Leading embedding columns holding frozen pretrained vectors (0 = none).
  std::size_t frozen_columns = 0;

  std::size_t embed_dim() const noexcept { return this->embedding.cols(); }
  std::size_t hidden_dim() const noexcept { return this->b1.size(); }
  std::size_t image_dim() const noexcept { return this->phi.rows(); }
  std::size_t vocab_size() const noexcept { return this->embedding.rows(); }

  ModelDims dims() const { return {vocab_size(), embed_dim(), hidden_dim(), image_dim()}; }

  static ModelParams zeros(const ModelDims& dims) {
    ModelParams p;
    static_cast<ParamTensors<T>&>(p) = ParamTensors<T>::zeros(dims);
    return p;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.embedding = this->embedding.template cast<U>();
    out.w1 = this->w1.template cast<U>();
    out.b1 = this->b1.template cast<U>();
    out.w2 = this->w2.template cast<U>();
    out.b2 = this->b2.template cast<U>();
    out.phi = this->phi.template cast<U>();
    out.normalize_leaves = normalize_leaves;
    out.frozen_columns = frozen_columns;
    return out;
  }

  // True when embedding entry (row, col) never receives updates.
  bool is_frozen(std::size_t row, std::size_t col, int unk_row = 0) const noexcept {
    return col < frozen_columns && row != static_cast<std::size_t>(unk_row);
  }

  void check_consistent() const {
    const auto d = embed_dim();
    const auto h = hidden_dim();
    if (d == 0 || h == 0 || vocab_size() == 0 || image_dim() == 0)
      throw ShapeError("model dimensions must be positive");
    if (this->w1.rows() != 2 * d || this->w1.cols() != h || this->w2.size() != h ||
        this->b2.size() != 1 || this->phi.cols() != d || frozen_columns > d)
      throw ShapeError("model tensors have inconsistent shapes");
  }
};

namespace detail {
template <class T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& x : t.data) x = static_cast<T>(rng.uniform(-bound, bound));
}
}  // namespace detail

// Embeddings uniform in [-0.1, 0.1]; w1, w2 and phi Glorot-uniform; biases zero.
template <class T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed) {
  auto p = ModelParams<T>::zeros(dims);
  Rng rng(derive_seed(seed, {0x1A17ULL}));
  detail::fill_uniform(p.embedding, 0.1, rng);
  detail::fill_uniform(p.w1, std::sqrt(6.0 / static_cast<double>(2 * dims.embed + dims.hidden)), rng);
  detail::fill_uniform(p.w2, std::sqrt(6.0 / static_cast<double>(dims.hidden + 1)), rng);
  detail::fill_uniform(p.phi, std::sqrt(6.0 / static_cast<double>(dims.image + dims.embed)), rng);
  return p;
}

// Copies pretrained vectors into the leading embedding columns and freezes
// them for every row except <unk>. Rows without a pretrained vector keep
// their random prefix, also frozen.
template <class T>
std::size_t install_pretrained(ModelParams<T>& p, const Vocabulary& vocab,
                               const std::unordered_map<std::string, std::vector<float>>& vectors) {
  if (vectors.empty()) throw ShapeError("no pretrained vectors given");
  const std::size_t k = vectors.begin()->second.size();
  if (k >= p.embed_dim())
    throw ShapeError("pretrained dimension " + std::to_string(k) +
                     " leaves no trainable embedding columns");
  std::size_t hits = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    auto it = vectors.find(vocab.word(id));
    if (it == vectors.end()) continue;
    auto row = p.embedding.row(static_cast<std::size_t>(id));
    for (std::size_t c = 0; c < k; ++c) row[c] = static_cast<T>(it->second[c]);
    ++hits;
  }
  p.frozen_columns = k;
  return hits;
}

}  // namespace vgnsl
