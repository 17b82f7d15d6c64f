#pragma once

// Synthetic grounded corpus: captions built from templates over
// determiners, adjectives, nouns and prepositions. Each image vector is the
// sum of the prototypes of the caption's (adjective, noun) pairs plus
// Gaussian noise, so only those two-token phrases are visually grounded.

#include <string>
#include <vector>

#include "vgnsl/corpus.hpp"
#include "vgnsl/rng.hpp"
#include "vgnsl/trees.hpp"

namespace vgnsl {

struct SyntheticConfig {
  int captions = 1000;
  int image_dim = 64;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<Tokens> tokens;
  std::vector<std::vector<Span>> planted;          // (adjective, noun) spans
  std::vector<std::vector<int>> function_positions;  // determiners and prepositions
};

namespace detail {

inline const std::vector<std::string>& synthetic_determiners() {
  static const std::vector<std::string> w{"the", "a"};
  return w;
}
inline const std::vector<std::string>& synthetic_adjectives() {
  static const std::vector<std::string> w{"red", "big", "small", "green", "old", "white", "dark", "young"};
  return w;
}
inline const std::vector<std::string>& synthetic_nouns() {
  static const std::vector<std::string> w{"dog", "cat", "car", "tree", "man", "boat", "horse", "table", "bird", "house"};
  return w;
}
inline const std::vector<std::string>& synthetic_prepositions() {
  static const std::vector<std::string> w{"on", "near", "under", "with"};
  return w;
}

// D determiner, A adjective, N noun, P preposition.
inline const std::vector<std::string>& synthetic_templates() {
  static const std::vector<std::string> t{"DAN", "DANPDAN", "ANPDAN", "DANPAN", "ANPAN"};
  return t;
}

}  // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.captions < 2) throw ConfigError("synthetic corpus needs at least two captions");
  if (cfg.image_dim < 1) throw ConfigError("synthetic image dimension must be positive");
  const auto& dets = detail::synthetic_determiners();
  const auto& adjs = detail::synthetic_adjectives();
  const auto& nouns = detail::synthetic_nouns();
  const auto& preps = detail::synthetic_prepositions();
  const auto& templates = detail::synthetic_templates();
  const auto dim = static_cast<std::size_t>(cfg.image_dim);

  Rng proto_rng(derive_seed(cfg.seed, {0x9A07ULL}));
  auto prototypes = [&](std::size_t k) {
    std::vector<std::vector<double>> out(k, std::vector<double>(dim));
    for (auto& row : out)
      for (auto& x : row) x = proto_rng.normal();
    return out;
  };
  const auto adj_proto = prototypes(adjs.size());
  const auto noun_proto = prototypes(nouns.size());

  SyntheticCorpus out;
  Rng rng(derive_seed(cfg.seed, {0xCA9ULL}));
  auto pick = [&](const std::vector<std::string>& words) {
    return static_cast<std::size_t>(rng.below(words.size()));
  };
  out.corpus.features.dim = dim;
  out.corpus.features.values.reserve(dim * static_cast<std::size_t>(cfg.captions));
  for (int c = 0; c < cfg.captions; ++c) {
    const auto& tpl = templates[rng.below(templates.size())];
    Tokens toks;
    std::vector<Span> planted;
    std::vector<int> function;
    std::vector<double> image(dim, 0.0);
    for (std::size_t i = 0; i < tpl.size(); ++i) {
      const int pos = static_cast<int>(i);
      switch (tpl[i]) {
        case 'D':
          toks.push_back(dets[pick(dets)]);
          function.push_back(pos);
          break;
        case 'P':
          toks.push_back(preps[pick(preps)]);
          function.push_back(pos);
          break;
        case 'A': {
          const auto a = pick(adjs);
          toks.push_back(adjs[a]);
          for (std::size_t q = 0; q < dim; ++q) image[q] += adj_proto[a][q];
          break;
        }
        case 'N': {
          const auto n = pick(nouns);
          toks.push_back(nouns[n]);
          for (std::size_t q = 0; q < dim; ++q) image[q] += noun_proto[n][q];
          planted.push_back({pos - 1, pos + 1});
          break;
        }
        default:
          throw ConfigError("bad synthetic template");
      }
    }
    for (auto& x : image) {
      x += cfg.noise * rng.normal();
      out.corpus.features.values.push_back(static_cast<float>(x));
    }
    out.tokens.push_back(std::move(toks));
    out.planted.push_back(std::move(planted));
    out.function_positions.push_back(std::move(function));
  }

  out.corpus.vocab = build_vocab(out.tokens);
  for (int c = 0; c < cfg.captions; ++c)
    out.corpus.examples.push_back(
        PairedExample{make_caption(out.tokens[static_cast<std::size_t>(c)], out.corpus.vocab), c});
  return out;
}

// Fraction of planted phrases that are constituents of the predicted trees.
inline double planted_recall(std::span<const BinaryTree> trees, const SyntheticCorpus& data) {
  if (trees.size() != data.planted.size()) throw ShapeError("planted_recall: corpus size mismatch");
  long hit = 0, total = 0;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto spans = trees[i].all_spans();
    for (const auto& s : data.planted[i]) {
      ++total;
      hit += static_cast<long>(spans.count(s));
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// A function word attaches rightward when its leaf is the left child of its
// parent. Sentence-initial words are skipped: they cannot attach leftward.
inline double rightward_rate(std::span<const BinaryTree> trees, const SyntheticCorpus& data) {
  if (trees.size() != data.function_positions.size())
    throw ShapeError("rightward_rate: corpus size mismatch");
  long right = 0, total = 0;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    for (int pos : data.function_positions[i]) {
      if (pos == 0) continue;
      ++total;
      right += trees[i].node(trees[i].parent(pos)).left == pos ? 1 : 0;
    }
  }
  return total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
}

}  // namespace vgnsl
