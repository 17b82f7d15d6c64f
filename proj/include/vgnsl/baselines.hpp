#pragma once

// Non-neural comparison parsers: trivial trees, PMI syntactic distances,
// and greedy merging by word concreteness.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vgnsl/corpus.hpp"
#include "vgnsl/parser.hpp"
#include "vgnsl/rng.hpp"
#include "vgnsl/trees.hpp"
#include "vgnsl/vse.hpp"

namespace vgnsl {

enum class TrivialKind { kLeft, kRight, kRandom };

// Random trees merge a uniformly chosen adjacent pair until one remains.
inline BinaryTree trivial_tree(int n, TrivialKind kind, Rng& rng) {
  switch (kind) {
    case TrivialKind::kLeft:
      return BinaryTree::left_branching(n);
    case TrivialKind::kRight:
      return BinaryTree::right_branching(n);
    case TrivialKind::kRandom:
      break;
  }
  BinaryTree t(n);
  std::vector<int> frontier(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) frontier[static_cast<std::size_t>(i)] = i;
  while (frontier.size() > 1) {
    const auto j = static_cast<std::size_t>(rng.below(frontier.size() - 1));
    frontier[j] = t.merge(frontier[j], frontier[j + 1]);
    for (std::size_t k = j + 1; k + 1 < frontier.size(); ++k) frontier[k] = frontier[k + 1];
    frontier.pop_back();
  }
  return t;
}

// Unigram and within-sentence adjacent-bigram counts.
struct PmiStats {
  std::unordered_map<std::string, long> unigrams;
  std::map<std::pair<std::string, std::string>, long> bigrams;
  long tokens = 0;
  long gaps = 0;
  double smoothing = 1.0;  // add-k pseudo-count on bigrams

  static PmiStats build(std::span<const Tokens> captions, double smoothing = 1.0) {
    if (smoothing < 0) throw ConfigError("PMI smoothing must be non-negative");
    PmiStats s;
    s.smoothing = smoothing;
    for (const auto& c : captions) {
      for (std::size_t i = 0; i < c.size(); ++i) {
        ++s.unigrams[c[i]];
        ++s.tokens;
        if (i + 1 < c.size()) {
          ++s.bigrams[{c[i], c[i + 1]}];
          ++s.gaps;
        }
      }
    }
    if (s.tokens == 0) throw ShapeError("PMI statistics need a nonempty corpus");
    return s;
  }

  long unigram(const std::string& w) const {
    auto it = unigrams.find(w);
    return it == unigrams.end() ? 0 : it->second;
  }
  long bigram(const std::string& a, const std::string& b) const {
    auto it = bigrams.find({a, b});
    return it == bigrams.end() ? 0 : it->second;
  }

  // log p(a, b) - log p(a) - log p(b). Bigram probabilities are add-k
  // smoothed over all V^2 type pairs; an unseen word is given count k.
  double pmi(const std::string& a, const std::string& b) const {
    const double k = smoothing;
    const double v = static_cast<double>(unigrams.size());
    const double joint = (static_cast<double>(bigram(a, b)) + k) /
                         (static_cast<double>(gaps) + k * v * v);
    auto marginal = [&](const std::string& w) {
      const long c = unigram(w);
      return (c > 0 ? static_cast<double>(c) : k) / static_cast<double>(tokens);
    };
    const double pa = marginal(a);
    const double pb = marginal(b);
    if (!(joint > 0) || !(pa > 0) || !(pb > 0))
      throw DegenerateInput("PMI of unseen pair '" + a + " " + b + "' without smoothing");
    return std::log(joint) - std::log(pa) - std::log(pb);
  }
};

// d_j = -PMI(w_j, w_{j+1}); empty for a one-token caption.
inline std::vector<double> pmi_distances(const PmiStats& stats, const Tokens& caption) {
  std::vector<double> d;
  for (std::size_t j = 0; j + 1 < caption.size(); ++j) d.push_back(-stats.pmi(caption[j], caption[j + 1]));
  return d;
}

namespace detail {
inline int distance_split(BinaryTree& t, std::span<const double> d, int left, int right) {
  if (left == right) return left;
  int p = left;
  for (int j = left + 1; j < right; ++j)
    if (d[static_cast<std::size_t>(j)] > d[static_cast<std::size_t>(p)]) p = j;
  const int l = distance_split(t, d, left, p);
  const int r = distance_split(t, d, p + 1, right);
  return t.merge(l, r);
}
}  // namespace detail

// Top-down: split the span at its largest gap distance (leftmost on ties)
// and recurse on both halves. distances[j] sits between tokens j and j+1.
inline BinaryTree distance_parse(std::span<const double> distances, int m) {
  if (m < 1) throw ShapeError("distance_parse: empty sentence");
  if (static_cast<int>(distances.size()) != m - 1)
    throw ShapeError("distance_parse: expected " + std::to_string(m - 1) + " distances, got " +
                     std::to_string(distances.size()));
  if (!all_finite(distances)) throw DegenerateInput("distance_parse: non-finite distance");
  BinaryTree t(m);
  detail::distance_split(t, distances, 0, m - 1);
  return t;
}

// Affine map of the known scores onto [-1, 1] (min -> -1, max -> 1);
// a constant caption maps to 0 and unknown words get -1. With log_first the
// raw scores are log-transformed before scaling.
inline std::vector<double> normalize_scores(std::span<const std::optional<double>> raw,
                                            bool log_first = false) {
  std::vector<double> vals;
  for (const auto& r : raw) {
    if (!r) continue;
    double x = *r;
    if (log_first) {
      if (!(x > 0)) throw DegenerateInput("log preprocessing needs positive scores");
      x = std::log(x);
    }
    if (!std::isfinite(x)) throw DegenerateInput("non-finite concreteness score");
    vals.push_back(x);
  }
  std::vector<double> out;
  out.reserve(raw.size());
  if (vals.empty()) {
    out.assign(raw.size(), -1.0);
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::size_t next = 0;
  for (const auto& r : raw) {
    if (!r) {
      out.push_back(-1.0);
      continue;
    }
    const double x = vals[next++];
    out.push_back(hi > lo ? 2.0 * (x - (hi + lo) / 2.0) / (hi - lo) : 0.0);
  }
  return out;
}

// Bottom-up: merge the adjacent pair maximizing a_j + tau * a_{j+1}
// (leftmost on ties); the merged constituent scores the mean of its halves.
inline BinaryTree concreteness_parse(std::span<const double> scores, double tau = 20.0) {
  const int m = static_cast<int>(scores.size());
  if (m < 1) throw ShapeError("concreteness_parse: empty sentence");
  if (!all_finite(scores)) throw DegenerateInput("concreteness_parse: non-finite score");
  BinaryTree t(m);
  std::vector<double> a(scores.begin(), scores.end());
  std::vector<int> frontier(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) frontier[static_cast<std::size_t>(i)] = i;
  while (a.size() > 1) {
    std::size_t p = 0;
    double best = a[0] + tau * a[1];
    for (std::size_t j = 1; j + 1 < a.size(); ++j) {
      const double v = a[j] + tau * a[j + 1];
      if (v > best) {
        best = v;
        p = j;
      }
    }
    frontier[p] = t.merge(frontier[p], frontier[p + 1]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(p) + 1);
    a[p] = (a[p] + a[p + 1]) / 2.0;
    a.erase(a.begin() + static_cast<std::ptrdiff_t>(p) + 1);
  }
  return t;
}

// Word -> concreteness score; words not in the table are unknown.
struct ConcretenessTable {
  std::map<std::string, double> scores;

  std::optional<double> find(const std::string& w) const {
    auto it = scores.find(w);
    if (it == scores.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::optional<double>> lookup(const Tokens& caption) const {
    std::vector<std::optional<double>> out;
    for (const auto& w : caption) out.push_back(find(w));
    return out;
  }
};

// "word<TAB>score" per line.
inline ConcretenessTable read_concreteness_table(const std::string& path) {
  ConcretenessTable t;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(i + 1) + ": expected word<TAB>score", 0);
    double v;
    try {
      std::size_t used = 0;
      const std::string num = lines[i].substr(tab + 1);
      v = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": bad score", tab + 1);
    }
    if (!std::isfinite(v)) throw ParseError(path + ":" + std::to_string(i + 1) + ": non-finite score", tab + 1);
    t.scores[lines[i].substr(0, tab)] = v;
  }
  return t;
}

inline std::string format_concreteness_table(const ConcretenessTable& t) {
  std::string out;
  char buf[64];
  for (const auto& [w, v] : t.scores) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += w;
    out += '\t';
    out += buf;
    out += '\n';
  }
  return out;
}

// The k most frequent words (ties lexicographic).
inline std::vector<std::string> most_frequent_words(std::span<const Tokens> captions, std::size_t k) {
  std::map<std::string, long> counts;
  for (const auto& c : captions)
    for (const auto& w : c) ++counts[w];
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

inline ConcretenessTable restrict_table(const ConcretenessTable& t, std::span<const std::string> words) {
  ConcretenessTable out;
  for (const auto& w : words)
    if (auto v = t.find(w)) out.scores[w] = *v;
  return out;
}

// Mean concreteness of each in-vocabulary word's embedding over all of its
// occurrences, each scored against its own caption's image with the other
// captions of its (unshuffled) batch as negatives. Negative constituents
// come from greedy parses.
template <class T>
ConcretenessTable export_word_concreteness(const ModelParams<T>& p, const Corpus& corpus,
                                           const VseHyper& hyper, int batch_size,
                                           bool include_leaves = true) {
  std::map<std::string, std::pair<double, long>> acc;
  const auto groups = batches(corpus.examples.size(), batch_size, 0, false, 0, false);
  for (const auto& group : groups) {
    std::vector<std::vector<Vec<T>>> node_vecs, matched;
    std::vector<std::span<const float>> feats;
    for (int ex_id : group) {
      const auto& ex = corpus.examples[static_cast<std::size_t>(ex_id)];
      auto parsed = parse_greedy<T>(ex.caption.ids, p);
      std::vector<Vec<T>> m;
      for (int id : matched_nodes(parsed.tree, include_leaves))
        m.push_back(parsed.vectors[static_cast<std::size_t>(id)]);
      node_vecs.push_back(std::move(parsed.vectors));
      matched.push_back(std::move(m));
      feats.push_back(corpus.feature(ex));
    }
    const auto mb = MatchBatch<T>::build(std::move(matched), feats, p);
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto& cap = corpus.examples[static_cast<std::size_t>(group[i])].caption;
      for (std::size_t pos = 0; pos < cap.tokens.size(); ++pos) {
        if (cap.ids[pos] == corpus.vocab.unk_id()) continue;
        const T c = concreteness<T>(node_vecs[i][pos], i, mb, hyper);
        auto& slot = acc[corpus.vocab.word(cap.ids[pos])];
        slot.first += static_cast<double>(c);
        ++slot.second;
      }
    }
  }
  ConcretenessTable out;
  for (const auto& [w, sn] : acc) out.scores[w] = sn.first / static_cast<double>(sn.second);
  return out;
}

}  // namespace vgnsl
