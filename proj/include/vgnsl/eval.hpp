#pragma once

// Corpus-level bracket scoring, per-label recall, run-to-run agreement,
// agreement-driven checkpoint selection and Pearson correlation.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vgnsl/rng.hpp"
#include "vgnsl/trees.hpp"

namespace vgnsl {

inline constexpr int kReportSchemaVersion = 1;

struct BracketCounts {
  long matched = 0;
  long predicted = 0;
  long gold = 0;
};

struct EvalReport {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::map<std::string, double> per_label;  // NaN when the label never occurs
  long n_sentences = 0;
  BracketCounts counts;

  nlohmann::json to_json() const {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [k, v] : per_label) labels[k] = std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
    return {{"schema_version", kReportSchemaVersion},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"per_label", labels},
            {"n_sentences", n_sentences},
            {"matched", counts.matched},
            {"predicted", counts.predicted},
            {"gold", counts.gold}};
  }
};

// Micro-averaged: counts are summed over the corpus before dividing. A
// corpus with no brackets on either side scores 1.
inline EvalReport report_from_counts(const BracketCounts& c, long sentences) {
  EvalReport r;
  r.counts = c;
  r.n_sentences = sentences;
  if (c.predicted == 0 && c.gold == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = c.predicted ? static_cast<double>(c.matched) / static_cast<double>(c.predicted) : 0.0;
  r.recall = c.gold ? static_cast<double>(c.matched) / static_cast<double>(c.gold) : 0.0;
  r.f1 = 2.0 * static_cast<double>(c.matched) / static_cast<double>(c.predicted + c.gold);
  return r;
}

inline void add_counts(BracketCounts& c, const SpanSet& pred, const SpanSet& gold) {
  c.predicted += static_cast<long>(pred.size());
  c.gold += static_cast<long>(gold.size());
  for (const auto& s : pred) c.matched += static_cast<long>(gold.count(s));
}

inline EvalReport corpus_f1(std::span<const SpanSet> pred, std::span<const SpanSet> gold) {
  if (pred.size() != gold.size())
    throw ShapeError("corpus_f1: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gold.size()) + " gold sentences");
  BracketCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) add_counts(c, pred[i], gold[i]);
  return report_from_counts(c, static_cast<long>(pred.size()));
}

namespace detail {
inline void check_lengths(int a, int b, std::size_t line) {
  if (a != b)
    throw ShapeError("line " + std::to_string(line + 1) + ": token counts differ (" +
                     std::to_string(a) + " vs " + std::to_string(b) + ")");
}
}  // namespace detail

inline EvalReport corpus_f1(std::span<const BinaryTree> pred, std::span<const LabeledTree> gold,
                            SpanPolicy policy = SpanPolicy::kNonTrivial) {
  if (pred.size() != gold.size())
    throw ShapeError("corpus_f1: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gold.size()) + " gold sentences");
  BracketCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::check_lengths(pred[i].num_leaves(), leaf_count(gold[i]), i);
    add_counts(c, spans_of(pred[i], policy), spans_of(gold[i], policy));
  }
  return report_from_counts(c, static_cast<long>(pred.size()));
}

inline EvalReport corpus_f1(std::span<const BinaryTree> pred, std::span<const BinaryTree> gold,
                            SpanPolicy policy = SpanPolicy::kNonTrivial) {
  if (pred.size() != gold.size())
    throw ShapeError("corpus_f1: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(gold.size()) + " sentences");
  BracketCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::check_lengths(pred[i].num_leaves(), gold[i].num_leaves(), i);
    add_counts(c, spans_of(pred[i], policy), spans_of(gold[i], policy));
  }
  return report_from_counts(c, static_cast<long>(pred.size()));
}

// Fraction of gold constituents labeled `label` (single tokens included)
// whose span is a constituent of the prediction; NaN if there are none.
inline double label_recall(std::span<const BinaryTree> pred, std::span<const LabeledTree> gold,
                           const std::string& label) {
  if (pred.size() != gold.size()) throw ShapeError("label_recall: corpus sizes differ");
  long hit = 0;
  long total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::check_lengths(pred[i].num_leaves(), leaf_count(gold[i]), i);
    const auto have = pred[i].all_spans();
    for (const auto& s : labeled_spans(gold[i], label)) {
      ++total;
      hit += static_cast<long>(have.count(s));
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total)
               : std::numeric_limits<double>::quiet_NaN();
}

inline EvalReport evaluate(std::span<const BinaryTree> pred, std::span<const LabeledTree> gold,
                           std::span<const std::string> labels,
                           SpanPolicy policy = SpanPolicy::kNonTrivial) {
  EvalReport r = corpus_f1(pred, gold, policy);
  for (const auto& l : labels) r.per_label[l] = label_recall(pred, gold, l);
  return r;
}

using RunTrees = std::vector<BinaryTree>;

// Mean corpus F1 over all unordered pairs of runs.
inline double self_f1(std::span<const RunTrees> runs, SpanPolicy policy = SpanPolicy::kNonTrivial) {
  if (runs.size() < 2) throw ShapeError("self_f1 needs at least two runs");
  double sum = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t k = i + 1; k < runs.size(); ++k) {
      sum += corpus_f1(runs[i], runs[k], policy).f1;
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

// grid[run][checkpoint] = predicted trees of that checkpoint.
using CheckpointGrid = std::vector<std::vector<RunTrees>>;

// pairwise[i][k][a][b] = F1 between run i checkpoint a and run k checkpoint b, i < k.
class PairwiseF1 {
 public:
  PairwiseF1(const CheckpointGrid& grid, SpanPolicy policy) : n_(grid.size()) {
    if (grid.empty()) throw ShapeError("checkpoint grid is empty");
    for (const auto& run : grid)
      if (run.empty()) throw ShapeError("checkpoint grid has a run without checkpoints");
    table_.resize(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = i + 1; k < n_; ++k) {
        auto& t = table_[i * n_ + k];
        t.assign(grid[i].size(), std::vector<double>(grid[k].size()));
        for (std::size_t a = 0; a < grid[i].size(); ++a)
          for (std::size_t b = 0; b < grid[k].size(); ++b)
            t[a][b] = corpus_f1(grid[i][a], grid[k][b], policy).f1;
      }
    for (const auto& run : grid) sizes_.push_back(run.size());
  }

  double operator()(std::size_t i, std::size_t a, std::size_t k, std::size_t b) const {
    return i < k ? table_[i * n_ + k][a][b] : table_[k * n_ + i][b][a];
  }
  std::size_t runs() const noexcept { return n_; }
  std::size_t checkpoints(std::size_t run) const { return sizes_[run]; }

  double total(std::span<const int> pick) const {
    double s = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = i + 1; k < n_; ++k)
        s += (*this)(i, static_cast<std::size_t>(pick[i]), k, static_cast<std::size_t>(pick[k]));
    return s;
  }

 private:
  std::size_t n_;
  std::vector<std::vector<std::vector<double>>> table_;
  std::vector<std::size_t> sizes_;
};

// Sum over run pairs of the best agreement between checkpoints whose
// indices differ by less than `window`; nullopt means no window.
inline double tune_objective(const PairwiseF1& f1, std::optional<int> window = 2) {
  if (window && *window < 1) throw ConfigError("agreement window must be >= 1");
  if (f1.runs() < 2) throw ShapeError("tune_objective needs at least two runs");
  double total = 0;
  for (std::size_t i = 0; i < f1.runs(); ++i)
    for (std::size_t k = i + 1; k < f1.runs(); ++k) {
      double best = -1;
      for (std::size_t a = 0; a < f1.checkpoints(i); ++a)
        for (std::size_t b = 0; b < f1.checkpoints(k); ++b) {
          const long gap = std::labs(static_cast<long>(a) - static_cast<long>(b));
          if (window && gap >= *window) continue;
          best = std::max(best, f1(i, a, k, b));
        }
      if (best < 0) throw ShapeError("no checkpoint pair falls inside the agreement window");
      total += best;
    }
  return total;
}

inline double tune_objective(const CheckpointGrid& grid, std::optional<int> window = 2,
                             SpanPolicy policy = SpanPolicy::kNonTrivial) {
  return tune_objective(PairwiseF1(grid, policy), window);
}

inline constexpr double kExhaustiveSelectionLimit = 1e5;

// Checkpoint index per run maximizing the summed pairwise F1. Exhaustive
// (first maximal tuple in lexicographic order) for small grids; otherwise
// coordinate ascent from the best-pair start plus random restarts.
inline std::vector<int> select_checkpoints(const PairwiseF1& f1, std::uint64_t seed = 0,
                                           int restarts = 10) {
  const std::size_t n = f1.runs();
  double tuples = 1;
  for (std::size_t i = 0; i < n; ++i) tuples *= static_cast<double>(f1.checkpoints(i));
  std::vector<int> pick(n, 0);
  if (n < 2) return pick;

  if (tuples <= kExhaustiveSelectionLimit) {
    std::vector<int> best = pick;
    double best_score = f1.total(pick);
    for (;;) {
      std::size_t pos = n;
      while (pos > 0) {
        --pos;
        if (static_cast<std::size_t>(++pick[pos]) < f1.checkpoints(pos)) break;
        pick[pos] = 0;
        if (pos == 0) return best;
      }
      const double s = f1.total(pick);
      if (s > best_score) {
        best_score = s;
        best = pick;
      }
    }
  }

  auto ascend = [&](std::vector<int> cur) {
    double cur_score = f1.total(cur);
    for (bool improved = true; improved;) {
      improved = false;
      for (std::size_t i = 0; i < n; ++i) {
        int keep = cur[i];
        for (std::size_t a = 0; a < f1.checkpoints(i); ++a) {
          cur[i] = static_cast<int>(a);
          const double s = f1.total(cur);
          if (s > cur_score) {
            cur_score = s;
            keep = cur[i];
            improved = true;
          }
        }
        cur[i] = keep;
      }
    }
    return std::make_pair(cur, cur_score);
  };

  // Start from the single best agreeing pair of runs 0 and 1.
  std::vector<int> start(n, 0);
  double best_pair = -1;
  for (std::size_t a = 0; a < f1.checkpoints(0); ++a)
    for (std::size_t b = 0; b < f1.checkpoints(1); ++b)
      if (f1(0, a, 1, b) > best_pair) {
        best_pair = f1(0, a, 1, b);
        start[0] = static_cast<int>(a);
        start[1] = static_cast<int>(b);
      }
  auto [best, best_score] = ascend(start);
  Rng rng(derive_seed(seed, {0x5E1EC7ULL}));
  for (int r = 0; r < restarts; ++r) {
    std::vector<int> init(n);
    for (std::size_t i = 0; i < n; ++i) init[i] = static_cast<int>(rng.below(f1.checkpoints(i)));
    auto [cand, score] = ascend(init);
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  return best;
}

inline std::vector<int> select_checkpoints(const CheckpointGrid& grid,
                                           SpanPolicy policy = SpanPolicy::kNonTrivial,
                                           std::uint64_t seed = 0) {
  return select_checkpoints(PairwiseF1(grid, policy), seed);
}

// Sample Pearson correlation coefficient.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw ShapeError("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw DegenerateInput("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace vgnsl
