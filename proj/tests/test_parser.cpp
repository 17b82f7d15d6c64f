#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "vgnsl/parser.hpp"

using namespace vgnsl;

namespace {

ModelParams<double> small_model(std::size_t vocab, std::size_t d, std::size_t h, std::uint64_t seed) {
  return init_params<double>({vocab, d, h, 3}, seed);
}

// w2 . relu(b1 + W1^T [x; y]) + b2, written out longhand.
double reference_score(const Vec<double>& x, const Vec<double>& y, const ModelParams<double>& p) {
  const std::size_t d = x.size();
  double s = p.b2.data[0];
  for (std::size_t c = 0; c < p.hidden_dim(); ++c) {
    double a = p.b1.data[c];
    for (std::size_t q = 0; q < d; ++q) a += x[q] * p.w1(q, c) + y[q] * p.w1(d + q, c);
    s += p.w2.data[c] * std::max(a, 0.0);
  }
  return s;
}

Vec<double> unit_sum(const Vec<double>& a, const Vec<double>& b) {
  Vec<double> s(a.size());
  double n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s[i] = a[i] + b[i];
    n += s[i] * s[i];
  }
  for (auto& x : s) x /= std::sqrt(n);
  return s;
}

// log-probability of every merge sequence (as a string of chosen indices).
void enumerate(std::vector<Vec<double>> frontier, const ModelParams<double>& p, std::string seq,
               double logp, std::map<std::string, double>& out) {
  if (frontier.size() == 1) {
    out[seq] = logp;
    return;
  }
  std::vector<double> s;
  for (std::size_t j = 0; j + 1 < frontier.size(); ++j) s.push_back(reference_score(frontier[j], frontier[j + 1], p));
  double mx = *std::max_element(s.begin(), s.end());
  double z = 0;
  for (double v : s) z += std::exp(v - mx);
  for (std::size_t j = 0; j < s.size(); ++j) {
    auto next = frontier;
    next[j] = unit_sum(frontier[j], frontier[j + 1]);
    next.erase(next.begin() + static_cast<long>(j) + 1);
    enumerate(next, p, seq + static_cast<char>('0' + j), logp + s[j] - mx - std::log(z), out);
  }
}

}  // namespace

TEST(EmbedTokens, NormalizesRows) {
  auto p = ModelParams<double>::zeros({3, 4, 2, 2});
  p.embedding(1, 0) = 3;
  p.embedding(1, 1) = 4;
  p.embedding(0, 2) = 1;
  const auto v = embed_token(1, p);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  EXPECT_EQ(v[2], 0.0);
  const Vocabulary vocab = Vocabulary::from_words(std::vector<std::string>{"cat", "dog"});
  const std::vector<int> ids{vocab.lookup("zebra")};
  EXPECT_EQ(embed_tokens<double>(ids, p)[0], embed_token(0, p));
  EXPECT_THROW(embed_token(2, p), DegenerateInput);
  p.normalize_leaves = false;
  EXPECT_DOUBLE_EQ(embed_token(1, p)[1], 4.0);
}

TEST(ScorePairs, ZeroNetworkAndShapes) {
  auto p = ModelParams<double>::zeros({2, 3, 4, 2});
  const std::vector<Vec<double>> xs{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(score_pairs<double>(xs, p), (Vec<double>{0, 0}));
  EXPECT_EQ(score_pairs<double>(std::span(xs).first(2), p).size(), 1u);
  EXPECT_THROW(score_pairs<double>(std::span(xs).first(1), p), ShapeError);
}

TEST(ScorePairs, HandSetSingleHiddenUnit) {
  auto p = ModelParams<double>::zeros({1, 2, 1, 1});
  // pre = 0.5 x0 - 1 x1 + 2 y0 + 0.25 y1 + 0.1 ; score = 3 relu(pre) - 0.7
  p.w1.data = {0.5, -1.0, 2.0, 0.25};
  p.b1.data = {0.1};
  p.w2.data = {3.0};
  p.b2.data = {-0.7};
  const std::vector<Vec<double>> xs{{0.6, 0.8}, {-0.8, 0.6}, {1.0, 0.0}};
  const auto s = score_pairs<double>(xs, p);
  const double pre0 = 0.5 * 0.6 - 1.0 * 0.8 + 2.0 * -0.8 + 0.25 * 0.6 + 0.1;  // < 0
  const double pre1 = 0.5 * -0.8 - 1.0 * 0.6 + 2.0 * 1.0 + 0.25 * 0.0 + 0.1;
  EXPECT_DOUBLE_EQ(s[0], 3.0 * std::max(pre0, 0.0) - 0.7);
  EXPECT_DOUBLE_EQ(s[1], 3.0 * std::max(pre1, 0.0) - 0.7);
}

TEST(SelectPair, GreedyIsLeftmostArgmax) {
  Rng rng(1);
  EXPECT_EQ(select_pair<double>(Vec<double>{1, 5, 1}, SelectMode::kGreedy, rng).index, 1);
  EXPECT_EQ(select_pair<double>(Vec<double>{2, 2}, SelectMode::kGreedy, rng).index, 0);
  const auto s = select_pair<double>(Vec<double>{0, std::log(3.0)}, SelectMode::kGreedy, rng);
  EXPECT_NEAR(s.log_prob, std::log(0.75), 1e-12);
  EXPECT_THROW(select_pair<double>(Vec<double>{0, NAN}, SelectMode::kSample, rng), DegenerateInput);
  EXPECT_THROW(select_pair<double>(Vec<double>{}, SelectMode::kSample, rng), ShapeError);
}

// Pearson chi-square goodness of fit at p = 0.001.
TEST(SelectPair, SamplingMatchesSoftmax) {
  struct Case {
    Vec<double> scores;
    double critical;  // chi-square quantile 0.999 for k-1 degrees of freedom
  };
  const std::vector<Case> cases{{{0, 0, 0}, 13.816}, {{0.3, -1.2, 2.0, 0.5}, 16.266}, {{1, 5, 1}, 13.816}};
  for (const auto& c : cases) {
    Rng rng(derive_seed(42, {c.scores.size()}));
    const int draws = 100000;
    std::vector<int> hits(c.scores.size(), 0);
    for (int t = 0; t < draws; ++t) ++hits[static_cast<std::size_t>(select_pair<double>(c.scores, SelectMode::kSample, rng).index)];
    const auto logp = log_softmax<double>(c.scores);
    double chi2 = 0;
    for (std::size_t j = 0; j < hits.size(); ++j) {
      const double expect = draws * std::exp(logp[j]);
      chi2 += (hits[j] - expect) * (hits[j] - expect) / expect;
    }
    EXPECT_LT(chi2, c.critical);
  }
}

TEST(Combine, Examples) {
  const auto a = combine<double>(Vec<double>{1, 0}, Vec<double>{0, 1});
  EXPECT_NEAR(a[0], 0.70710678, 1e-8);
  EXPECT_NEAR(a[1], 0.70710678, 1e-8);
  const auto b = combine<double>(Vec<double>{3, 0}, Vec<double>{0, 4});
  EXPECT_DOUBLE_EQ(b[0], 0.6);
  EXPECT_DOUBLE_EQ(b[1], 0.8);
  EXPECT_THROW(combine<double>(Vec<double>{1, -2}, Vec<double>{-1, 2}), DegenerateInput);
}

TEST(Parse, SingleToken) {
  const auto p = small_model(3, 4, 2, 0);
  Rng rng(0);
  const std::vector<int> ids{1};
  const auto r = parse<double>(ids, p, SelectMode::kSample, rng);
  EXPECT_EQ(r.tree.num_nodes(), 1);
  EXPECT_TRUE(r.trace.steps.empty());
  EXPECT_EQ(r.vectors.size(), 1u);
}

TEST(Parse, ZeroNetworkIsLeftBranching) {
  auto p = small_model(5, 4, 3, 1);
  p.w1.zero();
  p.w2.zero();
  for (int n = 1; n <= 8; ++n) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(1 + i % 4);
    EXPECT_EQ(parse_greedy<double>(ids, p).tree, BinaryTree::left_branching(n));
  }
}

TEST(Parse, HandCraftedScorerPicksMiddlePair) {
  auto p = ModelParams<double>::zeros({3, 2, 1, 1});
  p.embedding.data = {1, 1, 1, 0, 0, 1};  // <unk>, a = e1, b = e2
  p.w1.data = {-1, 0, 0, 1};              // pre = -x0 + y1
  p.w2.data = {1};
  const std::vector<int> ids{1, 2, 2};    // a b b
  // (a, b): -1 + 1 = 0 ; (b, b): 0 + 1 = 1
  const auto xs = embed_tokens<double>(ids, p);
  EXPECT_EQ(score_pairs<double>(xs, p), (Vec<double>{0, 1}));
  const auto r = parse_greedy<double>(ids, p);
  BinaryTree expected(3);
  expected.merge(0, expected.merge(1, 2));
  EXPECT_EQ(r.tree, expected);
  EXPECT_EQ(r.trace.steps[0].index, 1);
}

TEST(Parse, TraceAndVectorsAreConsistent) {
  const auto p = small_model(20, 6, 5, 3);
  Rng rng(7);
  for (int n = 1; n <= 15; ++n) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.below(20)));
    const auto r = parse<double>(ids, p, SelectMode::kSample, rng);
    ASSERT_EQ(static_cast<int>(r.trace.steps.size()), n - 1);
    ASSERT_EQ(static_cast<int>(r.vectors.size()), 2 * n - 1);
    for (int id = n; id < 2 * n - 1; ++id) EXPECT_NEAR(norm2<double>(r.vectors[static_cast<std::size_t>(id)]), 1.0, 1e-6);
    for (const auto& st : r.trace.steps) {
      EXPECT_LE(st.log_prob, 0.0);
      EXPECT_TRUE(std::isfinite(st.log_prob));
      EXPECT_EQ(r.tree.node(st.node).span, st.span);
    }
    const auto again = constituent_vectors<double>(r.tree, ids, p);
    for (std::size_t i = 0; i < again.size(); ++i)
      for (std::size_t k = 0; k < again[i].size(); ++k) EXPECT_NEAR(again[i][k], r.vectors[i][k], 1e-12);
  }
}

TEST(Parse, GreedyIsDeterministic) {
  const auto p = small_model(10, 8, 4, 5);
  const std::vector<int> ids{1, 4, 2, 9, 3, 3, 7};
  EXPECT_EQ(parse_greedy<double>(ids, p).tree, parse_greedy<double>(ids, p).tree);
}

TEST(Parse, TraceLogProbMatchesEnumeration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = small_model(8, 4, 3, seed);
    for (auto& x : p.w2.data) x *= 4;  // sharpen the policy away from uniform
    for (int n = 2; n <= 4; ++n) {
      std::vector<int> ids;
      for (int i = 0; i < n; ++i) ids.push_back(1 + static_cast<int>((seed + 3 * static_cast<std::uint64_t>(i)) % 7));
      std::map<std::string, double> table;
      enumerate(embed_tokens<double>(ids, p), p, "", 0.0, table);
      double total = 0;
      for (const auto& [seq, lp] : table) total += std::exp(lp);
      EXPECT_NEAR(total, 1.0, 1e-12);
      Rng rng(seed * 31 + static_cast<std::uint64_t>(n));
      for (int rep = 0; rep < 20; ++rep) {
        const auto r = parse<double>(ids, p, SelectMode::kSample, rng);
        std::string seq;
        for (const auto& st : r.trace.steps) seq += static_cast<char>('0' + st.index);
        ASSERT_TRUE(table.count(seq));
        EXPECT_NEAR(r.trace.total_log_prob(), table[seq], 1e-12);
      }
    }
  }
}

TEST(Model, InitIsSeededAndConsistent) {
  const auto a = init_params<float>({10, 8, 4, 6}, 3);
  const auto b = init_params<float>({10, 8, 4, 6}, 3);
  const auto c = init_params<float>({10, 8, 4, 6}, 4);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  a.check_consistent();
  for (float x : a.embedding.data) EXPECT_LE(std::fabs(x), 0.1f);
  for (float x : a.b1.data) EXPECT_EQ(x, 0.0f);
}

TEST(Model, PretrainedPrefixIsFrozenExceptUnknown) {
  auto p = init_params<float>({3, 5, 2, 2}, 0);
  const auto vocab = Vocabulary::from_words(std::vector<std::string>{"cat", "dog"});
  std::unordered_map<std::string, std::vector<float>> vecs{{"cat", {1, 2, 3}}};
  EXPECT_EQ(install_pretrained(p, vocab, vecs), 1u);
  EXPECT_EQ(p.frozen_columns, 3u);
  EXPECT_EQ(p.embedding(1, 2), 3.0f);
  EXPECT_TRUE(p.is_frozen(1, 0));
  EXPECT_TRUE(p.is_frozen(2, 2));
  EXPECT_FALSE(p.is_frozen(1, 3));
  EXPECT_FALSE(p.is_frozen(0, 0));
  std::unordered_map<std::string, std::vector<float>> too_wide{{"cat", {1, 2, 3, 4, 5}}};
  EXPECT_THROW(install_pretrained(p, vocab, too_wide), ShapeError);
}
