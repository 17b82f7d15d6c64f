#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <random>

#include "test_util.hpp"
#include "vgnsl/corpus.hpp"

using namespace vgnsl;

TEST(BuildVocab, AllWordsFit) {
  const std::vector<Tokens> caps{{"a", "a", "b"}};
  const auto v = build_vocab(caps, 10);
  EXPECT_EQ(v.size(), 3);
  EXPECT_EQ(v.words(), (std::vector<std::string>{"<unk>", "a", "b"}));
}

TEST(BuildVocab, TieBrokenLexicographically) {
  const std::vector<Tokens> caps{{"a", "a", "c", "b"}};
  const auto v = build_vocab(caps, 2);
  EXPECT_EQ(v.words(), (std::vector<std::string>{"<unk>", "a", "b"}));
  EXPECT_EQ(v.lookup("c"), v.unk_id());
}

TEST(BuildVocab, FrequencyOracleOnRandomCorpora) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tokens> caps(20);
    std::map<std::string, int> freq;
    for (auto& c : caps)
      for (int i = 0; i < 5; ++i) {
        const std::string w(1, static_cast<char>('a' + rng() % 12));
        c.push_back(w);
        ++freq[w];
      }
    const int max_size = 1 + static_cast<int>(rng() % 10);
    const int min_count = 1 + static_cast<int>(rng() % 4);
    // Rank by (-count, word) by exhaustive comparison.
    std::vector<std::string> expected;
    std::vector<std::pair<int, std::string>> order;
    for (const auto& [w, n] : freq) order.emplace_back(-n, w);
    std::sort(order.begin(), order.end());
    for (const auto& [neg, w] : order)
      if (-neg >= min_count && static_cast<int>(expected.size()) < max_size) expected.push_back(w);
    const auto v = build_vocab(caps, max_size, min_count);
    ASSERT_EQ(v.size(), static_cast<int>(expected.size()) + 1);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(v.word(static_cast<int>(i) + 1), expected[i]);
  }
}

TEST(BuildVocab, EmptyInputIsAnError) {
  testutil::TempDir dir;
  const auto path = dir.write("empty.txt", "");
  const auto caps = read_captions(path);
  EXPECT_THROW(build_vocab(caps), ShapeError);
}

TEST(Vocabulary, LookupIsTotal) {
  const auto v = Vocabulary::from_words(std::vector<std::string>{"x", "y"});
  EXPECT_EQ(v.lookup("x"), 1);
  EXPECT_EQ(v.lookup("zzz"), 0);
  EXPECT_EQ(v.lookup(""), 0);
  EXPECT_EQ(v.lookup("<unk>"), 0);
}

TEST(ReadCaptions, SplitsOnSingleSpaces) {
  testutil::TempDir dir;
  const auto path = dir.write("c.txt", "a cat  sits\r\nthe dog\n");
  const auto caps = read_captions(path);
  ASSERT_EQ(caps.size(), 2u);
  EXPECT_EQ(caps[0], (Tokens{"a", "cat", "sits"}));
  EXPECT_EQ(caps[1], (Tokens{"the", "dog"}));
  EXPECT_THROW(read_captions(dir.write("bad.txt", "a\n\nb\n")), ShapeError);
  EXPECT_THROW(read_captions(dir.file("missing.txt")), IoError);
}

TEST(Features, DecodesHandWrittenFile) {
  std::string bytes = "VGNF";
  auto u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  };
  u32(1);
  u32(1);
  u32(2);
  u32(std::bit_cast<std::uint32_t>(1.0f));
  u32(std::bit_cast<std::uint32_t>(2.0f));
  const auto f = decode_features(bytes);
  EXPECT_EQ(f.count(), 1u);
  EXPECT_EQ(f.dim, 2u);
  EXPECT_EQ(f.values, (std::vector<float>{1.0f, 2.0f}));
}

TEST(Features, RoundTripIsBitExact) {
  testutil::TempDir dir;
  std::mt19937 rng(9);
  std::normal_distribution<float> g(0.0f, 100.0f);
  FeatureSet f;
  f.dim = 7;
  for (int i = 0; i < 100 * 7; ++i) f.values.push_back(g(rng));
  f.values[3] = -0.0f;
  f.values[4] = std::numeric_limits<float>::denorm_min();
  const auto path = dir.file("f.vgnf");
  write_features(path, f);
  const auto back = load_features(path);
  ASSERT_EQ(back.values.size(), f.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), f.values.data(), 4 * f.values.size()), 0);
  EXPECT_EQ(back.dim, 7u);
}

TEST(Features, RejectsCorruptFiles) {
  FeatureSet f;
  f.dim = 2;
  f.values = {1, 2, 3, 4};
  const auto good = encode_features(f);
  EXPECT_THROW(decode_features(good.substr(0, good.size() - 8)), FormatError);  // count 2, payload 1
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_features(magic), FormatError);
  std::string version = good;
  version[4] = 2;
  EXPECT_THROW(decode_features(version), FormatError);
  std::string nan = good;
  const auto bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  for (int b = 0; b < 4; ++b) nan[16 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  EXPECT_THROW(decode_features(nan), FormatError);
  EXPECT_THROW(decode_features(good + "x"), FormatError);
  EXPECT_THROW(load_features("/nonexistent/f.vgnf"), IoError);
}

TEST(PairExamples, Convention) {
  const auto vocab = Vocabulary::from_words(std::vector<std::string>{"a"});
  std::vector<Caption> caps;
  for (int i = 0; i < 10; ++i) caps.push_back(make_caption({"a"}, vocab));
  const auto ex = pair_examples(caps, 2, std::nullopt, 5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(ex[static_cast<std::size_t>(i)].image_index, i / 5);
  EXPECT_THROW(pair_examples(caps, 3, std::nullopt, 5), ShapeError);
}

TEST(PairExamples, ManifestOverrides) {
  const auto vocab = Vocabulary::from_words(std::vector<std::string>{"a"});
  std::vector<Caption> caps;
  for (int i = 0; i < 10; ++i) caps.push_back(make_caption({"a"}, vocab));
  const auto ex = pair_examples(caps, 2, Manifest{{3, 0}, {0, 1}}, 5);
  EXPECT_EQ(ex[3].image_index, 0);
  EXPECT_EQ(ex[0].image_index, 1);
  EXPECT_EQ(ex[7].image_index, 1);
  EXPECT_THROW(pair_examples(caps, 2, Manifest{{3, 2}}, 5), ShapeError);
  EXPECT_THROW(pair_examples(caps, 2, Manifest{{10, 0}}, 5), ShapeError);
  // Without a matching convention every caption needs a manifest entry.
  EXPECT_THROW(pair_examples(caps, 3, Manifest{{0, 0}}, 5), ShapeError);
  Manifest full;
  for (int i = 0; i < 10; ++i) full.emplace_back(i, i % 3);
  EXPECT_EQ(pair_examples(caps, 3, full, 5)[5].image_index, 2);
}

TEST(ReadManifest, ParsesTabSeparatedLines) {
  testutil::TempDir dir;
  const auto m = read_manifest(dir.write("m.tsv", "3\t0\n\n1\t2\n"));
  EXPECT_EQ(m, (Manifest{{3, 0}, {1, 2}}));
  EXPECT_THROW(read_manifest(dir.write("bad.tsv", "3 0\n")), ParseError);
}

TEST(Batches, Examples) {
  EXPECT_EQ(batches(5, 2, 0, false), (std::vector<std::vector<int>>{{0, 1}, {2, 3}, {4}}));
  EXPECT_EQ(batches(50, 8, 7, true, 3), batches(50, 8, 7, true, 3));
  EXPECT_NE(batches(50, 8, 7, true, 3), batches(50, 8, 7, true, 4));
  EXPECT_THROW(batches(5, 1, 0, false, 0, true), ConfigError);
  EXPECT_EQ(batches(3, 1, 0, false, 0, false).size(), 3u);
}

TEST(Batches, EveryExampleExactlyOncePerEpoch) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 1 + seed * 13;
    std::vector<int> seen;
    for (const auto& g : batches(n, 4, seed, true, seed)) seen.insert(seen.end(), g.begin(), g.end());
    std::sort(seen.begin(), seen.end());
    ASSERT_EQ(seen.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], static_cast<int>(i));
  }
}

TEST(WordVectors, LoadsAndValidates) {
  testutil::TempDir dir;
  const auto v = load_word_vectors(dir.write("v.txt", "cat 1 2 3\ndog 4 5 6\n"));
  EXPECT_EQ(v.at("dog"), (std::vector<float>{4, 5, 6}));
  EXPECT_THROW(load_word_vectors(dir.write("bad.txt", "cat 1 2 3\ndog 4 5\n")), ShapeError);
}
