#pragma once

// Caption ingestion, vocabulary, image-feature files and caption/image pairing.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vgnsl/error.hpp"
#include "vgnsl/rng.hpp"

namespace vgnsl {

using Tokens = std::vector<std::string>;

class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  Vocabulary() : words_{std::string(kUnknown)} { index_.emplace(words_[0], 0); }

  // Builds a vocabulary with <unk> at id 0 followed by `words` in order.
  static Vocabulary from_words(std::span<const std::string> words) {
    Vocabulary v;
    for (const auto& w : words) {
      if (w == kUnknown) continue;
      if (v.index_.emplace(w, static_cast<int>(v.words_.size())).second) v.words_.push_back(w);
    }
    return v;
  }

  int lookup(std::string_view w) const {
    auto it = index_.find(std::string(w));
    return it == index_.end() ? unk_id() : it->second;
  }
  bool contains(std::string_view w) const { return index_.count(std::string(w)) != 0; }

  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  int size() const noexcept { return static_cast<int>(words_.size()); }
  int unk_id() const noexcept { return 0; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct Caption {
  Tokens tokens;
  std::vector<int> ids;

  int size() const noexcept { return static_cast<int>(tokens.size()); }
};

inline Caption make_caption(Tokens tokens, const Vocabulary& vocab) {
  if (tokens.empty()) throw ShapeError("caption must contain at least one token");
  Caption c{std::move(tokens), {}};
  c.ids.reserve(c.tokens.size());
  for (const auto& t : c.tokens) c.ids.push_back(vocab.lookup(t));
  return c;
}

inline Tokens split_tokens(std::string_view line) {
  Tokens out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t next = line.find(' ', pos);
    if (next == std::string_view::npos) next = line.size();
    if (next > pos) out.emplace_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// One caption per line, tokens separated by single spaces.
inline std::vector<Tokens> read_captions(const std::string& path) {
  std::vector<Tokens> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Tokens t = split_tokens(lines[i]);
    if (t.empty()) throw ShapeError(path + ":" + std::to_string(i + 1) + ": empty caption");
    out.push_back(std::move(t));
  }
  return out;
}

// Most frequent words first (ties broken lexicographically), at most
// max_size of them, each seen at least min_count times; <unk> is extra.
inline Vocabulary build_vocab(std::span<const Tokens> captions, int max_size = 10000,
                              int min_count = 1) {
  if (captions.empty()) throw ShapeError("build_vocab: no captions");
  std::map<std::string, long> counts;
  for (const auto& c : captions)
    for (const auto& w : c) ++counts[w];
  if (counts.empty()) throw ShapeError("build_vocab: no tokens");
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (const auto& [w, n] : ranked) {
    if (static_cast<int>(words.size()) >= max_size) break;
    if (n < min_count) break;
    if (w == Vocabulary::kUnknown) continue;
    words.push_back(w);
  }
  return Vocabulary::from_words(words);
}

// Row-major block of image feature vectors.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<float> values;

  std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    if (i >= count()) throw ShapeError("feature index " + std::to_string(i) + " out of range");
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated payload");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline constexpr std::string_view kFeatureMagic = "VGNF";
inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::string encode_features(const FeatureSet& f) {
  if (f.dim == 0 || f.values.size() % f.dim != 0)
    throw ShapeError("feature payload is not a whole number of rows");
  std::string out(kFeatureMagic);
  detail::put_u32(out, kFeatureVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(f.count()));
  detail::put_u32(out, static_cast<std::uint32_t>(f.dim));
  out.reserve(out.size() + 4 * f.values.size());
  for (float x : f.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

inline FeatureSet decode_features(std::string_view bytes, const std::string& what = "features") {
  detail::ByteReader r(bytes, what);
  if (r.take(4) != kFeatureMagic) throw FormatError(what + ": bad magic");
  const auto version = r.u32();
  if (version != kFeatureVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u32();
  const std::uint64_t dim = r.u32();
  if (dim == 0) throw FormatError(what + ": zero feature dimension");
  if (r.remaining() < count * dim * 4) throw FormatError(what + ": truncated payload");
  FeatureSet f;
  f.dim = dim;
  f.values.resize(count * dim);
  for (auto& x : f.values) {
    x = r.f32();
    if (!std::isfinite(x)) throw FormatError(what + ": non-finite feature value");
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after payload");
  return f;
}

inline FeatureSet load_features(const std::string& path) {
  return decode_features(detail::read_file_bytes(path), path);
}

inline void write_features(const std::string& path, const FeatureSet& f) {
  detail::write_file_bytes(path, encode_features(f));
}

struct PairedExample {
  Caption caption;
  int image_index = 0;
};

// caption_index -> image_index overrides, 0-based.
using Manifest = std::vector<std::pair<int, int>>;

inline Manifest read_manifest(const std::string& path) {
  Manifest m;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(i + 1) + ": expected caption<TAB>image", 0);
    try {
      m.emplace_back(std::stoi(lines[i].substr(0, tab)), std::stoi(lines[i].substr(tab + 1)));
    } catch (const std::logic_error&) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": bad index", tab);
    }
  }
  return m;
}

// Caption i goes to image i / captions_per_image unless the manifest says
// otherwise. Captions left unpaired are an error.
inline std::vector<PairedExample> pair_examples(std::vector<Caption> captions,
                                                std::size_t image_count,
                                                const std::optional<Manifest>& manifest,
                                                int captions_per_image = 5) {
  const auto n = captions.size();
  std::vector<int> image(n, -1);
  const bool by_convention =
      captions_per_image > 0 && n == static_cast<std::size_t>(captions_per_image) * image_count;
  if (by_convention) {
    for (std::size_t i = 0; i < n; ++i) image[i] = static_cast<int>(i / captions_per_image);
  } else if (!manifest) {
    throw ShapeError(std::to_string(n) + " captions do not match " + std::to_string(image_count) +
                     " images at " + std::to_string(captions_per_image) + " captions per image");
  }
  if (manifest) {
    for (const auto& [c, im] : *manifest) {
      if (c < 0 || static_cast<std::size_t>(c) >= n)
        throw ShapeError("manifest caption index " + std::to_string(c) + " out of range");
      if (im < 0 || static_cast<std::size_t>(im) >= image_count)
        throw ShapeError("manifest image index " + std::to_string(im) + " out of range");
      image[static_cast<std::size_t>(c)] = im;
    }
  }
  std::vector<PairedExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (image[i] < 0) throw ShapeError("caption " + std::to_string(i) + " has no image");
    out.push_back(PairedExample{std::move(captions[i]), image[i]});
  }
  return out;
}

struct Corpus {
  Vocabulary vocab;
  FeatureSet features;
  std::vector<PairedExample> examples;

  std::span<const float> feature(const PairedExample& ex) const {
    return features.row(static_cast<std::size_t>(ex.image_index));
  }
};

// Index groups covering 0..count-1 exactly once; a short final batch is kept.
inline std::vector<std::vector<int>> batches(std::size_t count, int batch_size,
                                             std::uint64_t seed, bool shuffle,
                                             std::uint64_t epoch = 0, bool training = true) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (training && batch_size < 2)
    throw ConfigError("training needs batch size >= 2 for in-batch negatives");
  std::vector<int> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<int>(i);
  if (shuffle) {
    Rng rng(derive_seed(seed, {0xBA7C4ULL, epoch}));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < count; i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(count, i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

// "word v1 ... vK" per line; all rows must share K.
inline std::unordered_map<std::string, std::vector<float>> load_word_vectors(
    const std::string& path) {
  std::unordered_map<std::string, std::vector<float>> out;
  std::size_t dim = 0;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream ss(lines[i]);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<float> v;
    float x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw ParseError(path + ":" + std::to_string(i + 1) + ": bad number", 0);
    if (dim == 0) dim = v.size();
    if (v.empty() || v.size() != dim)
      throw ShapeError(path + ":" + std::to_string(i + 1) + ": expected " + std::to_string(dim) +
                       " values");
    out.emplace(std::move(word), std::move(v));
  }
  return out;
}

}  // namespace vgnsl
