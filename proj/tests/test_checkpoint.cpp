#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vgnsl/checkpoint.hpp"
#include "vgnsl/synthetic.hpp"

using namespace vgnsl;

namespace {

Checkpoint trained_checkpoint() {
  SyntheticConfig sc;
  sc.captions = 48;
  sc.image_dim = 8;
  sc.seed = 4;
  const auto data = make_synthetic_corpus(sc);
  TrainConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 6;
  cfg.batch_size = 16;
  cfg.seed = 9;
  cfg.head_initial = true;
  Checkpoint ck{data.corpus.vocab, cfg,
                TrainState<float>::fresh(make_model<float>(cfg, data.corpus.vocab.size(), 8))};
  train_epoch(data.corpus, ck.state, cfg);
  return ck;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  testutil::TempDir dir;
  const auto ck = trained_checkpoint();
  save_checkpoint(dir.file("a.vgnc"), ck);
  const auto back = load_checkpoint(dir.file("a.vgnc"));
  save_checkpoint(dir.file("b.vgnc"), back);
  EXPECT_EQ(testutil::slurp(dir.file("a.vgnc")), testutil::slurp(dir.file("b.vgnc")));

  EXPECT_TRUE(back.state.params == ck.state.params);
  EXPECT_TRUE(back.state.adam_vse == ck.state.adam_vse);
  EXPECT_TRUE(back.state.adam_policy == ck.state.adam_policy);
  EXPECT_EQ(back.state.epoch, 1);
  EXPECT_EQ(back.vocab, ck.vocab);
  EXPECT_EQ(back.config.seed, 9u);
  EXPECT_TRUE(back.config.head_initial);
  EXPECT_EQ(back.config.hidden_dim, 6u);
}

TEST(Checkpoint, GreedyParsesSurviveReload) {
  const auto ck = trained_checkpoint();
  const auto back = decode_checkpoint(encode_checkpoint(ck));
  const std::vector<std::vector<int>> captions{{1, 2, 3, 4}, {5, 1, 2, 6, 7, 3}, {2}};
  for (const auto& ids : captions)
    EXPECT_EQ(parse_greedy<float>(ids, ck.state.params).tree, parse_greedy<float>(ids, back.state.params).tree);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto bytes = encode_checkpoint(trained_checkpoint());
  std::string magic = bytes;
  magic[0] = 'Z';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  std::string version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes + "xx"), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 10)), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.vgnc"), IoError);
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  TrainConfig c;
  c.epochs = 7;
  c.lr_phase2 = 1e-6;
  c.hyper.lambda = 3.5;
  c.reset_moments_at_switch = false;
  c.workers = 3;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.epochs, 7);
  EXPECT_EQ(back.hyper.lambda, 3.5);
  EXPECT_FALSE(back.reset_moments_at_switch);
}
