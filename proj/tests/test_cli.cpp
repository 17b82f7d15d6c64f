#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "test_util.hpp"
#include "vgnsl/checkpoint.hpp"
#include "vgnsl/cli.hpp"
#include "vgnsl/synthetic.hpp"

using namespace vgnsl;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Writes a small synthetic corpus as captions.txt and features.vgnf.
struct Fixture {
  testutil::TempDir dir;
  std::string captions, features;

  Fixture() {
    SyntheticConfig sc;
    sc.captions = 40;
    sc.image_dim = 8;
    sc.seed = 2;
    const auto data = make_synthetic_corpus(sc);
    std::string text;
    for (const auto& t : data.tokens) {
      for (std::size_t i = 0; i < t.size(); ++i) text += (i ? " " : "") + t[i];
      text += '\n';
    }
    captions = dir.write("captions.txt", text);
    features = dir.file("features.vgnf");
    write_features(features, data.corpus.features);
  }

  std::vector<std::string> train_args(const std::string& out_dir) const {
    return {"train", "--captions", captions, "--features", features, "--out-dir", dir.file(out_dir),
            "--captions-per-image", "1", "--embed-dim", "8", "--hidden-dim", "8", "--batch-size", "8",
            "--quiet"};
  }
};

}  // namespace

TEST(Cli, TrainWritesOneCheckpointPerEpochDeterministically) {
  Fixture fx;
  auto args = fx.train_args("a");
  for (std::string s : {"--epochs", "2", "--seed", "7", "--head-initial"}) args.push_back(s);
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(fx.dir.file("a/epoch_001.vgnc")));
  EXPECT_TRUE(std::filesystem::exists(fx.dir.file("a/epoch_002.vgnc")));
  EXPECT_FALSE(std::filesystem::exists(fx.dir.file("a/epoch_003.vgnc")));

  auto again = args;
  again[6] = fx.dir.file("b");
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(testutil::slurp(fx.dir.file("a/epoch_002.vgnc")), testutil::slurp(fx.dir.file("b/epoch_002.vgnc")));

  const auto ck = load_checkpoint(fx.dir.file("a/epoch_002.vgnc"));
  EXPECT_EQ(ck.config.seed, 7u);
  EXPECT_TRUE(ck.config.head_initial);
  EXPECT_EQ(ck.state.epoch, 2);

  const auto log = lines_of(testutil::slurp(fx.dir.file("a/train_log.jsonl")));
  ASSERT_EQ(log.size(), 10u);  // 5 batches of 8 per epoch
  const auto first = nlohmann::json::parse(log.front());
  for (const char* key : {"epoch", "batch", "loss", "mean_reward", "lr"}) EXPECT_TRUE(first.contains(key)) << key;
  EXPECT_EQ(first["epoch"], 1);
  EXPECT_EQ(nlohmann::json::parse(log.back())["epoch"], 2);
}

TEST(Cli, MissingFeatureFileIsAnIoError) {
  Fixture fx;
  auto args = fx.train_args("a");
  args[4] = fx.dir.file("nope.vgnf");
  const auto r = run(args);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("vgnsl: error: io: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("nope.vgnf"), std::string::npos);
  EXPECT_EQ(lines_of(r.err).size(), 1u);
}

TEST(Cli, ConfigFileFlagsAndEnvironmentSeed) {
  Fixture fx;
  const auto cfg = fx.dir.write("run.cfg", "# overlay\nepochs = 1\nlambda = 3.5\nhead_initial = true\n");
  auto args = fx.train_args("c");
  for (std::string s : std::initializer_list<std::string>{"--config", cfg, "--lambda", "2"}) args.push_back(s);
  ::setenv("VGNSL_SEED", "11", 1);
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(fx.dir.file("c/epoch_001.vgnc"));
  EXPECT_EQ(ck.config.epochs, 1);
  EXPECT_EQ(ck.config.hyper.lambda, 2.0);  // flag beats config
  EXPECT_TRUE(ck.config.head_initial);
  EXPECT_EQ(ck.config.seed, 11u);

  auto seeded = args;
  seeded[6] = fx.dir.file("d");
  for (std::string s : {"--seed", "4"}) seeded.push_back(s);
  ASSERT_EQ(run(seeded).code, 0);
  EXPECT_EQ(load_checkpoint(fx.dir.file("d/epoch_001.vgnc")).config.seed, 4u);
  ::unsetenv("VGNSL_SEED");

  const auto bad = fx.dir.write("bad.cfg", "no_such_key = 1\n");
  auto bad_args = fx.train_args("e");
  for (std::string s : std::initializer_list<std::string>{"--config", bad}) bad_args.push_back(s);
  const auto rb = run(bad_args);
  EXPECT_EQ(rb.code, 2);
  EXPECT_EQ(rb.err.rfind("vgnsl: error: config: ", 0), 0u) << rb.err;
}

TEST(Cli, UnknownFlagsAreRejected) {
  const auto r = run({"eval", "--pred", "a", "--gold", "b", "--frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("vgnsl: error: usage: ", 0), 0u);
  EXPECT_EQ(run({"nonsense"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ParseWithZeroWeightCheckpointIsLeftBranching) {
  testutil::TempDir dir;
  const auto vocab = Vocabulary::from_words(std::vector<std::string>{"a", "big", "dog", "runs"});
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 3;
  // Scorer weights all zero; embeddings must be nonzero to normalize.
  auto params = ModelParams<float>::zeros({5, 4, 3, 2});
  for (auto& x : params.embedding.data) x = 1;
  Checkpoint ck{vocab, cfg, TrainState<float>::fresh(params)};
  save_checkpoint(dir.file("zero.vgnc"), ck);
  const auto caps = dir.write("c.txt", "a big dog runs\ndog\nunseen words here\n");
  const auto r = run({"parse", "--checkpoint", dir.file("zero.vgnc"), "--captions", caps, "--out", dir.file("p.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = lines_of(testutil::slurp(dir.file("p.txt")));
  EXPECT_EQ(out, (std::vector<std::string>{"( ( ( a big ) dog ) runs )", "dog", "( ( unseen words ) here )"}));

  const auto to_stdout = run({"parse", "--checkpoint", dir.file("zero.vgnc"), "--captions", caps, "--workers", "2"});
  EXPECT_EQ(lines_of(to_stdout.out), out);
}

TEST(Cli, EvalSelfF1AndSelect) {
  testutil::TempDir dir;
  const auto pred = dir.write("p.txt", "( ( a b ) ( c d ) )\n( ( a b ) c )\n");
  const auto other = dir.write("q.txt", "( a ( b ( c d ) ) )\n( ( a b ) c )\n");
  const auto gold = dir.write("g.txt", "(S (NP (DT a) (NN b)) (VP (VB c) (NN d)))\n(S (NP (DT a) (NN b)) (VP (VB c)))\n");

  const auto same = run({"eval", "--pred", pred, "--gold", pred});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_NE(same.out.find("100.0"), std::string::npos) << same.out;

  const auto js = run({"eval", "--pred", other, "--gold", gold, "--json"});
  ASSERT_EQ(js.code, 0) << js.err;
  const auto j = nlohmann::json::parse(js.out);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_NEAR(j["f1"].get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(j["per_label"]["NP"], 0.5);

  const auto short_gold = dir.write("s.txt", "( a b )\n");
  const auto mismatch = run({"eval", "--pred", pred, "--gold", short_gold});
  EXPECT_NE(mismatch.code, 0);

  const auto self = run({"selff1", pred, pred});
  EXPECT_EQ(self.out, "self-F1 100.0\n");
  EXPECT_NE(run({"selff1", pred}).code, 0);

  for (std::string r : {"run1", "run2"}) {
    std::filesystem::create_directories(dir.path() / r);
    std::filesystem::copy_file(pred, dir.path() / r / "epoch_001.txt");
    std::filesystem::copy_file(other, dir.path() / r / "epoch_002.txt");
  }
  const auto sel = run({"select", dir.path().string(), "--json"});
  ASSERT_EQ(sel.code, 0) << sel.err;
  const auto sj = nlohmann::json::parse(sel.out);
  EXPECT_EQ(sj["selection"].size(), 2u);
  EXPECT_EQ(sj["selected_agreement"], 1.0);
}

TEST(Cli, BaselinesAndCorrelate) {
  testutil::TempDir dir;
  const auto caps = dir.write("c.txt", "a red dog\nthe dog runs fast\nx\n");
  const auto right = run({"baseline", "--kind", "right", "--captions", caps});
  ASSERT_EQ(right.code, 0) << right.err;
  EXPECT_EQ(lines_of(right.out), (std::vector<std::string>{"( a ( red dog ) )", "( the ( dog ( runs fast ) ) )", "x"}));
  EXPECT_EQ(lines_of(run({"baseline", "--kind", "left", "--captions", caps}).out)[0], "( ( a red ) dog )");
  EXPECT_EQ(lines_of(run({"baseline", "--kind", "pmi", "--captions", caps}).out).size(), 3u);
  const auto table = dir.write("t.tsv", "dog\t5\nred\t4\na\t1\n");
  const auto conc = run({"baseline", "--kind", "concreteness", "--captions", caps, "--table", table});
  ASSERT_EQ(conc.code, 0) << conc.err;
  EXPECT_EQ(lines_of(conc.out)[0], "( a ( red dog ) )");
  EXPECT_EQ(run({"baseline", "--kind", "concreteness", "--captions", caps}).code, 2);

  const auto a = dir.write("a.tsv", "dog\t1\ncat\t2\nidea\t3\n");
  const auto b = dir.write("b.tsv", "dog\t2\ncat\t4\nidea\t6\nextra\t1\n");
  const auto r = run({"correlate", a, b});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "pearson r 1.0000 over 3 words\n");
}

TEST(Cli, ConcretenessExport) {
  Fixture fx;
  auto args = fx.train_args("m");
  for (std::string s : {"--epochs", "1"}) args.push_back(s);
  ASSERT_EQ(run(args).code, 0);
  const auto r = run({"concreteness", "--checkpoint", fx.dir.file("m/epoch_001.vgnc"), "--captions", fx.captions,
                      "--features", fx.features, "--captions-per-image", "1", "--batch-size", "8", "--top", "5",
                      "--out", fx.dir.file("conc.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = read_concreteness_table(fx.dir.file("conc.tsv"));
  EXPECT_EQ(t.scores.size(), 5u);
  for (const auto& [w, v] : t.scores) EXPECT_GE(v, 0.0) << w;
}

TEST(Cli, BinaryReportsErrorsOnOneLine) {
  const std::string cmd = std::string(VGNSL_CLI_PATH) + " eval --pred /nonexistent/p --gold /nonexistent/g 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string output;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = ::pclose(pipe);
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_EQ(output.rfind("vgnsl: error: io: ", 0), 0u) << output;
  EXPECT_EQ(lines_of(output).size(), 1u);
}
