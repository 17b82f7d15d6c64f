#pragma once

// The `vgnsl` command line: train, parse, eval, selff1, select, baseline,
// concreteness, correlate. run_cli never throws; failures print one line
// "vgnsl: error: <kind>: <message>" to err and return nonzero (2 for I/O,
// configuration and usage errors, 1 otherwise).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vgnsl/baselines.hpp"
#include "vgnsl/checkpoint.hpp"
#include "vgnsl/eval.hpp"
#include "vgnsl/training.hpp"

namespace vgnsl {

namespace cli {

inline std::string fixed(double x, int digits) {
  if (std::isnan(x)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string pct(double ratio) { return fixed(100.0 * ratio, 1); }

// One TrainConfig field reachable from config files and flags.
struct ConfigField {
  std::string key;  // snake_case; the flag is the kebab-case spelling
  bool is_bool = false;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::string help;
};

inline std::string kebab(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

inline std::string snake(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    N out{};
    if constexpr (std::is_same_v<N, double>) out = std::stod(v, &used);
    else if constexpr (std::is_same_v<N, std::uint64_t>) {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = std::stoull(v, &used);
    } else if constexpr (std::is_same_v<N, std::size_t>) {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<std::size_t>(std::stoull(v, &used));
    } else out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::logic_error&) {
    throw ConfigError("bad value '" + v + "' for " + key);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

inline const std::vector<ConfigField>& config_fields() {
  using C = TrainConfig;
  auto num = [](auto member) {
    return [member](C& c, const std::string& v) {
      using M = std::remove_reference_t<decltype(c.*member)>;
      c.*member = parse_number<M>("", v);
    };
  };
  auto flag = [](bool C::*member) {
    return [member](C& c, const std::string& v) { c.*member = parse_bool("", v); };
  };
  static const std::vector<ConfigField> fields{
      {"epochs", false, num(&C::epochs), "training epochs (30)"},
      {"batch_size", false, num(&C::batch_size), "minibatch size (128)"},
      {"lr_phase1", false, num(&C::lr_phase1), "learning rate before the switch (5e-4)"},
      {"lr_phase2", false, num(&C::lr_phase2), "learning rate from the switch on (5e-5)"},
      {"phase_switch_epoch", false, num(&C::phase_switch_epoch), "0-based epoch where lr drops (15)"},
      {"beta1", false, [](C& c, const std::string& v) { c.adam.beta1 = parse_number<double>("beta1", v); }, "Adam beta1 (0.9)"},
      {"beta2", false, [](C& c, const std::string& v) { c.adam.beta2 = parse_number<double>("beta2", v); }, "Adam beta2 (0.999)"},
      {"eps", false, [](C& c, const std::string& v) { c.adam.eps = parse_number<double>("eps", v); }, "Adam epsilon (1e-8)"},
      {"seed", false, num(&C::seed), "random seed (0, or $VGNSL_SEED)"},
      {"margin", false, [](C& c, const std::string& v) { c.hyper.margin = parse_number<double>("margin", v); }, "ranking margin (0.2)"},
      {"concrete_margin", false, [](C& c, const std::string& v) { c.hyper.concrete_margin = parse_number<double>("concrete_margin", v); }, "concreteness margin (0.2)"},
      {"lambda", false, [](C& c, const std::string& v) { c.hyper.lambda = parse_number<double>("lambda", v); }, "head-initial weight (20)"},
      {"head_initial", true, flag(&C::head_initial), "divide rewards by the right constituent's abstractness"},
      {"embed_dim", false, num(&C::embed_dim), "embedding size (512)"},
      {"hidden_dim", false, num(&C::hidden_dim), "score network hidden size (128)"},
      {"normalize_leaves", true, flag(&C::normalize_leaves), "L2-normalize word embeddings (on)"},
      {"leaves_in_loss", true, flag(&C::leaves_in_loss), "match single words as constituents (on)"},
      {"reset_moments_at_switch", true, flag(&C::reset_moments_at_switch), "reset Adam moments at the lr switch (on)"},
      {"reward_baseline", true, flag(&C::reward_baseline), "moving-average reward baseline (off)"},
      {"baseline_decay", false, num(&C::baseline_decay), "baseline decay (0.9)"},
      {"clip_norm", false, num(&C::clip_norm), "global gradient norm clip, <= 0 disables (2.0)"},
      {"workers", false, num(&C::workers), "parse threads (1)"},
  };
  return fields;
}

inline const ConfigField& find_field(const std::string& key) {
  const auto k = snake(key);
  for (const auto& f : config_fields())
    if (f.key == k) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

// key=value lines; '#' starts a comment. Returns keys in file order.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto lines = read_lines(path);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(i + 1) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  const auto& f = find_field(key);
  try {
    f.set(c, value);
  } catch (const ConfigError&) {
    throw ConfigError("bad value '" + value + "' for " + f.key);
  }
}

inline std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path, std::ios::binary);
  if (!file) throw IoError("cannot write '" + path + "'");
  return file;
}

inline void check_written(const std::ofstream& f, const std::string& path) {
  if (f.is_open() && !f) throw IoError("write failed for '" + path + "'");
}

// Trees in the binary bracket format, one per line.
inline std::vector<BinaryReading> read_tree_file(const std::string& path) {
  std::vector<BinaryReading> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(read_binary(lines[i]));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": " + e.what(), e.offset());
    }
  }
  return out;
}

// Gold trees are labeled ("(S (NP (DT a) (NN cat)) ...)") or unlabeled
// binary as written by `parse` ("( ( a cat ) ... )"). In auto mode a line
// whose first '(' is followed by whitespace, or that has no bracket at all,
// is read as unlabeled.
enum class GoldFormat { kAuto, kLabeled, kBinary };

struct GoldLine {
  std::optional<LabeledTree> labeled;
  SpanSet spans;
  int length = 0;
};

inline bool looks_unlabeled(std::string_view line) {
  const auto open = line.find('(');
  if (open == std::string_view::npos) return true;
  return open + 1 < line.size() && std::isspace(static_cast<unsigned char>(line[open + 1]));
}

inline std::vector<GoldLine> read_gold_file(const std::string& path, SpanPolicy policy,
                                            GoldFormat format = GoldFormat::kAuto) {
  std::vector<GoldLine> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    GoldLine g;
    const bool binary = format == GoldFormat::kBinary ||
                        (format == GoldFormat::kAuto && looks_unlabeled(lines[i]));
    try {
      if (binary) {
        auto b = read_binary(lines[i]);
        g.spans = spans_of(b.tree, policy);
        g.length = b.tree.num_leaves();
      } else {
        g.labeled = parse_bracketed(lines[i]);
        g.spans = spans_of(*g.labeled, policy);
        g.length = leaf_count(*g.labeled);
      }
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": " + e.what(), e.offset());
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline Corpus load_corpus(const std::string& captions_path, const std::string& features_path,
                          const std::string& manifest_path, int captions_per_image,
                          std::optional<Vocabulary> vocab, int vocab_size, int min_count) {
  const auto tokens = read_captions(captions_path);
  Corpus c;
  c.features = load_features(features_path);
  c.vocab = vocab ? std::move(*vocab) : build_vocab(tokens, vocab_size, min_count);
  std::vector<Caption> caps;
  caps.reserve(tokens.size());
  for (const auto& t : tokens) caps.push_back(make_caption(t, c.vocab));
  std::optional<Manifest> manifest;
  if (!manifest_path.empty()) manifest = read_manifest(manifest_path);
  c.examples = pair_examples(std::move(caps), c.features.count(), manifest, captions_per_image);
  return c;
}

inline std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.vgnc", epoch);
  return buf;
}

// Sorted regular files (or directories) directly inside dir.
inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool dirs) {
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot open '" + dir.string() + "'");
  std::vector<std::filesystem::path> out;
  for (const auto& e : it)
    if (dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cli

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visually grounded unsupervised constituency parsing"};
  app.name("vgnsl");
  app.require_subcommand(1);
  app.set_version_flag("--version", "vgnsl 1.0.0");
  std::function<void()> action;

  // train
  auto* train = app.add_subcommand("train", "Train a parser from captions paired with image features");
  std::string t_captions, t_features, t_manifest, t_out = "checkpoints", t_config, t_vectors;
  int t_cpi = 5, t_vocab = 10000, t_min_count = 1;
  bool t_quiet = false;
  train->add_option("--captions", t_captions, "one tokenized caption per line")->required();
  train->add_option("--features", t_features, "VGNF image feature file")->required();
  train->add_option("--manifest", t_manifest, "caption<TAB>image index overrides");
  train->add_option("--captions-per-image", t_cpi, "pairing convention when counts match")->capture_default_str();
  train->add_option("--out-dir", t_out, "checkpoint and log directory")->capture_default_str();
  train->add_option("--config", t_config, "key = value file overlaying the defaults");
  train->add_option("--vocab-size", t_vocab, "most frequent words kept")->capture_default_str();
  train->add_option("--min-count", t_min_count, "minimum word frequency")->capture_default_str();
  train->add_option("--word-vectors", t_vectors, "pretrained vectors; their columns stay frozen");
  train->add_flag("--quiet", t_quiet, "no per-epoch summary");
  struct FlagSlot {
    const cli::ConfigField* field;
    std::string text;
    bool on = false;
    CLI::Option* opt = nullptr;
  };
  std::vector<FlagSlot> slots;
  slots.reserve(cli::config_fields().size());
  for (const auto& f : cli::config_fields()) {
    slots.push_back(FlagSlot{&f, {}, false, nullptr});
    auto& s = slots.back();
    const auto name = "--" + cli::kebab(f.key);
    s.opt = f.is_bool ? train->add_flag(name + ",!--no-" + cli::kebab(f.key), s.on, f.help)
                      : train->add_option(name, s.text, f.help);
  }
  train->callback([&] {
    action = [&] {
      TrainConfig cfg;
      bool seed_set = false;
      if (!t_config.empty())
        for (const auto& [k, v] : cli::read_config_file(t_config)) {
          cli::apply_setting(cfg, k, v);
          seed_set |= cli::snake(k) == "seed";
        }
      for (const auto& s : slots) {
        if (s.opt->count() == 0) continue;
        cli::apply_setting(cfg, s.field->key, s.field->is_bool ? (s.on ? "true" : "false") : s.text);
        seed_set |= s.field->key == "seed";
      }
      if (!seed_set)
        if (const char* env = std::getenv("VGNSL_SEED")) cli::apply_setting(cfg, "seed", env);
      cfg.validate();

      const Corpus corpus = cli::load_corpus(t_captions, t_features, t_manifest, t_cpi, std::nullopt,
                                             t_vocab, t_min_count);
      auto params = make_model<float>(cfg, static_cast<std::size_t>(corpus.vocab.size()),
                                      corpus.features.dim);
      if (!t_vectors.empty()) install_pretrained(params, corpus.vocab, load_word_vectors(t_vectors));
      Checkpoint ck{corpus.vocab, cfg, TrainState<float>::fresh(std::move(params))};

      std::error_code ec;
      std::filesystem::create_directories(t_out, ec);
      if (ec) throw IoError("cannot create '" + t_out + "'");
      const auto log_path = (std::filesystem::path(t_out) / "train_log.jsonl").string();
      std::ofstream log(log_path, std::ios::binary);
      if (!log) throw IoError("cannot write '" + log_path + "'");
      for (int e = 0; e < cfg.epochs; ++e) {
        const auto stats = train_epoch(corpus, ck.state, cfg, [&](const BatchLog& b) {
          log << nlohmann::json{{"epoch", b.epoch + 1},
                                {"batch", b.batch},
                                {"loss", b.loss},
                                {"mean_reward", b.mean_reward},
                                {"lr", b.lr}}
                     .dump()
              << '\n';
        });
        log.flush();
        cli::check_written(log, log_path);
        const auto path = (std::filesystem::path(t_out) / cli::checkpoint_name(ck.state.epoch)).string();
        save_checkpoint(path, ck);
        if (!t_quiet)
          out << "epoch " << ck.state.epoch << " loss " << cli::fixed(stats.mean_loss, 4) << " reward "
              << cli::fixed(stats.mean_reward, 4) << " merges/s " << cli::fixed(stats.merges_per_second, 0)
              << " -> " << path << '\n';
      }
    };
  });

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Greedy-decode captions with a trained checkpoint");
  std::string p_ckpt, p_captions, p_out = "-";
  int p_workers = 1;
  parse_cmd->add_option("--checkpoint", p_ckpt)->required();
  parse_cmd->add_option("--captions", p_captions)->required();
  parse_cmd->add_option("--out", p_out, "output file, - for stdout")->capture_default_str();
  parse_cmd->add_option("--workers", p_workers)->capture_default_str()->check(CLI::PositiveNumber);
  parse_cmd->callback([&] {
    action = [&] {
      const auto ck = load_checkpoint(p_ckpt);
      const auto tokens = read_captions(p_captions);
      std::vector<Caption> caps;
      for (const auto& t : tokens) caps.push_back(make_caption(t, ck.vocab));
      const auto trees = parse_all<float>(caps, ck.state.params, p_workers);
      std::ofstream file;
      auto& o = cli::open_output(p_out, file, out);
      for (std::size_t i = 0; i < trees.size(); ++i) o << format_binary(trees[i], tokens[i]) << '\n';
      cli::check_written(file, p_out);
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Bracket F1 and per-label recall against gold trees");
  std::string e_pred, e_gold, e_labels = "NP,VP,PP,ADJP";
  std::string e_format = "auto";
  bool e_json = false, e_sentence = false;
  eval_cmd->add_option("--pred", e_pred)->required();
  eval_cmd->add_option("--gold", e_gold)->required();
  eval_cmd->add_option("--labels", e_labels, "comma-separated labels for recall")->capture_default_str();
  eval_cmd->add_flag("--with-sentence", e_sentence, "also score the whole-sentence span");
  eval_cmd->add_option("--gold-format", e_format, "auto, labeled or binary")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "labeled", "binary"}));
  eval_cmd->add_flag("--json", e_json);
  eval_cmd->callback([&] {
    action = [&] {
      const auto policy = e_sentence ? SpanPolicy::kWithSentence : SpanPolicy::kNonTrivial;
      const auto pred = cli::read_tree_file(e_pred);
      const auto gold = cli::read_gold_file(e_gold, policy,
                                           e_format == "labeled"  ? cli::GoldFormat::kLabeled
                                           : e_format == "binary" ? cli::GoldFormat::kBinary
                                                                  : cli::GoldFormat::kAuto);
      if (pred.size() != gold.size())
        throw ShapeError(e_pred + " has " + std::to_string(pred.size()) + " lines, " + e_gold +
                         " has " + std::to_string(gold.size()));
      std::vector<SpanSet> ps, gs;
      std::vector<BinaryTree> ptrees;
      std::vector<LabeledTree> gtrees;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].tree.num_leaves() != gold[i].length)
          throw ShapeError("line " + std::to_string(i + 1) + ": token counts differ (" +
                           std::to_string(pred[i].tree.num_leaves()) + " vs " +
                           std::to_string(gold[i].length) + ")");
        ps.push_back(spans_of(pred[i].tree, policy));
        gs.push_back(gold[i].spans);
        if (gold[i].labeled) {
          ptrees.push_back(pred[i].tree);
          gtrees.push_back(*gold[i].labeled);
        }
      }
      auto report = corpus_f1(ps, gs);
      const auto labels = cli::split_list(e_labels);
      for (const auto& l : labels) report.per_label[l] = label_recall(ptrees, gtrees, l);
      if (e_json) {
        out << report.to_json().dump() << '\n';
        return;
      }
      std::string head, row;
      auto cell = [](std::string s) {
        s.resize(std::max<std::size_t>(s.size(), 8), ' ');
        return s;
      };
      for (const auto& l : labels) {
        head += cell(l);
        row += cell(cli::pct(report.per_label[l]));
      }
      out << head << "Avg F1\n" << row << cli::pct(report.f1) << '\n';
      out << "precision " << cli::pct(report.precision) << "  recall " << cli::pct(report.recall)
          << "  sentences " << report.n_sentences << '\n';
    };
  });

  // selff1
  auto* self_cmd = app.add_subcommand("selff1", "Mean pairwise F1 between runs");
  std::vector<std::string> s_runs;
  bool s_json = false;
  self_cmd->add_option("runs", s_runs, "predicted tree files, one per run")->required();
  self_cmd->add_flag("--json", s_json);
  self_cmd->callback([&] {
    action = [&] {
      std::vector<RunTrees> runs;
      for (const auto& path : s_runs) {
        RunTrees trees;
        for (auto& r : cli::read_tree_file(path)) trees.push_back(std::move(r.tree));
        runs.push_back(std::move(trees));
      }
      const double v = self_f1(runs);
      if (s_json)
        out << nlohmann::json{{"schema_version", kReportSchemaVersion}, {"self_f1", v}, {"runs", runs.size()}}.dump()
            << '\n';
      else
        out << "self-F1 " << cli::pct(v) << '\n';
    };
  });

  // select
  auto* select_cmd = app.add_subcommand(
      "select", "Pick one checkpoint per run by cross-run agreement (grid dir: one subdirectory per run, "
                "one tree file per checkpoint, both in name order)");
  std::string g_dir;
  int g_window = 2;
  std::uint64_t g_seed = 0;
  bool g_json = false;
  select_cmd->add_option("grid", g_dir)->required();
  select_cmd->add_option("--window", g_window, "agreement window for the tuning objective")->capture_default_str();
  select_cmd->add_option("--seed", g_seed, "restart seed for large grids")->capture_default_str();
  select_cmd->add_flag("--json", g_json);
  select_cmd->callback([&] {
    action = [&] {
      CheckpointGrid grid;
      std::vector<std::vector<std::string>> names;
      const auto run_dirs = cli::sorted_entries(g_dir, true);
      for (const auto& rd : run_dirs) {
        grid.emplace_back();
        names.emplace_back();
        for (const auto& f : cli::sorted_entries(rd, false)) {
          RunTrees trees;
          for (auto& r : cli::read_tree_file(f.string())) trees.push_back(std::move(r.tree));
          grid.back().push_back(std::move(trees));
          names.back().push_back(f.filename().string());
        }
      }
      if (grid.size() < 2) throw ShapeError("grid '" + g_dir + "' needs at least two run directories");
      const PairwiseF1 f1(grid, SpanPolicy::kNonTrivial);
      const auto pick = select_checkpoints(f1, g_seed);
      const double objective = tune_objective(f1, g_window);
      const double agreement = f1.total(pick);
      if (g_json) {
        nlohmann::json sel = nlohmann::json::array();
        for (std::size_t i = 0; i < pick.size(); ++i)
          sel.push_back({{"run", run_dirs[i].filename().string()},
                         {"index", pick[i]},
                         {"file", names[i][static_cast<std::size_t>(pick[i])]}});
        out << nlohmann::json{{"schema_version", kReportSchemaVersion},
                              {"selection", sel},
                              {"selected_agreement", agreement},
                              {"tune_objective", objective},
                              {"window", g_window}}
                   .dump()
            << '\n';
        return;
      }
      for (std::size_t i = 0; i < pick.size(); ++i)
        out << run_dirs[i].filename().string() << '\t' << names[i][static_cast<std::size_t>(pick[i])] << '\n';
      out << "selected agreement " << cli::fixed(agreement, 4) << "  tune objective (window " << g_window
          << ") " << cli::fixed(objective, 4) << '\n';
    };
  });

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "Non-neural trees: left, right, random, pmi, concreteness");
  std::string b_kind, b_captions, b_table, b_out = "-";
  std::uint64_t b_seed = 0;
  double b_tau = 20.0, b_smoothing = 1.0;
  bool b_log = false;
  base_cmd->add_option("--kind", b_kind)->required()->check(
      CLI::IsMember({"left", "right", "random", "pmi", "concreteness"}));
  base_cmd->add_option("--captions", b_captions)->required();
  base_cmd->add_option("--seed", b_seed, "for random trees")->capture_default_str();
  base_cmd->add_option("--table", b_table, "word<TAB>score concreteness table");
  base_cmd->add_option("--tau", b_tau, "concreteness bias toward merging")->capture_default_str();
  base_cmd->add_option("--smoothing", b_smoothing, "add-k smoothing for PMI counts")->capture_default_str();
  base_cmd->add_flag("--log-scores", b_log, "take logs of table scores before normalizing");
  base_cmd->add_option("--out", b_out)->capture_default_str();
  base_cmd->callback([&] {
    action = [&] {
      const auto captions = read_captions(b_captions);
      std::vector<BinaryTree> trees;
      if (b_kind == "pmi") {
        const auto stats = PmiStats::build(captions, b_smoothing);
        for (const auto& c : captions)
          trees.push_back(distance_parse(pmi_distances(stats, c), static_cast<int>(c.size())));
      } else if (b_kind == "concreteness") {
        if (b_table.empty()) throw ConfigError("--kind concreteness needs --table");
        const auto table = read_concreteness_table(b_table);
        for (const auto& c : captions) {
          const auto raw = table.lookup(c);
          trees.push_back(concreteness_parse(normalize_scores(raw, b_log), b_tau));
        }
      } else {
        const auto kind = b_kind == "left" ? TrivialKind::kLeft
                          : b_kind == "right" ? TrivialKind::kRight
                                              : TrivialKind::kRandom;
        Rng rng(derive_seed(b_seed, {0x7A1ULL}));
        for (const auto& c : captions) trees.push_back(trivial_tree(static_cast<int>(c.size()), kind, rng));
      }
      std::ofstream file;
      auto& o = cli::open_output(b_out, file, out);
      for (std::size_t i = 0; i < trees.size(); ++i) o << format_binary(trees[i], captions[i]) << '\n';
      cli::check_written(file, b_out);
    };
  });

  // concreteness
  auto* conc_cmd = app.add_subcommand("concreteness", "Export per-word concreteness from a checkpoint");
  std::string c_ckpt, c_captions, c_features, c_manifest, c_out = "-";
  int c_cpi = 5, c_batch = 128, c_top = 0;
  conc_cmd->add_option("--checkpoint", c_ckpt)->required();
  conc_cmd->add_option("--captions", c_captions)->required();
  conc_cmd->add_option("--features", c_features)->required();
  conc_cmd->add_option("--manifest", c_manifest);
  conc_cmd->add_option("--captions-per-image", c_cpi)->capture_default_str();
  conc_cmd->add_option("--batch-size", c_batch, "contrast set size")->capture_default_str();
  conc_cmd->add_option("--top", c_top, "keep only the k most frequent words (0 = all)")->capture_default_str();
  conc_cmd->add_option("--out", c_out)->capture_default_str();
  conc_cmd->callback([&] {
    action = [&] {
      auto ck = load_checkpoint(c_ckpt);
      const Corpus corpus = cli::load_corpus(c_captions, c_features, c_manifest, c_cpi, ck.vocab, 0, 1);
      if (corpus.features.dim != ck.state.params.image_dim())
        throw ShapeError("feature dimension " + std::to_string(corpus.features.dim) +
                         " does not match the checkpoint's " + std::to_string(ck.state.params.image_dim()));
      auto table = export_word_concreteness<float>(ck.state.params, corpus, ck.config.hyper, c_batch,
                                                   ck.config.leaves_in_loss);
      if (c_top > 0) {
        std::vector<Tokens> toks;
        for (const auto& ex : corpus.examples) toks.push_back(ex.caption.tokens);
        table = restrict_table(table, most_frequent_words(toks, static_cast<std::size_t>(c_top)));
      }
      std::ofstream file;
      auto& o = cli::open_output(c_out, file, out);
      o << format_concreteness_table(table);
      cli::check_written(file, c_out);
    };
  });

  // correlate
  auto* corr_cmd = app.add_subcommand("correlate", "Pearson r between two word-score tables");
  std::string r_a, r_b, r_captions;
  int r_top = 100;
  bool r_json = false;
  corr_cmd->add_option("table_a", r_a)->required();
  corr_cmd->add_option("table_b", r_b)->required();
  corr_cmd->add_option("--captions", r_captions, "restrict to the most frequent words of this corpus");
  corr_cmd->add_option("--top", r_top, "how many frequent words with --captions")->capture_default_str();
  corr_cmd->add_flag("--json", r_json);
  corr_cmd->callback([&] {
    action = [&] {
      const auto a = read_concreteness_table(r_a);
      const auto b = read_concreteness_table(r_b);
      std::vector<std::string> words;
      if (!r_captions.empty()) {
        const auto caps = read_captions(r_captions);
        words = most_frequent_words(caps, static_cast<std::size_t>(std::max(r_top, 0)));
      } else {
        for (const auto& [w, s] : a.scores) words.push_back(w);
      }
      std::vector<double> xs, ys;
      for (const auto& w : words) {
        const auto x = a.find(w);
        const auto y = b.find(w);
        if (x && y) {
          xs.push_back(*x);
          ys.push_back(*y);
        }
      }
      const double r = pearson(xs, ys);
      if (r_json)
        out << nlohmann::json{{"schema_version", kReportSchemaVersion}, {"pearson", r}, {"n", xs.size()}}.dump()
            << '\n';
      else
        out << "pearson r " << cli::fixed(r, 4) << " over " << xs.size() << " words\n";
    };
  });

  auto fail = [&](const std::string& kind, const std::string& what, int code) {
    std::string msg = what;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "vgnsl: error: " << kind << ": " << msg << '\n';
    return code;
  };
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (action) action();
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "vgnsl 1.0.0\n";
    return 0;
  } catch (const CLI::Success&) {
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  } catch (const IoError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}

}  // namespace vgnsl
