#pragma once

// Checkpoint file: "VGNC", u32 version, u64 header length, a UTF-8 JSON
// header, then the raw little-endian f32 payload of every tensor listed in
// the header, in header order.

#include <bit>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vgnsl/corpus.hpp"
#include "vgnsl/training.hpp"

namespace vgnsl {

inline constexpr std::string_view kCheckpointMagic = "VGNC";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Vocabulary vocab;
  TrainConfig config;
  TrainState<float> state;
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr_phase1", c.lr_phase1},
      {"lr_phase2", c.lr_phase2},
      {"phase_switch_epoch", c.phase_switch_epoch},
      {"beta1", c.adam.beta1},
      {"beta2", c.adam.beta2},
      {"eps", c.adam.eps},
      {"seed", c.seed},
      {"margin", c.hyper.margin},
      {"concrete_margin", c.hyper.concrete_margin},
      {"lambda", c.hyper.lambda},
      {"head_initial", c.head_initial},
      {"embed_dim", c.embed_dim},
      {"hidden_dim", c.hidden_dim},
      {"normalize_leaves", c.normalize_leaves},
      {"leaves_in_loss", c.leaves_in_loss},
      {"reset_moments_at_switch", c.reset_moments_at_switch},
      {"reward_baseline", c.reward_baseline},
      {"baseline_decay", c.baseline_decay},
      {"clip_norm", c.clip_norm},
  };
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_phase1 = j.at("lr_phase1").get<double>();
  c.lr_phase2 = j.at("lr_phase2").get<double>();
  c.phase_switch_epoch = j.at("phase_switch_epoch").get<int>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hyper.margin = j.at("margin").get<double>();
  c.hyper.concrete_margin = j.at("concrete_margin").get<double>();
  c.hyper.lambda = j.at("lambda").get<double>();
  c.head_initial = j.at("head_initial").get<bool>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.normalize_leaves = j.at("normalize_leaves").get<bool>();
  c.leaves_in_loss = j.at("leaves_in_loss").get<bool>();
  c.reset_moments_at_switch = j.at("reset_moments_at_switch").get<bool>();
  c.reward_baseline = j.at("reward_baseline").get<bool>();
  c.baseline_decay = j.at("baseline_decay").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

namespace detail {

// Visits (name, tensor) for parameters then optimizer moments; works on
// const and mutable checkpoints alike.
template <class Ck, class F>
void for_each_checkpoint_tensor(Ck& ck, F&& f) {
  auto prefixed = [&](const std::string& prefix) {
    return [&f, prefix](std::string_view n, auto& t) { f(prefix + std::string(n), t); };
  };
  ck.state.params.for_each(prefixed(""));
  ck.state.adam_vse.m.for_each(prefixed("adam.vse.m."));
  ck.state.adam_vse.v.for_each(prefixed("adam.vse.v."));
  ck.state.adam_policy.m.for_each(prefixed("adam.policy.m."));
  ck.state.adam_policy.v.for_each(prefixed("adam.policy.v."));
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  detail::for_each_checkpoint_tensor(ck, [&](const std::string& name, const Tensor<float>& t) {
    if (t.empty()) return;
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"}});
    payload.reserve(payload.size() + 4 * t.size());
    for (float x : t.data) detail::put_u32(payload, std::bit_cast<std::uint32_t>(x));
  });
  const auto& st = ck.state;
  nlohmann::json header = {
      {"format", "vgnsl-checkpoint"},
      {"epoch", st.epoch},
      {"vocab", ck.vocab.words()},
      {"config", config_to_json(ck.config)},
      {"model", {{"normalize_leaves", st.params.normalize_leaves},
                 {"frozen_columns", st.params.frozen_columns}}},
      {"optimizer", {{"vse_steps", st.adam_vse.steps}, {"policy_steps", st.adam_policy.steps}}},
      {"baseline", {{"value", st.baseline}, {"ready", st.baseline_ready}}},
      {"tensors", tensors},
  };
  const std::string text = header.dump();
  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  if (r.take(4) != kCheckpointMagic) throw FormatError(what + ": bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  const auto header_len = r.u64();
  const auto text = r.take(header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }

  Checkpoint ck;
  try {
    const auto words = header.at("vocab").get<std::vector<std::string>>();
    if (words.empty() || words[0] != Vocabulary::kUnknown)
      throw FormatError(what + ": vocabulary must start with <unk>");
    ck.vocab = Vocabulary::from_words(std::span<const std::string>(words).subspan(1));
    ck.config = config_from_json(header.at("config"));
    ck.state.epoch = header.at("epoch").get<int>();
    ck.state.params.normalize_leaves = header.at("model").at("normalize_leaves").get<bool>();
    ck.state.params.frozen_columns = header.at("model").at("frozen_columns").get<std::size_t>();
    ck.state.adam_vse.steps = header.at("optimizer").at("vse_steps").get<std::uint64_t>();
    ck.state.adam_policy.steps = header.at("optimizer").at("policy_steps").get<std::uint64_t>();
    ck.state.baseline = header.at("baseline").at("value").get<double>();
    ck.state.baseline_ready = header.at("baseline").at("ready").get<bool>();

    std::map<std::string, Tensor<float>*> slots;
    detail::for_each_checkpoint_tensor(ck, [&](const std::string& name, Tensor<float>& t) {
      slots.emplace(name, &t);
    });
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "f32")
        throw FormatError(what + ": tensor '" + name + "' is not f32");
      auto it = slots.find(name);
      if (it == slots.end()) throw FormatError(what + ": unknown tensor '" + name + "'");
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (Tensor<float>::numel_of(shape) > r.remaining() / 4)
        throw FormatError(what + ": truncated payload");
      Tensor<float>& t = *it->second;
      t = Tensor<float>(shape);
      for (auto& x : t.data) x = r.f32();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after payload");
  ck.state.params.check_consistent();
  if (static_cast<int>(ck.state.params.vocab_size()) != ck.vocab.size())
    throw FormatError(what + ": embedding rows do not match vocabulary size");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file_bytes(path), path);
}

}  // namespace vgnsl
