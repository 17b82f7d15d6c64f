#pragma once

// Alternating optimization. Each minibatch: sample a tree per caption, take
// an Adam step on (phi, embeddings) against the ranking loss, then score
// every sampled merge with the updated representations and take a REINFORCE
// Adam step on the scoring network.

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "vgnsl/corpus.hpp"
#include "vgnsl/optim.hpp"
#include "vgnsl/parser.hpp"
#include "vgnsl/vse.hpp"

namespace vgnsl {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr_phase1 = 5e-4;
  double lr_phase2 = 5e-5;
  int phase_switch_epoch = 15;
  AdamConfig adam;
  std::uint64_t seed = 0;
  VseHyper hyper;
  bool head_initial = false;

  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 128;
  bool normalize_leaves = true;
  bool leaves_in_loss = true;
  bool reset_moments_at_switch = true;
  // Moving-average reward baseline for REINFORCE; off means plain REINFORCE.
  bool reward_baseline = false;
  double baseline_decay = 0.9;
  double clip_norm = 2.0;  // <= 0 disables clipping
  int workers = 1;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch size must be >= 2 for in-batch negatives");
    if (!(lr_phase1 > 0) || !(lr_phase2 > 0)) throw ConfigError("learning rates must be positive");
    if (phase_switch_epoch < 0) throw ConfigError("phase switch epoch must be >= 0");
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model dimensions must be positive");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!(baseline_decay >= 0 && baseline_decay < 1)) throw ConfigError("baseline decay must be in [0, 1)");
    check_hyper(hyper);
  }

  double learning_rate(int epoch) const {
    return epoch < phase_switch_epoch ? lr_phase1 : lr_phase2;
  }
};

template <class T>
struct TrainState {
  ModelParams<T> params;
  AdamState<T> adam_vse;     // embedding, visual.phi
  AdamState<T> adam_policy;  // score network
  int epoch = 0;             // completed epochs
  double baseline = 0;
  bool baseline_ready = false;

  static TrainState fresh(ModelParams<T> params) {
    TrainState s;
    const auto dims = params.dims();
    s.params = std::move(params);
    s.adam_vse = AdamState<T>::zeros(dims);
    s.adam_policy = AdamState<T>::zeros(dims);
    for (auto* st : {&s.adam_vse.m, &s.adam_vse.v}) {
      st->w1 = {};
      st->b1 = {};
      st->w2 = {};
      st->b2 = {};
    }
    for (auto* st : {&s.adam_policy.m, &s.adam_policy.v}) {
      st->embedding = {};
      st->phi = {};
    }
    return s;
  }
};

template <class T>
ModelParams<T> make_model(const TrainConfig& cfg, std::size_t vocab_size, std::size_t image_dim) {
  auto p = init_params<T>({vocab_size, cfg.embed_dim, cfg.hidden_dim, image_dim}, cfg.seed);
  p.normalize_leaves = cfg.normalize_leaves;
  return p;
}

template <class T>
struct ReinforceItem {
  const ParseResult<T>* parse = nullptr;
  std::span<const T> rewards;  // one per trace step
};

// Gradient of -sum_t r_t log pi(j*_t) with respect to the scoring network,
// evaluated on the constituent vectors recorded while sampling.
template <class T>
GradientSet<T> reinforce_update(std::span<const ReinforceItem<T>> items, const ModelParams<T>& p) {
  GradientSet<T> g;
  g.w1 = p.w1.zeros_like();
  g.b1 = p.b1.zeros_like();
  g.w2 = p.w2.zeros_like();
  g.b2 = p.b2.zeros_like();
  const std::size_t d = p.embed_dim();
  const std::size_t h = p.hidden_dim();
  std::vector<Vec<T>> pre;
  Vec<T> dh(h);

  for (const auto& item : items) {
    const auto& res = *item.parse;
    const auto& steps = res.trace.steps;
    if (item.rewards.size() != steps.size())
      throw ShapeError("reinforce: one reward per merge step required");
    std::vector<int> frontier(static_cast<std::size_t>(res.tree.num_leaves()));
    for (std::size_t i = 0; i < frontier.size(); ++i) frontier[i] = static_cast<int>(i);

    for (std::size_t t = 0; t < steps.size(); ++t) {
      const T r = item.rewards[t];
      const std::size_t pairs = frontier.size() - 1;
      if (r != T(0) && pairs > 1) {
        pre.assign(pairs, Vec<T>(h));
        Vec<T> scores(pairs);
        for (std::size_t j = 0; j < pairs; ++j) {
          const auto& x = res.vectors[static_cast<std::size_t>(frontier[j])];
          const auto& y = res.vectors[static_cast<std::size_t>(frontier[j + 1])];
          scores[j] = score_pair<T>(x, y, p, pre[j]);
        }
        const Vec<T> logp = log_softmax<T>(scores);
        const auto chosen = static_cast<std::size_t>(steps[t].index);
        for (std::size_t j = 0; j < pairs; ++j) {
          // d(-r log pi_chosen)/ds_j = -r (1[j = chosen] - p_j)
          const T gs = -r * ((j == chosen ? T(1) : T(0)) - std::exp(logp[j]));
          if (gs == T(0)) continue;
          g.b2.data[0] += gs;
          for (std::size_t c = 0; c < h; ++c) {
            const bool on = pre[j][c] > T(0);
            if (on) g.w2.data[c] += gs * pre[j][c];
            dh[c] = on ? gs * p.w2.data[c] : T(0);
            g.b1.data[c] += dh[c];
          }
          const auto& x = res.vectors[static_cast<std::size_t>(frontier[j])];
          const auto& y = res.vectors[static_cast<std::size_t>(frontier[j + 1])];
          for (std::size_t q = 0; q < d; ++q) {
            auto wx = g.w1.row(q);
            auto wy = g.w1.row(d + q);
            for (std::size_t c = 0; c < h; ++c) {
              wx[c] += x[q] * dh[c];
              wy[c] += y[q] * dh[c];
            }
          }
        }
      }
      const auto j = static_cast<std::size_t>(steps[t].index);
      frontier[j] = steps[t].node;
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    }
  }
  return g;
}

struct BatchLog {
  int epoch = 0;
  int batch = 0;
  double loss = 0;
  double mean_reward = 0;
  double lr = 0;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;    // per batch
  double mean_reward = 0;  // per merge step
  double merges_per_second = 0;
  std::size_t merges = 0;
  std::size_t batches = 0;
};

namespace detail {

// Runs f(i) for i in [0, n) on up to `workers` threads; f must only write
// to slot i of its outputs.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += w) f(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class T>
void zero_frozen(GradientSet<T>& g, const ModelParams<T>& p) {
  if (p.frozen_columns == 0 || g.embedding.empty()) return;
  for (std::size_t r = 0; r < g.embedding.rows(); ++r) {
    auto row = g.embedding.row(r);
    for (std::size_t c = 0; c < p.frozen_columns; ++c)
      if (p.is_frozen(r, c)) row[c] = T(0);
  }
}

}  // namespace detail

using BatchCallback = std::function<void(const BatchLog&)>;

// One pass over the corpus. state.epoch is the index of the epoch to run
// and is incremented on return.
template <class T>
EpochStats train_epoch(const Corpus& corpus, TrainState<T>& state, const TrainConfig& cfg,
                       const BatchCallback& on_batch = {}) {
  cfg.validate();
  if (corpus.examples.empty()) throw ShapeError("train_epoch: empty corpus");
  const int epoch = state.epoch;
  if (epoch == cfg.phase_switch_epoch && epoch > 0 && cfg.reset_moments_at_switch) {
    state.adam_vse.reset();
    state.adam_policy.reset();
  }
  const double lr = cfg.learning_rate(epoch);
  auto& p = state.params;

  EpochStats stats;
  stats.epoch = epoch;
  double loss_sum = 0;
  double reward_sum = 0;
  const auto started = std::chrono::steady_clock::now();

  const auto groups = batches(corpus.examples.size(), cfg.batch_size, cfg.seed, true,
                              static_cast<std::uint64_t>(epoch), true);
  for (std::size_t bi = 0; bi < groups.size(); ++bi) {
    const auto& group = groups[bi];
    const std::size_t b = group.size();

    std::vector<ParseResult<T>> parses(b);
    detail::parallel_for(b, cfg.workers, [&](std::size_t i) {
      const auto ex = static_cast<std::uint64_t>(group[i]);
      Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), ex}));
      parses[i] = parse<T>(corpus.examples[ex].caption.ids, p, SelectMode::kSample, rng);
    });

    // Ranking-loss step on phi and the embeddings.
    std::vector<VseItem<T>> items(b);
    std::vector<std::span<const float>> feats(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& ex = corpus.examples[static_cast<std::size_t>(group[i])];
      feats[i] = corpus.feature(ex);
      items[i] = VseItem<T>{ex.caption.ids, &parses[i].tree, feats[i]};
    }
    auto vse = vse_backward<T>(items, p, cfg.hyper, cfg.leaves_in_loss);
    detail::zero_frozen(vse.grads, p);
    clip_grad_norm(vse.grads, cfg.clip_norm);
    optimizer_step(p, vse.grads, state.adam_vse, lr, cfg.adam);

    // Rewards under the updated representations of the sampled trees.
    std::vector<std::vector<Vec<T>>> node_vecs(b);
    std::vector<std::vector<Vec<T>>> matched(b);
    detail::parallel_for(b, cfg.workers, [&](std::size_t i) {
      node_vecs[i] = constituent_vectors<T>(parses[i].tree, items[i].ids, p);
      for (int id : matched_nodes(parses[i].tree, cfg.leaves_in_loss))
        matched[i].push_back(node_vecs[i][static_cast<std::size_t>(id)]);
    });
    const auto mb = MatchBatch<T>::build(std::move(matched), feats, p);
    std::vector<Vec<T>> rewards(b);
    detail::parallel_for(b, cfg.workers, [&](std::size_t i) {
      rewards[i] = step_rewards<T>(parses[i].tree, node_vecs[i], i, mb, cfg.hyper, cfg.head_initial);
    });

    double batch_reward = 0;
    std::size_t batch_steps = 0;
    for (const auto& r : rewards) {
      for (T x : r) batch_reward += static_cast<double>(x);
      batch_steps += r.size();
    }
    const double mean_reward = batch_steps ? batch_reward / static_cast<double>(batch_steps) : 0.0;
    if (cfg.reward_baseline) {
      if (state.baseline_ready) {
        for (auto& r : rewards)
          for (T& x : r) x -= static_cast<T>(state.baseline);
      }
      state.baseline = state.baseline_ready
                           ? cfg.baseline_decay * state.baseline + (1 - cfg.baseline_decay) * mean_reward
                           : mean_reward;
      state.baseline_ready = true;
    }

    std::vector<ReinforceItem<T>> ritems(b);
    for (std::size_t i = 0; i < b; ++i) ritems[i] = ReinforceItem<T>{&parses[i], rewards[i]};
    auto pg = reinforce_update<T>(ritems, p);
    clip_grad_norm(pg, cfg.clip_norm);
    optimizer_step(p, pg, state.adam_policy, lr, cfg.adam);

    loss_sum += static_cast<double>(vse.loss);
    reward_sum += batch_reward;
    stats.merges += batch_steps;
    ++stats.batches;
    if (on_batch)
      on_batch(BatchLog{epoch, static_cast<int>(bi), static_cast<double>(vse.loss), mean_reward, lr});
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  stats.mean_loss = stats.batches ? loss_sum / static_cast<double>(stats.batches) : 0.0;
  stats.mean_reward = stats.merges ? reward_sum / static_cast<double>(stats.merges) : 0.0;
  stats.merges_per_second = secs > 0 ? static_cast<double>(stats.merges) / secs : 0.0;
  ++state.epoch;
  return stats;
}

// Greedy parses of every caption; no images involved.
template <class T>
std::vector<BinaryTree> parse_all(std::span<const Caption> captions, const ModelParams<T>& p,
                                  int workers = 1) {
  std::vector<BinaryTree> out(captions.size());
  detail::parallel_for(captions.size(), workers,
                       [&](std::size_t i) { out[i] = parse_greedy<T>(captions[i].ids, p).tree; });
  return out;
}

}  // namespace vgnsl
