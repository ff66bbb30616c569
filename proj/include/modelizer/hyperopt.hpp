#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <limits>
#include <map>
#include <vector>

#include "modelizer/checkpoint.hpp"
#include "modelizer/errors.hpp"
#include "modelizer/rng.hpp"
#include "modelizer/trainer.hpp"
#include "modelizer/transformer.hpp"

namespace modelizer {

struct SearchSpace {
  std::vector<std::size_t> encoder_layers{1, 2};
  std::vector<std::size_t> decoder_layers{1, 2, 3, 4};
  std::vector<std::size_t> embedding_size{128, 256};
  std::vector<std::size_t> feedforward_size{1024, 2048, 4096};
  std::vector<std::size_t> attention_heads{16, 32, 64};
  std::vector<double> learning_rate{1e-4, 5e-4};
  std::vector<double> weight_decay{1e-4, 5e-4, 1e-2};
  std::vector<Schedule> schedule{Schedule::cosine, Schedule::step, Schedule::multiplicative};

  // Enumeration order is the nesting order of the fields above; combinations
  // that violate the model invariants are left out.
  std::vector<ModelConfig> model_configs(const ModelConfig& base) const {
    std::vector<ModelConfig> out;
    for (auto e : encoder_layers)
      for (auto d : decoder_layers)
        for (auto emb : embedding_size)
          for (auto ff : feedforward_size)
            for (auto h : attention_heads) {
              ModelConfig c = base;
              c.encoder_layers = e;
              c.decoder_layers = d;
              c.embedding_size = emb;
              c.feedforward_size = ff;
              c.attention_heads = h;
              try {
                c.validate();
              } catch (const ConfigInvalid&) {
                continue;
              }
              out.push_back(c);
            }
    return out;
  }

  std::vector<TrainConfig> train_configs(const TrainConfig& base) const {
    std::vector<TrainConfig> out;
    for (double lr : learning_rate)
      for (double wd : weight_decay)
        for (Schedule s : schedule) {
          TrainConfig t = base;
          t.learning_rate = lr;
          t.weight_decay = wd;
          t.schedule = s;
          out.push_back(t);
        }
    return out;
  }
};

struct SearchOptions {
  std::size_t phase1_epochs = 3;
  std::size_t phase2_epochs = 5;
  // fixed regime of phase 1
  double phase1_learning_rate = 1e-4;
  double phase1_weight_decay = 1e-2;
  Schedule phase1_schedule = Schedule::cosine;
  std::size_t prune_from_epoch = 2;  // 1-based
  std::size_t batch_size = 32;
  double validation_fraction = 0.2;
  double dropout = 0.1;
  std::size_t context_window = 5000;
  std::uint64_t seed = 0;

  TrainConfig phase1_train() const {
    TrainConfig t;
    t.learning_rate = phase1_learning_rate;
    t.weight_decay = phase1_weight_decay;
    t.schedule = phase1_schedule;
    t.epochs = phase1_epochs;
    t.batch_size = batch_size;
    t.seed = seed;
    t.validation_fraction = validation_fraction;
    return t;
  }

  ModelConfig base_model() const {
    ModelConfig m;
    m.dropout = dropout;
    m.context_window = context_window;
    return m;
  }
};

// The configuration searched results are compared against: the smallest
// architecture of the default space trained with the phase-1 regime.
inline ModelConfig default_search_model(const SearchOptions& o = {}) {
  ModelConfig m = o.base_model();
  m.encoder_layers = 1;
  m.decoder_layers = 1;
  m.embedding_size = 128;
  m.feedforward_size = 1024;
  m.attention_heads = 16;
  return m;
}

struct TrialResult {
  std::size_t candidate = 0;  // position in enumeration order
  ModelConfig model;
  TrainConfig train;
  double validation_loss = 0;  // final, or at pruning time
  bool pruned = false;
  std::size_t epochs_completed = 0;
  std::vector<double> history;
};

struct PhaseResult {
  std::vector<TrialResult> trials;
  std::size_t best = 0;  // index into trials

  const TrialResult& winner() const { return trials.at(best); }
};

struct TrainingData {
  const Dataset& data;
  std::size_t src_vocab;
  std::size_t tgt_vocab;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Candidate order for a phase: a seeded permutation, truncated to `trials`.
// Candidates in `first` lead in the given order.
inline std::vector<std::size_t> sample_candidates(std::size_t space, std::size_t trials, std::uint64_t seed,
                                                  std::uint64_t phase, const std::vector<std::size_t>& first = {}) {
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < space; ++i) {
    if (std::find(first.begin(), first.end(), i) == first.end()) rest.push_back(i);
  }
  Rng rng(derive_seed(seed, phase));
  rng.shuffle(rest);
  std::vector<std::size_t> order = first;
  order.insert(order.end(), rest.begin(), rest.end());
  order.resize(std::min(trials, order.size()));
  return order;
}

// Runs trials in order with median pruning, then picks the lowest final loss
// among unpruned trials; ties go to the earlier candidate in enumeration order.
inline PhaseResult run_phase(const std::vector<std::pair<ModelConfig, TrainConfig>>& candidates,
                             const std::vector<std::size_t>& order, const TrainingData& td, const SearchOptions& o) {
  PhaseResult r;
  std::map<std::size_t, std::vector<double>> ledger;  // epoch -> losses of completed trials
  for (std::size_t c : order) {
    const auto& [mcfg, tcfg] = candidates[c];
    TrialResult t{c, mcfg, tcfg, 0, false, 0, {}};
    auto model = init_model(mcfg, td.src_vocab, td.tgt_vocab, o.seed);
    const auto h = train(model, td.data, tcfg, [&](std::size_t epoch, double loss) {
      t.history.push_back(loss);
      t.epochs_completed = epoch + 1;
      t.validation_loss = loss;
      if (epoch + 1 >= o.prune_from_epoch) {
        auto it = ledger.find(epoch);
        if (it != ledger.end() && !it->second.empty() && loss > median(it->second)) {
          t.pruned = true;
          return false;
        }
      }
      return true;
    });
    if (t.epochs_completed == 0) t.validation_loss = h.initial_validation;
    if (!t.pruned) {
      for (std::size_t e = 0; e < t.history.size(); ++e) ledger[e].push_back(t.history[e]);
    }
    r.trials.push_back(std::move(t));
  }
  bool found = false;
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    if (t.pruned) continue;
    const auto& b = r.trials[r.best];
    if (!found || t.validation_loss < b.validation_loss ||
        (t.validation_loss == b.validation_loss && t.candidate < b.candidate)) {
      r.best = i;
      found = true;
    }
  }
  return r;
}

}  // namespace detail

// Phase 1: architecture search under the fixed phase-1 regime.
inline PhaseResult search_model_params(const SearchSpace& space, const TrainingData& td, std::size_t trials,
                                       const SearchOptions& o) {
  const auto configs = space.model_configs(o.base_model());
  if (configs.empty() || trials == 0) throw EmptySpace();
  std::vector<std::pair<ModelConfig, TrainConfig>> candidates;
  for (const auto& c : configs) candidates.emplace_back(c, o.phase1_train());
  return detail::run_phase(candidates, detail::sample_candidates(candidates.size(), trials, o.seed, 1), td, o);
}

// Phase 2: learning-rate regime for the phase-1 winner. The phase-1 regime is
// always tried first when it lies in the space, so the winner is never worse
// than it under the same budget.
inline PhaseResult search_learning_rate(const SearchSpace& space, const ModelConfig& best, const TrainingData& td,
                                        std::size_t trials, const SearchOptions& o) {
  TrainConfig base = o.phase1_train();
  base.epochs = o.phase2_epochs;
  const auto regimes = space.train_configs(base);
  if (regimes.empty() || trials == 0) throw EmptySpace();
  std::vector<std::pair<ModelConfig, TrainConfig>> candidates;
  std::vector<std::size_t> first;
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    candidates.emplace_back(best, regimes[i]);
    if (regimes[i] == base) first.push_back(i);
  }
  return detail::run_phase(candidates, detail::sample_candidates(candidates.size(), trials, o.seed, 2, first), td, o);
}

struct SearchOutcome {
  PhaseResult phase1;
  PhaseResult phase2;
  ModelConfig model() const { return phase1.winner().model; }
  TrainConfig train() const { return phase2.winner().train; }
};

inline SearchOutcome two_phase_search(const SearchSpace& space, const TrainingData& td, std::size_t phase1_trials,
                                      std::size_t phase2_trials, const SearchOptions& o) {
  SearchOutcome out;
  out.phase1 = search_model_params(space, td, phase1_trials, o);
  out.phase2 = search_learning_rate(space, out.phase1.winner().model, td, phase2_trials, o);
  return out;
}

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"schedule", to_string(t.schedule)},
          {"clip_gradients", t.clip_gradients},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"validation_fraction", t.validation_fraction}};
}

inline nlohmann::ordered_json phase_to_json(const PhaseResult& p) {
  nlohmann::ordered_json trials = nlohmann::ordered_json::array();
  for (const auto& t : p.trials) {
    trials.push_back({{"candidate", t.candidate},
                      {"model", model_config_to_json(t.model)},
                      {"train", train_config_to_json(t.train)},
                      {"validation_loss", t.validation_loss},
                      {"pruned", t.pruned},
                      {"epochs_completed", t.epochs_completed},
                      {"history", t.history}});
  }
  return {{"best", p.best}, {"trials", trials}};
}

inline nlohmann::ordered_json search_report(const SearchOutcome& s) {
  return {{"phase1", phase_to_json(s.phase1)},
          {"phase2", phase_to_json(s.phase2)},
          {"model", model_config_to_json(s.model())},
          {"train", train_config_to_json(s.train())}};
}

}  // namespace modelizer
