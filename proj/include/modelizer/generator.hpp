#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modelizer/derivation.hpp"
#include "modelizer/errors.hpp"
#include "modelizer/grammar.hpp"
#include "modelizer/hashing.hpp"
#include "modelizer/parallel.hpp"
#include "modelizer/placeholders.hpp"
#include "modelizer/rng.hpp"

namespace modelizer {

struct GeneratorConfig {
  std::size_t min_expansions = 10;
  std::size_t max_expansions = 20;
  std::size_t attempts_per_config = 100000;
  std::size_t escalation_step = 10;
  bool sliding_window = false;
  std::size_t worker_count = 1;
  std::size_t batch_size = 64;  // attempts per worker per round
  std::uint64_t master_seed = 0;
  std::size_t escalation_ceiling = 10;
  std::string refiner;  // empty: no semantic refinement

  void validate() const {
    if (min_expansions == 0 || min_expansions > max_expansions)
      throw ConfigInvalid("generator bounds must satisfy 0 < min <= max");
    if (escalation_step == 0) throw ConfigInvalid("escalation_step must be > 0");
    if (worker_count == 0) throw ConfigInvalid("worker_count must be >= 1");
    if (batch_size == 0) throw ConfigInvalid("batch_size must be >= 1");
    if (attempts_per_config == 0) throw ConfigInvalid("attempts_per_config must be >= 1");
  }
};

inline std::vector<std::size_t> distribute_budget(std::size_t total, std::size_t workers) {
  if (workers == 0) throw ConfigInvalid("distribute_budget needs at least one worker");
  std::vector<std::size_t> out(workers, total / workers);
  for (std::size_t i = 0; i < total % workers; ++i) ++out[i];
  return out;
}

struct Synthesized {
  std::string text;
  std::string hash;
  std::size_t min_expansions;
  std::size_t max_expansions;
  std::uint64_t seed;
};

// Stateful unique-input synthesizer. Attempt i uses seed derive_seed(master, i)
// no matter which worker runs it, and candidates are merged into the store in
// attempt order, so results do not depend on thread timing.
class Synthesizer {
 public:
  // `planned_total` sizes the sliding-window segments.
  Synthesizer(const PreparedGrammar& g, GeneratorConfig cfg, HashStore& store, Hasher hasher = Hasher(),
              std::size_t planned_total = 0)
      : g_(g),
        cfg_(std::move(cfg)),
        store_(store),
        hasher_(std::move(hasher)),
        refiner_(make_refiner(cfg_.refiner)),
        planned_(planned_total) {
    cfg_.validate();
    names_.assign(g_.grammar().placeholders.begin(), g_.grammar().placeholders.end());
  }

  std::size_t escalations() const { return escalations_; }
  std::size_t attempts() const { return next_attempt_; }
  std::pair<std::size_t, std::size_t> current_bounds() const { return bounds(); }

  std::vector<Synthesized> next(std::size_t n) {
    std::vector<Synthesized> out;
    out.reserve(n);
    const std::size_t round_size = cfg_.worker_count * cfg_.batch_size;
    std::vector<std::optional<Synthesized>> round(round_size);
    while (out.size() < n) {
      const auto [lo, hi] = bounds();
      const std::uint64_t base = next_attempt_;
      parallel_for(round_size, cfg_.worker_count, [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(cfg_.master_seed, base + i);
        try {
          const auto tree = expand(g_, seed, lo, hi);
          std::string text = refiner_(augment_placeholders(tree_to_string(tree), names_));
          std::string digest = hasher_(text);
          round[i] = Synthesized{std::move(text), std::move(digest), lo, hi, seed};
        } catch (const BudgetInfeasible&) {
          round[i].reset();
        }
      });
      bool any_new = false;
      std::size_t used = 0;
      for (std::size_t i = 0; i < round_size && out.size() < n; ++i) {
        used = i + 1;
        if (!round[i]) {
          ++since_success_;
          continue;
        }
        if (store_.insert(round[i]->hash)) {
          out.push_back(std::move(*round[i]));
          ++produced_;
          any_new = true;
          since_success_ = 0;
          if (cfg_.sliding_window && bounds() != std::make_pair(lo, hi)) {
            // the window moved: discard the rest of this round
            break;
          }
        } else {
          ++since_success_;
        }
        if (since_success_ >= cfg_.attempts_per_config) break;
      }
      next_attempt_ += used;
      if (out.size() >= n) break;
      if (!any_new || since_success_ >= cfg_.attempts_per_config) escalate();
    }
    return out;
  }

 private:
  std::pair<std::size_t, std::size_t> bounds() const {
    std::size_t shift = escalations_ * cfg_.escalation_step;
    if (cfg_.sliding_window) {
      const std::size_t segments = 4;
      const auto sizes = distribute_budget(std::max(planned_, segments), segments);
      std::size_t seen = 0, segment = 0;
      while (segment + 1 < segments && produced_ >= seen + sizes[segment]) seen += sizes[segment++];
      shift += segment * cfg_.escalation_step;
    }
    return {cfg_.min_expansions + shift, cfg_.max_expansions + shift};
  }

  void escalate() {
    if (escalations_ >= cfg_.escalation_ceiling) {
      const auto [lo, hi] = bounds();
      throw GrammarExhausted("no new sample after " + std::to_string(escalations_) +
                             " escalations (bounds [" + std::to_string(lo) + ", " + std::to_string(hi) + "])");
    }
    ++escalations_;
    since_success_ = 0;
  }

  const PreparedGrammar& g_;
  GeneratorConfig cfg_;
  HashStore& store_;
  Hasher hasher_;
  Refiner refiner_;
  std::vector<std::string> names_;
  std::size_t planned_;
  std::size_t produced_ = 0;
  std::size_t escalations_ = 0;
  std::size_t since_success_ = 0;
  std::uint64_t next_attempt_ = 0;
};

inline std::vector<std::string> synthesize_unique(const PreparedGrammar& g, const GeneratorConfig& cfg, std::size_t n,
                                                  HashStore& store) {
  Synthesizer s(g, cfg, store, Hasher(), n);
  std::vector<std::string> out;
  for (auto& x : s.next(n)) out.push_back(std::move(x.text));
  return out;
}

}  // namespace modelizer
