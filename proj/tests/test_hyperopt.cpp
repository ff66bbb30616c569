#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "modelizer/hyperopt.hpp"
#include "modelizer/rng.hpp"

namespace modelizer {
namespace {

Dataset copy_task(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> s;
    const std::size_t len = 2 + rng.below(4);
    for (std::size_t k = 0; k < len; ++k) s.push_back(static_cast<int>(4 + rng.below(8)));
    d.push_back({s, s});
  }
  return d;
}

SearchSpace tiny_space() {
  SearchSpace s;
  s.encoder_layers = {1};
  s.decoder_layers = {1, 2};
  s.embedding_size = {8, 16};
  s.feedforward_size = {16};
  s.attention_heads = {2};
  return s;
}

SearchOptions options() {
  SearchOptions o;
  o.seed = 3;
  o.batch_size = 8;
  o.phase1_learning_rate = 1e-3;
  o.context_window = 32;
  return o;
}

const Dataset& data() {
  static const Dataset d = copy_task(40, 1);
  return d;
}

TrainingData td() { return {data(), 12, 12}; }

TEST(SearchSpace, DefaultSpaceIsValid) {
  const SearchSpace s;
  const auto models = s.model_configs(ModelConfig{});
  EXPECT_EQ(models.size(), 2u * 4 * 2 * 3 * 3);
  for (const auto& m : models) EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(s.train_configs(TrainConfig{}).size(), 2u * 3 * 3);
}

TEST(SearchSpace, InvalidCombinationsAreSkipped) {
  SearchSpace s = tiny_space();
  s.attention_heads = {2, 3};
  for (const auto& m : s.model_configs(ModelConfig{})) EXPECT_EQ(m.attention_heads, 2u);
}

TEST(ModelSearch, SingleTrial) {
  const auto r = search_model_params(tiny_space(), td(), 1, options());
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  EXPECT_FALSE(r.winner().pruned);
  EXPECT_EQ(r.winner().epochs_completed, 3u);
}

TEST(ModelSearch, EveryConfigOnceWhenTrialsCoverSpace) {
  const auto r = search_model_params(tiny_space(), td(), 10, options());
  ASSERT_EQ(r.trials.size(), 4u);
  std::set<std::size_t> seen;
  for (const auto& t : r.trials) seen.insert(t.candidate);
  EXPECT_EQ(seen.size(), 4u);
}

TEST(ModelSearch, PruningIsSoundAndBudgetHolds) {
  SearchSpace s = tiny_space();
  s.embedding_size = {4, 8, 16};
  s.decoder_layers = {1, 2, 3};
  auto o = options();
  o.phase1_epochs = 4;
  const auto r = search_model_params(s, td(), 9, o);
  std::size_t epochs = 0;
  std::vector<const TrialResult*> completed;
  for (const auto& t : r.trials) {
    epochs += t.epochs_completed;
    ASSERT_EQ(t.history.size(), t.epochs_completed);
    EXPECT_DOUBLE_EQ(t.validation_loss, t.history.back());
    if (t.pruned) {
      const std::size_t e = t.epochs_completed - 1;
      EXPECT_GE(t.epochs_completed, 2u);
      std::vector<double> at;
      for (const auto* c : completed) at.push_back(c->history[e]);
      ASSERT_FALSE(at.empty());
      std::sort(at.begin(), at.end());
      const double med = at.size() % 2 ? at[at.size() / 2] : 0.5 * (at[at.size() / 2 - 1] + at[at.size() / 2]);
      EXPECT_GT(t.validation_loss, med);
    } else {
      EXPECT_EQ(t.epochs_completed, 4u);
      completed.push_back(&t);
    }
  }
  EXPECT_LE(epochs, 9u * 4);
  EXPECT_FALSE(r.winner().pruned);
  for (const auto* c : completed) EXPECT_LE(r.winner().validation_loss, c->validation_loss);
}

TEST(ModelSearch, EmptySpace) {
  SearchSpace s = tiny_space();
  s.attention_heads = {3};
  EXPECT_THROW(search_model_params(s, td(), 4, options()), EmptySpace);
  EXPECT_THROW(search_model_params(tiny_space(), td(), 0, options()), EmptySpace);
  SearchSpace t = tiny_space();
  t.schedule.clear();
  EXPECT_THROW(search_learning_rate(t, t.model_configs(ModelConfig{})[0], td(), 3, options()), EmptySpace);
}

TEST(RateSearch, TiesFollowEnumerationOrder) {
  SearchSpace s = tiny_space();
  s.learning_rate = {0.0};
  s.weight_decay = {1e-4, 1e-2};
  s.schedule = {Schedule::step, Schedule::cosine};
  const auto model = s.model_configs(options().base_model())[0];
  const auto r = search_learning_rate(s, model, td(), 4, options());
  ASSERT_EQ(r.trials.size(), 4u);
  EXPECT_EQ(r.winner().candidate, 0u);
  EXPECT_EQ(r.winner().train.weight_decay, 1e-4);
  EXPECT_EQ(r.winner().train.schedule, Schedule::step);
}

TEST(RateSearch, SingleTrialIsPhaseOneRegime) {
  SearchSpace s = tiny_space();
  s.learning_rate = {1e-4, 1e-3};
  const auto model = s.model_configs(options().base_model())[0];
  const auto r = search_learning_rate(s, model, td(), 1, options());
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.winner().train.learning_rate, 1e-3);
  EXPECT_EQ(r.winner().train.weight_decay, 1e-2);
  EXPECT_EQ(r.winner().train.schedule, Schedule::cosine);
  EXPECT_EQ(r.winner().train.epochs, 5u);
}

TEST(TwoPhase, ReproducibleAndNeverWorseThanFixedRegime) {
  SearchSpace s = tiny_space();
  s.learning_rate = {1e-4, 1e-3, 3e-3};
  const auto a = two_phase_search(s, td(), 3, 4, options());
  const auto b = two_phase_search(s, td(), 3, 4, options());
  EXPECT_EQ(search_report(a).dump(), search_report(b).dump());

  // the fixed-regime trial of phase 2 is the phase-1 winner at equal budget
  const auto& fixed = a.phase2.trials.front();
  EXPECT_EQ(fixed.train.learning_rate, options().phase1_learning_rate);
  EXPECT_LE(a.phase2.winner().validation_loss, fixed.validation_loss);
  EXPECT_EQ(a.model(), a.phase1.winner().model);

  const auto j = search_report(a);
  EXPECT_EQ(j["phase1"]["trials"].size(), 3u);
  EXPECT_EQ(j["phase2"]["trials"].size(), 4u);
}

}  // namespace
}  // namespace modelizer
