#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/rng.hpp"
#include "modelizer/transformer.hpp"

namespace modelizer {

enum class Schedule { cosine, step, multiplicative };

inline std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::cosine:
      return "cosine";
    case Schedule::step:
      return "step";
    case Schedule::multiplicative:
      return "multiplicative";
  }
  return "cosine";
}

inline Schedule parse_schedule(std::string_view s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "step") return Schedule::step;
  if (s == "multiplicative") return Schedule::multiplicative;
  throw ConfigInvalid("unknown schedule '" + std::string(s) + "'");
}

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  Schedule schedule = Schedule::cosine;
  bool clip_gradients = false;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;

  // A zero learning rate is accepted so that a frozen run can be measured.
  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigInvalid("learning rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigInvalid("weight decay must be >= 0");
    if (batch_size == 0) throw ConfigInvalid("batch size must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigInvalid("validation fraction must lie in (0, 1)");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Learning rate for 0-based `epoch` out of `epochs`.
inline double scheduled_rate(const TrainConfig& c, std::size_t epoch) {
  const double e = static_cast<double>(epoch);
  switch (c.schedule) {
    case Schedule::cosine: {
      const double total = static_cast<double>(std::max<std::size_t>(c.epochs, 1));
      return c.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * e / total)));
    }
    case Schedule::step:
      return c.learning_rate * std::pow(0.5, std::floor(e / 3.0));
    case Schedule::multiplicative:
      return c.learning_rate * std::pow(0.95, e);
  }
  return c.learning_rate;
}

// Per-token losses; `initial_validation` is measured before the first update.
struct LossHistory {
  double initial_validation = 0;
  std::vector<double> train;
  std::vector<double> validation;

  friend bool operator==(const LossHistory&, const LossHistory&) = default;
};

template <class T>
class AdamW {
 public:
  explicit AdamW(std::size_t n) : m_(n, T(0)), v_(n, T(0)) {}

  void step(Buffer<T>& p, const Buffer<T>& g, double lr, double wd) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const T decay = static_cast<T>(1.0 - lr * wd);
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step = static_cast<T>(lr / c1);
    const T vcorr = static_cast<T>(1.0 / c2);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = b1 * m_[i] + (T(1) - b1) * g[i];
      v_[i] = b2 * v_[i] + (T(1) - b2) * g[i] * g[i];
      p[i] = p[i] * decay - step * m_[i] / (std::sqrt(v_[i] * vcorr) + static_cast<T>(eps));
    }
  }

  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.98;
  static constexpr double eps = 1e-9;

 private:
  Buffer<T> m_, v_;
  std::size_t t_ = 0;
};

template <class T>
double mean_token_loss(const Seq2Seq<T>& model, const Dataset& data, const std::vector<std::size_t>& idx) {
  double loss = 0;
  std::size_t tokens = 0;
  for (std::size_t i : idx) {
    loss += model.sample_loss(data[i]);
    tokens += model.label_count(data[i]);
  }
  return tokens == 0 ? 0.0 : loss / static_cast<double>(tokens);
}

template <class T>
double mean_token_loss(const Seq2Seq<T>& model, const Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return mean_token_loss(model, data, idx);
}

// Called after every epoch with the 0-based epoch and its validation loss;
// returning false stops training after that epoch.
using EpochHook = std::function<bool(std::size_t, double)>;

namespace detail {

inline void check_lengths(const ModelConfig& cfg, const Dataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t n = std::max(data[i].src.size(), data[i].tgt.size()) + 1;
    if (n > cfg.context_window) throw SequenceTooLong(i, n, cfg.context_window);
  }
}

// Indices grouped into batches of similar length; batch order is shuffled.
inline std::vector<std::vector<std::size_t>> bucketed_batches(const Dataset& data, std::vector<std::size_t> idx,
                                                              std::size_t batch_size, Rng& rng) {
  rng.shuffle(idx);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return data[a].src.size() + data[a].tgt.size() < data[b].src.size() + data[b].tgt.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < idx.size(); i += batch_size)
    batches.emplace_back(idx.begin() + static_cast<long>(i),
                         idx.begin() + static_cast<long>(std::min(i + batch_size, idx.size())));
  rng.shuffle(batches);
  return batches;
}

template <class T>
LossHistory fit(Seq2Seq<T>& model, const Dataset& data, const std::vector<std::size_t>& train_idx,
                const std::vector<std::size_t>& val_idx, const TrainConfig& tcfg, Rng& rng, const EpochHook& hook) {
  LossHistory h;
  h.initial_validation = mean_token_loss(model, data, val_idx);
  AdamW<T> opt(model.param_count());
  Buffer<T> grad(model.param_count());
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = scheduled_rate(tcfg, epoch);
    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;
    const auto batches = bucketed_batches(data, train_idx, tcfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::size_t tokens = 0;
      for (std::size_t i : batches[b]) tokens += model.label_count(data[i]);
      const T scale = static_cast<T>(1.0 / static_cast<double>(tokens));
      std::fill(grad.begin(), grad.end(), T(0));
      double loss = 0;
      for (std::size_t i : batches[b]) loss += model.loss_and_grad(data[i], grad.data(), scale, &rng);
      if (!std::isfinite(loss))
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + " of " +
                            std::to_string(batches.size()) + ", learning rate " + std::to_string(lr));
      if (tcfg.clip_gradients) {
        double norm = 0;
        for (T g : grad) norm += static_cast<double>(g) * static_cast<double>(g);
        norm = std::sqrt(norm);
        if (norm > 1.0) {
          const T f = static_cast<T>(1.0 / norm);
          for (T& g : grad) g *= f;
        }
      }
      opt.step(model.params(), grad, lr, tcfg.weight_decay);
      epoch_loss += loss;
      epoch_tokens += tokens;
    }
    h.train.push_back(epoch_tokens == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_tokens));
    h.validation.push_back(mean_token_loss(model, data, val_idx));
    if (!std::isfinite(h.validation.back()))
      throw NonFiniteLoss("validation loss after epoch " + std::to_string(epoch));
    if (hook && !hook(epoch, h.validation.back())) break;
  }
  return h;
}

}  // namespace detail

// Seeded train/validation split: the first round(n * fraction) indices of a
// shuffled order (at least one) are held out.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
  if (n < 2) throw Error("training needs at least 2 samples to split off validation data");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5b1));
  rng.shuffle(idx);
  const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)),
                                             1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<long>(n_val), idx.end());
  return {train, val};
}

template <class T>
LossHistory train(Seq2Seq<T>& model, const Dataset& data, const TrainConfig& tcfg, const EpochHook& hook = {}) {
  tcfg.validate();
  detail::check_lengths(model.config(), data);
  const auto [train_idx, val_idx] = split_indices(data.size(), tcfg.validation_fraction, tcfg.seed);
  Rng rng(derive_seed(tcfg.seed, 0x7a1));
  return detail::fit(model, data, train_idx, val_idx, tcfg, rng, hook);
}

// Continues training on every given pair; the recorded validation loss is the
// loss on those same pairs.
template <class T>
LossHistory fine_tune(Seq2Seq<T>& model, const Dataset& data, const TrainConfig& tcfg) {
  tcfg.validate();
  if (data.empty()) throw Error("fine-tuning needs at least one pair");
  detail::check_lengths(model.config(), data);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(tcfg.seed, 0xf17e));
  return detail::fit(model, data, idx, idx, tcfg, rng, {});
}

// ---------------------------------------------------------------------------
// Greedy decoding
// ---------------------------------------------------------------------------

inline constexpr double length_multiplier = 1.25;

inline std::size_t default_max_length(std::size_t src_tokens) {
  return static_cast<std::size_t>(std::ceil(length_multiplier * static_cast<double>(src_tokens)));
}

struct Decoded {
  std::vector<int> tokens;  // without BOS/EOS
  bool truncated = false;   // max length reached before EOS
};

// Beam size 1. PAD and BOS are never emitted; ties go to the lowest id.
template <class T>
Decoded greedy_decode(const Seq2Seq<T>& model, const std::vector<int>& src,
                      std::optional<std::size_t> max_len = std::nullopt) {
  if (src.empty()) throw Error("cannot decode an empty source sequence", ErrorClass::usage);
  const std::size_t limit =
      std::min(max_len.value_or(default_max_length(src.size())), model.config().context_window - 1);
  const Mat<T> memory = model.encode(src);
  Decoded out;
  std::vector<int> dec_in{bos_id};
  while (true) {
    if (out.tokens.size() >= limit) {
      out.truncated = true;
      break;
    }
    const Mat<T> logits = model.decode_logits(memory, dec_in);
    const auto last = logits.rows() - 1;
    int best = -1;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (j == pad_id || j == bos_id) continue;
      if (best < 0 || logits(last, j) > logits(last, best)) best = static_cast<int>(j);
    }
    if (best == eos_id) break;
    out.tokens.push_back(best);
    dec_in.push_back(best);
  }
  return out;
}

}  // namespace modelizer
