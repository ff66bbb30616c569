#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "modelizer/checkpoint.hpp"
#include "modelizer/rng.hpp"
#include "modelizer/trainer.hpp"
#include "modelizer/transformer.hpp"

namespace modelizer {
namespace {

// Independent count: per-module weight shapes of a post-norm encoder-decoder
// transformer with biased projections.
std::size_t expected_params(std::size_t vs, std::size_t vt, std::size_t enc, std::size_t dec, std::size_t d,
                            std::size_t ff) {
  const std::size_t mha = 3 * d * d + 3 * d + d * d + d;
  const std::size_t ffn = ff * d + ff + d * ff + d;
  const std::size_t ln = 2 * d;
  return vs * d + vt * d + enc * (mha + ffn + 2 * ln) + dec * (2 * mha + ffn + 3 * ln) + 2 * ln + vt * d + vt;
}

ModelConfig config(std::size_t enc, std::size_t dec, std::size_t d, std::size_t ff, std::size_t heads) {
  ModelConfig c;
  c.encoder_layers = enc;
  c.decoder_layers = dec;
  c.embedding_size = d;
  c.feedforward_size = ff;
  c.attention_heads = heads;
  return c;
}

ModelConfig micro_config() {
  auto c = config(1, 1, 8, 16, 2);
  c.dropout = 0.0;
  c.context_window = 64;
  return c;
}

std::vector<int> random_ids(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> v;
  for (std::size_t i = 0; i < len; ++i) v.push_back(static_cast<int>(reserved_count + rng.below(vocab - reserved_count)));
  return v;
}

// target = source over 20 symbols, lengths 3..8
Dataset copy_task(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = random_ids(rng, 3 + rng.below(6), 24);
    d.push_back({s, s});
  }
  return d;
}

TEST(ModelParams, PublishedConfigurations) {
  struct Row {
    std::size_t vs, vt, enc, dec, d, ff, heads, params;
  };
  // vocabulary sizes, architecture and reported parameter counts of the
  // twelve published configurations
  const Row rows[] = {
      {292, 309, 1, 3, 256, 2048, 32, 6285621},   {309, 292, 1, 3, 256, 2048, 32, 6281252},
      {674, 675, 1, 2, 256, 2048, 16, 4992419},   {675, 674, 1, 1, 256, 2048, 64, 3413410},
      {1501, 656, 1, 3, 256, 2048, 32, 6773136},  {656, 1501, 1, 1, 256, 1024, 16, 2782173},
      {122, 131, 1, 1, 256, 2048, 64, 2993283},   {131, 122, 1, 4, 256, 2048, 16, 7727226},
      {174, 131, 1, 4, 256, 1024, 16, 5116291},   {131, 174, 1, 3, 256, 4096, 64, 10377646},
      {174, 122, 1, 3, 256, 2048, 16, 6159482},   {122, 174, 1, 2, 256, 1024, 32, 3018158},
  };
  for (const auto& r : rows) {
    EXPECT_EQ(expected_params(r.vs, r.vt, r.enc, r.dec, r.d, r.ff), r.params);
    auto c = config(r.enc, r.dec, r.d, r.ff, r.heads);
    c.context_window = 16;
    const Seq2Seq<float> m(c, r.vs, r.vt);
    EXPECT_EQ(m.param_count(), r.params);
  }
}

TEST(ModelParams, ToyConfigMatchesFormulaAndEnumeration) {
  const auto m = init_model(config(1, 1, 64, 256, 4), 300, 310, 1);
  // 610*64 + 49984 (encoder layer) + 66752 (decoder layer) + 256 + 64*310 + 310
  EXPECT_EQ(expected_params(300, 310, 1, 1, 64, 256), 176182u);
  EXPECT_EQ(m.param_count(), 176182u);
  std::size_t enumerated = 0, next = 0;
  for (const auto& p : m.registry()) {
    EXPECT_EQ(p.offset, next) << p.name;
    enumerated += p.rows * p.cols;
    next = p.offset + p.rows * p.cols;
  }
  EXPECT_EQ(enumerated, 176182u);
  EXPECT_EQ(m.params().size(), 176182u);
}

TEST(ModelConfig, Invalid) {
  EXPECT_THROW(config(1, 1, 4, 8, 5).validate(), ConfigInvalid);
  EXPECT_THROW(Seq2Seq<float>(config(1, 1, 4, 8, 5), 10, 10), ConfigInvalid);
  EXPECT_THROW(config(0, 1, 8, 8, 2).validate(), ConfigInvalid);
  EXPECT_THROW(config(1, 0, 8, 8, 2).validate(), ConfigInvalid);
  auto c = config(1, 1, 8, 8, 2);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigInvalid);
  c.dropout = -0.1;
  EXPECT_THROW(c.validate(), ConfigInvalid);
}

TEST(ModelInit, Deterministic) {
  const auto a = init_model(config(1, 1, 64, 256, 4), 30, 31, 7);
  const auto b = init_model(config(1, 1, 64, 256, 4), 30, 31, 7);
  const auto c = init_model(config(1, 1, 64, 256, 4), 30, 31, 8);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(ModelInit, FanInScaling) {
  const auto m = init_model(config(1, 1, 64, 256, 4), 30, 31, 7);
  for (const auto& p : m.registry()) {
    const float* w = m.params().data() + p.offset;
    const std::size_t n = p.rows * p.cols;
    if (p.name.ends_with(".gamma")) {
      EXPECT_TRUE(std::all_of(w, w + n, [](float x) { return x == 1.0f; })) << p.name;
    } else if (p.rows == 1) {
      EXPECT_TRUE(std::all_of(w, w + n, [](float x) { return x == 0.0f; })) << p.name;
    } else {
      const float a = 1.0f / std::sqrt(static_cast<float>(p.cols));
      EXPECT_TRUE(std::all_of(w, w + n, [&](float x) { return std::abs(x) <= a; })) << p.name;
    }
  }
}

TEST(ModelLoss, UntrainedIsNearUniform) {
  const auto m = init_model(config(1, 1, 64, 256, 4), 300, 310, 3);
  Rng rng(11);
  Dataset d;
  for (int i = 0; i < 50; ++i) d.push_back({random_ids(rng, 6, 300), random_ids(rng, 6, 310)});
  const double loss = mean_token_loss(m, d);
  EXPECT_NEAR(loss, std::log(310.0), 0.05 * std::log(310.0));
}

TEST(ModelLoss, PaddingIsNeutral) {
  const auto m = init_model(config(1, 1, 16, 32, 2), 20, 20, 3);
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    Sample s{random_ids(rng, 5, 20), random_ids(rng, 4, 20)};
    Sample padded = s;
    padded.src.insert(padded.src.end(), 3, pad_id);
    padded.tgt.insert(padded.tgt.end(), 6, pad_id);
    EXPECT_EQ(m.sample_loss(s), m.sample_loss(padded));
    EXPECT_EQ(m.label_count(s), m.label_count(padded));
  }
}

TEST(ModelAttention, RowsSumToOne) {
  const auto m = init_model(config(2, 2, 16, 32, 4), 20, 20, 3);
  Rng rng(5);
  const Sample s{random_ids(rng, 7, 20), random_ids(rng, 5, 20)};
  const auto maps = m.attention_maps(s);
  EXPECT_EQ(maps.size(), 4u * (2 + 2 * 2));
  for (const auto& a : maps) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0f, 1e-6f);
  }
}

TEST(ModelAttention, DecoderIsCausal) {
  const auto m = init_model(config(1, 2, 16, 32, 4), 20, 20, 9);
  Rng rng(2);
  const auto src = random_ids(rng, 6, 20);
  const auto memory = m.encode(src);
  std::vector<int> dec_in{bos_id};
  for (int t : random_ids(rng, 6, 20)) dec_in.push_back(t);
  const auto base = m.decode_logits(memory, dec_in);
  for (std::size_t k = 1; k < dec_in.size(); ++k) {
    auto changed = dec_in;
    changed[k] = changed[k] == 4 ? 5 : 4;
    const auto logits = m.decode_logits(memory, changed);
    for (std::size_t t = 0; t < k; ++t) {
      const auto row = static_cast<Eigen::Index>(t);
      EXPECT_LT((logits.row(row) - base.row(row)).cwiseAbs().maxCoeff(), 1e-6f) << "k=" << k << " t=" << t;
    }
    EXPECT_GT((logits.row(static_cast<Eigen::Index>(k)) - base.row(static_cast<Eigen::Index>(k))).cwiseAbs().maxCoeff(),
              0.0f);
  }
}

TEST(ModelGradient, MatchesCentralDifferences) {
  auto m = Seq2Seq<double>(micro_config(), 12, 12);
  m.initialize(21);
  Rng rng(4);
  Dataset batch;
  for (int i = 0; i < 3; ++i) batch.push_back({random_ids(rng, 3 + static_cast<std::size_t>(i), 12), random_ids(rng, 4, 12)});
  std::size_t tokens = 0;
  for (const auto& s : batch) tokens += m.label_count(s);
  const double scale = 1.0 / static_cast<double>(tokens);
  auto loss = [&]() {
    double l = 0;
    for (const auto& s : batch) l += m.sample_loss(s);
    return l * scale;
  };
  Buffer<double> grad(m.param_count(), 0.0);
  for (const auto& s : batch) m.loss_and_grad(s, grad.data(), scale, nullptr);

  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < m.param_count(); ++i) {
    const double keep = m.params()[i];
    m.params()[i] = keep + h;
    const double up = loss();
    m.params()[i] = keep - h;
    const double down = loss();
    m.params()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ModelTrain, LearnsCopyTask) {
  const auto data = copy_task(500, 1);
  auto m = init_model(config(1, 1, 64, 256, 4), 24, 24, 5);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.epochs = 20;
  t.batch_size = 16;
  t.seed = 3;
  const auto h = train(m, data, t);
  ASSERT_EQ(h.validation.size(), 20u);
  EXPECT_LT(h.validation.back(), 0.1 * h.initial_validation);

  const auto held_out = copy_task(200, 99);
  std::size_t exact = 0;
  for (const auto& s : held_out) exact += greedy_decode(m, s.src).tokens == s.tgt ? 1 : 0;
  EXPECT_GE(exact, 190u);
}

TEST(ModelTrain, ZeroLearningRateKeepsLoss) {
  const auto data = copy_task(60, 2);
  auto m = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  const auto before = m;
  TrainConfig t;
  t.learning_rate = 0;
  t.epochs = 3;
  const auto h = train(m, data, t);
  for (double v : h.validation) EXPECT_NEAR(v, h.initial_validation, 1e-6);
  EXPECT_TRUE(m == before);
}

TEST(ModelTrain, DeterministicHistory) {
  const auto data = copy_task(60, 2);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.epochs = 2;
  t.seed = 17;
  t.clip_gradients = true;
  auto a = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  auto b = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  EXPECT_EQ(train(a, data, t), train(b, data, t));
  EXPECT_TRUE(a == b);
}

TEST(ModelTrain, Errors) {
  auto c = config(1, 1, 16, 32, 2);
  c.context_window = 10;
  auto m = init_model(c, 24, 24, 5);
  Dataset data = copy_task(10, 2);
  data.push_back({std::vector<int>(10, 5), {5}});
  try {
    train(m, data, TrainConfig{});
    FAIL() << "expected SequenceTooLong";
  } catch (const SequenceTooLong& e) {
    EXPECT_EQ(e.index(), 10u);
  }

  auto big = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  TrainConfig t;
  t.learning_rate = 1e38;
  t.epochs = 3;
  EXPECT_THROW(train(big, copy_task(20, 2), t), NonFiniteLoss);

  t = TrainConfig{};
  t.validation_fraction = 1.0;
  EXPECT_THROW(train(big, copy_task(20, 2), t), ConfigInvalid);
}

TEST(Schedules, Values) {
  TrainConfig t;
  t.learning_rate = 1.0;
  t.epochs = 10;
  t.schedule = Schedule::cosine;
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 0), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 5), 0.55);
  EXPECT_NEAR(scheduled_rate(t, 10), 0.1, 1e-15);
  t.schedule = Schedule::step;
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 2), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 3), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 7), 0.25);
  t.schedule = Schedule::multiplicative;
  EXPECT_DOUBLE_EQ(scheduled_rate(t, 2), 0.95 * 0.95);
}

TEST(GreedyDecode, LengthBounds) {
  const auto m = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto src = random_ids(rng, 8, 24);
    const auto out = greedy_decode(m, src);
    EXPECT_LE(out.tokens.size(), 10u);
    const auto one = greedy_decode(m, src, 1);
    EXPECT_LE(one.tokens.size(), 1u);
    EXPECT_EQ(one.truncated, one.tokens.size() == 1);
    for (int t : out.tokens) {
      EXPECT_NE(t, pad_id);
      EXPECT_NE(t, bos_id);
      EXPECT_NE(t, eos_id);
    }
  }
  EXPECT_THROW(greedy_decode(m, {}), Error);
}

Vocabulary symbols(std::size_t n) {
  std::vector<std::string> t = reserved_tokens();
  for (std::size_t i = 0; i < n; ++i) t.push_back("s" + std::to_string(i));
  return Vocabulary(t);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "modelizer_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.ckpt").string();
  Checkpoint ck{init_model(config(1, 1, 16, 32, 2), 24, 26, 5), symbols(20), symbols(22), 5, {}};
  ck.history = {3.5, {2.0, 1.25}, {2.5, 1.5}};
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back.model == ck.model);
  EXPECT_EQ(back.source, ck.source);
  EXPECT_EQ(back.target, ck.target);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.history, ck.history);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto src = random_ids(rng, 1 + rng.below(8), 24);
    EXPECT_EQ(greedy_decode(ck.model, src).tokens, greedy_decode(back.model, src).tokens);
  }

  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  const auto truncated = (dir / "truncated.ckpt").string();
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(truncated), ChecksumMismatch);
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, 10);
  EXPECT_THROW(load_checkpoint(truncated), ChecksumMismatch);

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  const auto corrupt = (dir / "corrupt.ckpt").string();
  std::ofstream(corrupt, std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(corrupt), ChecksumMismatch);

  auto other = bytes;
  other[8] = 2;
  const auto versioned = (dir / "v2.ckpt").string();
  std::ofstream(versioned, std::ios::binary) << other;
  EXPECT_THROW(load_checkpoint(versioned), VersionMismatch);
  std::filesystem::remove_all(dir);
}

TEST(FineTune, ZeroEpochsIsIdentity) {
  auto m = init_model(config(1, 1, 16, 32, 2), 24, 24, 5);
  const auto before = m;
  TrainConfig t;
  t.epochs = 0;
  const auto h = fine_tune(m, copy_task(10, 4), t);
  EXPECT_TRUE(h.train.empty());
  EXPECT_TRUE(m == before);
}

TEST(FineTune, UnseenTokensBecomeUnknown) {
  const auto vocab = symbols(10);
  const TokenSequence seen{"s1", "s2"}, unseen{"s1", "never-seen", "s3"};
  const auto ids = vocab.encode(unseen);
  EXPECT_EQ(ids, (std::vector<int>{5, unk_id, 7}));
  auto m = init_model(config(1, 1, 16, 32, 2), vocab.size(), vocab.size(), 5);
  TrainConfig t;
  t.epochs = 2;
  t.learning_rate = 1e-3;
  const auto h = fine_tune(m, {{ids, ids}, {vocab.encode(seen), vocab.encode(seen)}}, t);
  ASSERT_EQ(h.train.size(), 2u);
  EXPECT_TRUE(std::isfinite(h.validation.back()));
  EXPECT_THROW(fine_tune(m, {}, t), Error);
}

}  // namespace
}  // namespace modelizer
