#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "modelizer/pipeline.hpp"
#include "test_support.hpp"

namespace modelizer {
namespace {

namespace fs = std::filesystem;

std::string small_config(const std::string& workdir) {
  return "[pipeline]\n"
         "grammar = \"" + test_support::source_path("grammars/markdown.bnf") + "\"\n"
         "workdir = \"" + workdir + "\"\n"
         "train_pairs = 60\n"
         "test_pairs = 8\n"
         "\n[generation]\nseed = 4\n"
         "\n[model]\nembedding_size = 16\nfeedforward_size = 32\nattention_heads = 2\ncontext_window = 256\n"
         "\n[training]\nlearning_rate = 1e-3\nepochs = 2\nbatch_size = 16\n";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / name;
  fs::remove_all(p);
  return p;
}

TEST(PipelineConfig, ParsesSections) {
  const auto c = parse_pipeline_config(
      "# demo\n[pipeline]\ngrammar = g.bnf\nsubject = \"python3 conv.py --strict\"\ntune = true\npolicy = exhaustive\n"
      "[generation]\nmin_expansions = 30\nmax_expansions = 40\nsliding_window = true\nworkers = 2\n"
      "[model]\nencoder_layers = 2\ndropout = 0.2\n"
      "[training]\nschedule = step\nlearning_rate = 5e-4\n"
      "[tuning]\nphase1_trials = 8\nphase2_trials = 5\nseed = 9\n",
      "/base");
  EXPECT_EQ(c.grammar, "/base/g.bnf");
  EXPECT_EQ(c.subject, "python3 conv.py --strict");
  EXPECT_TRUE(c.tune);
  EXPECT_EQ(c.policy, MaskPolicy::exhaustive);
  EXPECT_EQ(c.generation.min_expansions, 30u);
  EXPECT_EQ(c.generation.max_expansions, 40u);
  EXPECT_TRUE(c.generation.sliding_window);
  EXPECT_EQ(c.generation.worker_count, 2u);
  EXPECT_EQ(c.model.encoder_layers, 2u);
  EXPECT_DOUBLE_EQ(c.model.dropout, 0.2);
  EXPECT_EQ(c.training.schedule, Schedule::step);
  EXPECT_DOUBLE_EQ(c.training.learning_rate, 5e-4);
  EXPECT_EQ(c.phase1_trials, 8u);
  EXPECT_EQ(c.phase2_trials, 5u);
  EXPECT_EQ(c.search.seed, 9u);
  EXPECT_EQ(c.search.dropout, 0.2);
}

TEST(PipelineConfig, RejectsUnknownAndMalformed) {
  EXPECT_THROW(parse_pipeline_config("[pipeline]\ncolour = red\n"), ConfigInvalid);
  EXPECT_THROW(parse_pipeline_config("[extras]\nx = 1\n"), ConfigInvalid);
  EXPECT_THROW(parse_pipeline_config("[model]\nembedding_size = big\n"), ConfigInvalid);
  EXPECT_THROW(parse_pipeline_config("[model]\nembedding_size = -4\n"), ConfigInvalid);
  EXPECT_THROW(parse_pipeline_config("[training]\nschedule = linear\n"), ConfigInvalid);
  EXPECT_THROW(parse_pipeline_config("[pipeline]\ntune = maybe\n"), ConfigInvalid);
}

TEST(PipelineConfig, BundledDemoConfigIsValid) {
  const auto c = load_pipeline_config(test_support::source_path("configs/demo.conf"));
  EXPECT_NO_THROW(c.validate());
}

TEST(Pipeline, MissingGrammarFailsAtStageZero) {
  const auto dir = scratch("pipe-missing");
  auto c = parse_pipeline_config(small_config(dir.string()));
  c.grammar = (dir / "nope.bnf").string();
  std::ostringstream log;
  try {
    run_pipeline(c, log);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.index(), 0u);
    EXPECT_EQ(e.stage(), "validate");
  }
  EXPECT_FALSE(fs::exists(dir / "train.jsonl"));
}

TEST(Pipeline, RunsResumesAndSkips) {
  const auto dir = scratch("pipe-run");
  const auto c = parse_pipeline_config(small_config(dir.string()));
  std::ostringstream log;
  const auto first = run_pipeline(c, log);
  EXPECT_EQ(first.ran, (std::vector<std::string>{"collect", "tokenize", "train-forward", "train-inverse", "evaluate"}));
  for (const char* f : {"train.jsonl", "test.jsonl", "hashes.txt", "markdown.vocab", "html.vocab", "forward.ckpt",
                        "inverse.ckpt", "forward.report.txt", "forward.report.json", "inverse.report.json", "report.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(read_records((dir / "train.jsonl").string()).size(), 60u);
  EXPECT_EQ(first.forward.sample_count, 8u);
  EXPECT_EQ(first.inverse_check.total, 8u);

  // unchanged config: nothing runs, the stored report is returned
  const auto again = run_pipeline(c, log);
  EXPECT_TRUE(again.ran.empty());
  EXPECT_EQ(report_to_json(again.forward), report_to_json(first.forward));

  // interrupted during training: the dataset is reused
  fs::remove(dir / "inverse.ckpt");
  const auto dataset = read_text_file((dir / "train.jsonl").string());
  const auto resumed = run_pipeline(c, log);
  EXPECT_EQ(resumed.ran, (std::vector<std::string>{"train-inverse", "evaluate"}));
  EXPECT_EQ(read_text_file((dir / "train.jsonl").string()), dataset);

  // a training change re-trains but keeps the data
  auto changed = c;
  changed.training.epochs = 1;
  const auto retrained = run_pipeline(changed, log);
  EXPECT_EQ(retrained.ran, (std::vector<std::string>{"train-forward", "train-inverse", "evaluate"}));
}

TEST(Pipeline, InverseDatasetIsTheSwappedForwardDataset) {
  GeneratorConfig cfg;
  HashStore store;
  const auto recs = collect_pairs(test_support::markdown_grammar(), cfg, builtin_put(), 30, store).records;
  const auto pc = tokenize_pairs(recs, Format::markdown, Format::html);
  const auto fwd = encode_corpus(pc, Direction::forward);
  const auto inv = encode_corpus(pc, Direction::inverse);
  EXPECT_EQ(fwd.source, inv.target);
  EXPECT_EQ(fwd.target, inv.source);
  ASSERT_EQ(fwd.data.size(), inv.data.size());
  for (std::size_t i = 0; i < fwd.data.size(); ++i) {
    EXPECT_EQ(fwd.data[i].src, inv.data[i].tgt);
    EXPECT_EQ(fwd.data[i].tgt, inv.data[i].src);
  }
}

TEST(Report, TextAndJsonForms) {
  metrics::EvaluationReport r;
  r.bleu = 0.75;
  r.nist = 2.5;
  r.wer = 12.5;
  r.wil = 20;
  r.exact_match = 50;
  r.close_match = 25;
  r.levenshtein_mean = 1.5;
  r.sample_count = 4;
  const auto text = report_to_text(r);
  EXPECT_NE(text.find("bleu=0.75\n"), std::string::npos);
  EXPECT_NE(text.find("sample_count=4\n"), std::string::npos);
  EXPECT_NE(text.find("exact_match=50\n"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  EXPECT_EQ(report_to_json(report_from_json(report_to_json(r))), report_to_json(r));
}

}  // namespace
}  // namespace modelizer
