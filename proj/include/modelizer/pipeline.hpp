#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "modelizer/checkpoint.hpp"
#include "modelizer/corpus.hpp"
#include "modelizer/dataset.hpp"
#include "modelizer/deployment.hpp"
#include "modelizer/hashing.hpp"
#include "modelizer/hyperopt.hpp"
#include "modelizer/metrics.hpp"
#include "modelizer/report.hpp"
#include "modelizer/trainer.hpp"

namespace modelizer {

// ---------------------------------------------------------------- evaluation

struct DirectionEvaluation {
  metrics::EvaluationReport report;
  std::size_t truncated = 0;
  std::vector<TokenSequence> hypotheses;
};

// Token-level evaluation of a checkpoint on held-out pairs: each source
// sequence is decoded greedily and compared with the target sequence.
inline DirectionEvaluation evaluate_checkpoint(const Checkpoint& ck, const PairCorpus& test, Direction d,
                                               std::optional<std::size_t> max_len = std::nullopt) {
  const auto& src = source_column(test, d);
  const auto& tgt = target_column(test, d);
  DirectionEvaluation e;
  for (const auto& s : src) {
    const auto out = greedy_decode(ck.model, ck.source.encode(s), max_len);
    e.truncated += out.truncated;
    e.hypotheses.push_back(ck.target.decode(out.tokens));
  }
  e.report = metrics::evaluate(tgt, e.hypotheses);
  return e;
}

struct InverseCheck {
  std::size_t total = 0;
  std::size_t reproduced = 0;  // accepted by the PUT with Levenshtein 0
  std::size_t rejected = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(reproduced) / static_cast<double>(total); }
};

// Predicts an input for every recorded output and checks it through the PUT.
inline InverseCheck check_inverse(const DeploymentSession& s, const std::vector<SampleRecord>& test) {
  InverseCheck c;
  for (const auto& r : test) {
    ++c.total;
    const auto p = s.predict(r.output);
    const auto v = s.validate_inverse(r.output, p.text);
    if (v.rejected) {
      ++c.rejected;
    } else if (v.report.levenshtein_mean == 0.0) {
      ++c.reproduced;
    }
  }
  return c;
}

// Trains one direction from scratch; vocabularies come from the pairs.
inline Checkpoint train_checkpoint(const PairCorpus& pc, Direction d, Format input_format, Format output_format,
                                   const ModelConfig& mcfg, const TrainConfig& tcfg, std::ostream* log = nullptr) {
  auto enc = encode_corpus(pc, d);
  auto model = init_model(mcfg, enc.source, enc.target, tcfg.seed);
  const auto h = train(model, enc.data, tcfg, [&](std::size_t epoch, double loss) {
    if (log) *log << "  " << to_string(d) << " epoch " << epoch + 1 << "/" << tcfg.epochs << " validation loss " << loss << "\n";
    return true;
  });
  const Format src = d == Direction::forward ? input_format : output_format;
  const Format tgt = d == Direction::forward ? output_format : input_format;
  return Checkpoint{std::move(model), std::move(enc.source), std::move(enc.target), tcfg.seed, h, src, tgt};
}

// ---------------------------------------------------------------- config

struct PipelineConfig {
  std::string grammar;
  std::string subject = "builtin";
  double put_timeout = 10.0;
  std::string workdir = "modelizer-run";
  std::size_t train_pairs = 2000;
  std::size_t test_pairs = 200;
  Format input_format = Format::markdown;
  Format output_format = Format::html;
  MaskPolicy policy = MaskPolicy::optimizing;
  bool tune = false;
  std::size_t phase1_trials = 25;
  std::size_t phase2_trials = 10;
  GeneratorConfig generation;
  ModelConfig model;
  TrainConfig training;
  SearchOptions search;

  void validate() const {
    if (grammar.empty()) throw ConfigInvalid("pipeline.grammar is required");
    if (!std::filesystem::is_regular_file(grammar)) throw ConfigInvalid("grammar file not found: " + grammar);
    if (subject.empty()) throw ConfigInvalid("pipeline.subject is required");
    if (!(put_timeout > 0)) throw ConfigInvalid("pipeline.put_timeout must be > 0");
    if (train_pairs < 2) throw ConfigInvalid("pipeline.train_pairs must be >= 2");
    if (test_pairs == 0) throw ConfigInvalid("pipeline.test_pairs must be >= 1");
    if (input_format == output_format) throw ConfigInvalid("input and output formats must differ");
    if (tune && (phase1_trials == 0 || phase2_trials == 0)) throw ConfigInvalid("tuning needs at least one trial per phase");
    generation.validate();
    model.validate();
    training.validate();
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(v, &used));
    } else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigInvalid("bad value '" + v + "' for " + key);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigInvalid("bad boolean '" + v + "' for " + key);
}

}  // namespace detail

// Sectioned `key = value` text ([pipeline], [generation], [model], [training],
// [tuning]). Relative paths are resolved against `base_dir`.
inline PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
  std::istringstream in{std::string(text)};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigInvalid(e.what());
  }
  PipelineConfig c;
  auto path = [&](const std::string& v) { return (base_dir / v).lexically_normal().string(); };
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    if (it.parents.size() != 1) throw ConfigInvalid("setting '" + it.fullname() + "' is outside a section");
    const std::string& sec = it.parents[0];
    const std::string& k = it.name;
    const std::string key = sec + "." + k;
    std::string v;
    for (std::size_t i = 0; i < it.inputs.size(); ++i) v += (i ? " " : "") + it.inputs[i];
    auto size = [&] { return detail::parse_number<std::size_t>(key, v); };
    auto real = [&] { return detail::parse_number<double>(key, v); };
    auto flag = [&] { return detail::parse_bool(key, v); };
    try {
      if (sec == "pipeline") {
        if (k == "grammar") c.grammar = path(v);
        else if (k == "subject") c.subject = v;
        else if (k == "put_timeout") c.put_timeout = real();
        else if (k == "workdir") c.workdir = path(v);
        else if (k == "train_pairs") c.train_pairs = size();
        else if (k == "test_pairs") c.test_pairs = size();
        else if (k == "input_format") c.input_format = parse_format(v);
        else if (k == "output_format") c.output_format = parse_format(v);
        else if (k == "policy") c.policy = parse_policy(v);
        else if (k == "tune") c.tune = flag();
        else throw ConfigInvalid("unknown setting " + key);
      } else if (sec == "generation") {
        auto& g = c.generation;
        if (k == "min_expansions") g.min_expansions = size();
        else if (k == "max_expansions") g.max_expansions = size();
        else if (k == "attempts_per_config") g.attempts_per_config = size();
        else if (k == "escalation_step") g.escalation_step = size();
        else if (k == "escalation_ceiling") g.escalation_ceiling = size();
        else if (k == "sliding_window") g.sliding_window = flag();
        else if (k == "workers") g.worker_count = size();
        else if (k == "batch_size") g.batch_size = size();
        else if (k == "seed") g.master_seed = size();
        else if (k == "refiner") g.refiner = v;
        else throw ConfigInvalid("unknown setting " + key);
      } else if (sec == "model") {
        auto& m = c.model;
        if (k == "encoder_layers") m.encoder_layers = size();
        else if (k == "decoder_layers") m.decoder_layers = size();
        else if (k == "embedding_size") m.embedding_size = size();
        else if (k == "feedforward_size") m.feedforward_size = size();
        else if (k == "attention_heads") m.attention_heads = size();
        else if (k == "dropout") m.dropout = real();
        else if (k == "context_window") m.context_window = size();
        else throw ConfigInvalid("unknown setting " + key);
      } else if (sec == "training") {
        auto& t = c.training;
        if (k == "learning_rate") t.learning_rate = real();
        else if (k == "weight_decay") t.weight_decay = real();
        else if (k == "schedule") t.schedule = parse_schedule(v);
        else if (k == "clip_gradients") t.clip_gradients = flag();
        else if (k == "epochs") t.epochs = size();
        else if (k == "batch_size") t.batch_size = size();
        else if (k == "seed") t.seed = size();
        else if (k == "validation_fraction") t.validation_fraction = real();
        else throw ConfigInvalid("unknown setting " + key);
      } else if (sec == "tuning") {
        auto& s = c.search;
        if (k == "phase1_trials") c.phase1_trials = size();
        else if (k == "phase2_trials") c.phase2_trials = size();
        else if (k == "phase1_epochs") s.phase1_epochs = size();
        else if (k == "phase2_epochs") s.phase2_epochs = size();
        else if (k == "phase1_learning_rate") s.phase1_learning_rate = real();
        else if (k == "prune_from_epoch") s.prune_from_epoch = size();
        else if (k == "seed") s.seed = size();
        else throw ConfigInvalid("unknown setting " + key);
      } else {
        throw ConfigInvalid("unknown section [" + sec + "]");
      }
    } catch (const ConfigInvalid&) {
      throw;
    } catch (const Error& e) {
      throw ConfigInvalid(key + ": " + e.what());
    }
  }
  // tuning trains with the model's sequence limits and the run's batch settings
  c.search.context_window = c.model.context_window;
  c.search.dropout = c.model.dropout;
  c.search.batch_size = c.training.batch_size;
  c.search.validation_fraction = c.training.validation_fraction;
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigInvalid("cannot read config " + file);
  std::ostringstream s;
  s << in.rdbuf();
  return parse_pipeline_config(s.str(), std::filesystem::path(file).parent_path());
}

// ---------------------------------------------------------------- run

class StageError : public Error {
 public:
  StageError(std::size_t index, const std::string& stage, const Error& cause)
      : Error("stage " + std::to_string(index) + " (" + stage + "): " + cause.what(), cause.error_class()),
        index_(index),
        stage_(stage) {}
  std::size_t index() const noexcept { return index_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::size_t index_;
  std::string stage_;
};

inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s{"validate", "collect",       "tokenize", "tune",
                                          "train-forward", "train-inverse", "evaluate"};
  return s;
}

struct PipelineReport {
  metrics::EvaluationReport forward;
  metrics::EvaluationReport inverse;
  InverseCheck inverse_check;
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
  std::string workdir;

  std::string artifact(const std::string& name) const { return (std::filesystem::path(workdir) / name).string(); }
};

inline nlohmann::ordered_json pipeline_report_to_json(const PipelineReport& r) {
  return {{"forward", report_to_json(r.forward)},
          {"inverse", report_to_json(r.inverse)},
          {"inverse_validation",
           {{"samples", r.inverse_check.total},
            {"reproduced", r.inverse_check.reproduced},
            {"rejected", r.inverse_check.rejected},
            {"rate", r.inverse_check.rate()}}},
          {"artifacts",
           {{"dataset_train", r.artifact("train.jsonl")},
            {"dataset_test", r.artifact("test.jsonl")},
            {"forward_checkpoint", r.artifact("forward.ckpt")},
            {"inverse_checkpoint", r.artifact("inverse.ckpt")}}}};
}

namespace detail {

inline std::string model_fingerprint(const ModelConfig& m) { return model_config_to_json(m).dump(); }

class StageLedger {
 public:
  explicit StageLedger(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  // A stage is current when its marker holds `fp` and its artifacts exist.
  bool current(const std::string& stage, const std::string& fp, const std::vector<std::string>& artifacts) const {
    std::ifstream in(marker(stage));
    std::string stored;
    if (!in || !std::getline(in, stored) || stored != fp) return false;
    for (const auto& a : artifacts) {
      if (!std::filesystem::exists(dir_.parent_path() / a)) return false;
    }
    return true;
  }

  void complete(const std::string& stage, const std::string& fp) const {
    write_text_file(marker(stage).string(), fp + "\n");
  }

 private:
  std::filesystem::path marker(const std::string& stage) const { return dir_ / (stage + ".done"); }
  std::filesystem::path dir_;
};

}  // namespace detail

// Runs every stage in order. Completed stages whose inputs are unchanged are
// skipped, so an interrupted run resumes at the first incomplete stage.
inline PipelineReport run_pipeline(const PipelineConfig& cfg, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  PipelineReport rep;
  rep.workdir = cfg.workdir;
  const auto& names = pipeline_stages();
  auto stage = [&](std::size_t i, auto&& body) {
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(i, names[i], e);
    } catch (const std::exception& e) {
      throw StageError(i, names[i], Error(e.what()));
    }
  };

  stage(0, [&] { cfg.validate(); });
  fs::create_directories(cfg.workdir);
  const fs::path dir(cfg.workdir);
  const detail::StageLedger ledger(dir / "stages");
  auto file = [&](const std::string& n) { return (dir / n).string(); };

  // each fingerprint chains the previous one, so a changed input invalidates
  // every later stage
  std::string fp = hmac_sha384_hex(read_text_file(cfg.grammar), "fingerprint");
  auto advance = [&](const std::string& what) { fp = hmac_sha384_hex(fp + "\n" + what, "fingerprint"); };
  bool dirty = false;  // an earlier stage produced new artifacts
  auto run = [&](std::size_t i, const std::vector<std::string>& artifacts, auto&& body) {
    stage(i, [&] {
      if (!dirty && ledger.current(names[i], fp, artifacts)) {
        log << "[" << names[i] << "] up to date\n";
        rep.skipped.push_back(names[i]);
        return;
      }
      log << "[" << names[i] << "]\n";
      dirty = true;
      body();
      ledger.complete(names[i], fp);
      rep.ran.push_back(names[i]);
    });
  };

  const auto& g = cfg.generation;
  advance("collect " + cfg.subject + " " + std::to_string(cfg.put_timeout) + " " + std::to_string(cfg.train_pairs) + " " +
          std::to_string(cfg.test_pairs) + " " + std::to_string(g.min_expansions) + " " + std::to_string(g.max_expansions) +
          " " + std::to_string(g.attempts_per_config) + " " + std::to_string(g.escalation_step) + " " +
          std::to_string(g.escalation_ceiling) + " " + std::to_string(g.sliding_window) + " " +
          std::to_string(g.worker_count) + " " + std::to_string(g.batch_size) + " " + std::to_string(g.master_seed) +
          " " + g.refiner + " " + hmac_key_from_env());
  run(1, {"train.jsonl", "test.jsonl"}, [&] {
    const PreparedGrammar grammar(load_grammar(cfg.grammar));
    HashStore store;
    auto res = collect_pairs(grammar, cfg.generation, make_put(cfg.subject, cfg.put_timeout),
                             cfg.train_pairs + cfg.test_pairs, store);
    std::vector<SampleRecord> tr(res.records.begin(), res.records.begin() + static_cast<std::ptrdiff_t>(cfg.train_pairs));
    std::vector<SampleRecord> te(res.records.begin() + static_cast<std::ptrdiff_t>(cfg.train_pairs), res.records.end());
    write_records(file("train.jsonl"), tr);
    write_records(file("test.jsonl"), te);
    store.save(file("hashes.txt"));
    log << "  " << res.summary.records << " pairs, " << res.summary.attempts << " attempts, " << res.summary.escalations
        << " escalations, " << res.summary.put_failures << " PUT failures, " << res.summary.put_timeouts
        << " timeouts\n";
  });

  advance("tokenize " + to_string(cfg.policy) + " " + to_string(cfg.input_format) + " " + to_string(cfg.output_format));
  const std::string in_vocab = to_string(cfg.input_format) + ".vocab";
  const std::string out_vocab = to_string(cfg.output_format) + ".vocab";
  std::optional<PairCorpus> train_corpus;
  auto corpus = [&]() -> const PairCorpus& {
    if (!train_corpus)
      train_corpus = tokenize_pairs(read_records(file("train.jsonl")), cfg.input_format, cfg.output_format, cfg.policy);
    return *train_corpus;
  };
  run(2, {in_vocab, out_vocab}, [&] {
    save_vocabulary(build_vocabulary(corpus().inputs), file(in_vocab));
    save_vocabulary(build_vocabulary(corpus().outputs), file(out_vocab));
    log << "  vocabulary sizes " << to_string(cfg.input_format) << " " << load_vocabulary(file(in_vocab)).size() << ", "
        << to_string(cfg.output_format) << " " << load_vocabulary(file(out_vocab)).size() << "\n";
  });

  ModelConfig mcfg = cfg.model;
  TrainConfig tcfg = cfg.training;
  if (cfg.tune) {
    advance("tune " + std::to_string(cfg.phase1_trials) + " " + std::to_string(cfg.phase2_trials) + " " +
            std::to_string(cfg.search.phase1_epochs) + " " + std::to_string(cfg.search.phase2_epochs) + " " +
            std::to_string(cfg.search.phase1_learning_rate) + " " + std::to_string(cfg.search.prune_from_epoch) + " " +
            std::to_string(cfg.search.seed) + " " + detail::model_fingerprint(cfg.model));
    run(3, {"tune.json"}, [&] {
      const auto enc = encode_corpus(corpus(), Direction::forward);
      const TrainingData td{enc.data, enc.source.size(), enc.target.size()};
      const auto out = two_phase_search(SearchSpace{}, td, cfg.phase1_trials, cfg.phase2_trials, cfg.search);
      write_text_file(file("tune.json"), search_report(out).dump(2) + "\n");
    });
    stage(3, [&] {
      const auto j = nlohmann::json::parse(read_text_file(file("tune.json")));
      mcfg = model_config_from_json(j.at("model"));
      tcfg.learning_rate = j.at("train").at("learning_rate").get<double>();
      tcfg.weight_decay = j.at("train").at("weight_decay").get<double>();
      tcfg.schedule = parse_schedule(j.at("train").at("schedule").get<std::string>());
      log << "  tuned model " << detail::model_fingerprint(mcfg) << ", learning rate " << tcfg.learning_rate << "\n";
    });
  }

  advance("train " + detail::model_fingerprint(mcfg) + " " + train_config_to_json(tcfg).dump());
  run(4, {"forward.ckpt"}, [&] {
    save_checkpoint(train_checkpoint(corpus(), Direction::forward, cfg.input_format, cfg.output_format, mcfg, tcfg, &log),
                    file("forward.ckpt"));
  });
  run(5, {"inverse.ckpt"}, [&] {
    save_checkpoint(train_checkpoint(corpus(), Direction::inverse, cfg.input_format, cfg.output_format, mcfg, tcfg, &log),
                    file("inverse.ckpt"));
  });

  advance("evaluate");
  run(6, {"report.json"}, [&] {
    const auto test = read_records(file("test.jsonl"));
    const auto pc = tokenize_pairs(test, cfg.input_format, cfg.output_format, cfg.policy);
    const auto fwd = load_checkpoint(file("forward.ckpt"));
    rep.forward = evaluate_checkpoint(fwd, pc, Direction::forward).report;
    auto inv = load_checkpoint(file("inverse.ckpt"));
    rep.inverse = evaluate_checkpoint(inv, pc, Direction::inverse).report;
    const DeploymentSession session(std::move(inv), {Direction::inverse, std::nullopt, cfg.policy},
                                    make_put(cfg.subject, cfg.put_timeout));
    rep.inverse_check = check_inverse(session, test);
    write_report(file("forward.report"), rep.forward);
    write_report(file("inverse.report"), rep.inverse);
    write_text_file(file("report.json"), pipeline_report_to_json(rep).dump(2) + "\n");
  });
  if (!rep.skipped.empty() && rep.skipped.back() == "evaluate") {
    const auto j = nlohmann::json::parse(read_text_file(file("report.json")));
    rep.forward = report_from_json(j.at("forward"));
    rep.inverse = report_from_json(j.at("inverse"));
    const auto& iv = j.at("inverse_validation");
    rep.inverse_check = {iv.at("samples").get<std::size_t>(), iv.at("reproduced").get<std::size_t>(),
                         iv.at("rejected").get<std::size_t>()};
  }
  return rep;
}

}  // namespace modelizer
