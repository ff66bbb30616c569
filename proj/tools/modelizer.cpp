// modelizer command-line entry point.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 failure of the program under
// test. subject-convert exits 1 on input outside the supported subset.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "modelizer/pipeline.hpp"
#include "modelizer/subword.hpp"

using namespace modelizer;
namespace fs = std::filesystem;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_data = 2;
constexpr int exit_put = 3;

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  return read_text_file(path);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

// "10", "10s", "2.5s", "500ms"
double parse_duration(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error("bad duration '" + s + "'", ErrorClass::usage);
  }
  const std::string unit = s.substr(used);
  if (unit.empty() || unit == "s") return v;
  if (unit == "ms") return v / 1000.0;
  if (unit == "m") return v * 60.0;
  throw Error("bad duration '" + s + "'", ErrorClass::usage);
}

struct GenerationFlags {
  std::string grammar;
  std::size_t count = 100;
  std::size_t min = 10;
  std::size_t max = 20;
  bool sliding = false;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::string refiner;
  std::string out = ".";

  void add(CLI::App* app) {
    app->add_option("--grammar", grammar, "grammar file")->required();
    app->add_option("--count", count, "number of samples")->capture_default_str();
    app->add_option("--min", min, "minimum non-terminal expansions")->capture_default_str();
    app->add_option("--max", max, "maximum non-terminal expansions")->capture_default_str();
    app->add_flag("--sliding", sliding, "advance the expansion bounds during the run");
    app->add_option("--workers", workers, "worker count")->capture_default_str();
    app->add_option("--seed", seed, "master seed")->capture_default_str();
    app->add_option("--refiner", refiner, "semantic refiner (sql-join)");
    app->add_option("--out", out, "output directory")->capture_default_str();
  }

  GeneratorConfig config() const {
    GeneratorConfig c;
    c.min_expansions = min;
    c.max_expansions = max;
    c.sliding_window = sliding;
    c.worker_count = workers;
    c.master_seed = seed;
    c.refiner = refiner;
    return c;
  }
};

struct FormatFlags {
  std::string input_format = "markdown";
  std::string output_format = "html";
  std::string policy = "optimizing";

  void add(CLI::App* app) {
    app->add_option("--input-format", input_format, "format of PUT inputs")->capture_default_str();
    app->add_option("--output-format", output_format, "format of PUT outputs")->capture_default_str();
    app->add_option("--policy", policy, "masking policy: simplified, optimizing, exhaustive")->capture_default_str();
  }
  Format in() const { return parse_format(input_format); }
  Format out() const { return parse_format(output_format); }
  MaskPolicy mask() const { return parse_policy(policy); }
};

struct ModelFlags {
  ModelConfig m;
  void add(CLI::App* app) {
    app->add_option("--encoder-layers", m.encoder_layers)->capture_default_str();
    app->add_option("--decoder-layers", m.decoder_layers)->capture_default_str();
    app->add_option("--embedding", m.embedding_size)->capture_default_str();
    app->add_option("--feedforward", m.feedforward_size)->capture_default_str();
    app->add_option("--heads", m.attention_heads)->capture_default_str();
    app->add_option("--dropout", m.dropout)->capture_default_str();
    app->add_option("--context-window", m.context_window)->capture_default_str();
  }
};

struct TrainFlags {
  TrainConfig t;
  std::string schedule = "cosine";
  void add(CLI::App* app) {
    app->add_option("--lr", t.learning_rate, "learning rate")->capture_default_str();
    app->add_option("--weight-decay", t.weight_decay)->capture_default_str();
    app->add_option("--schedule", schedule, "cosine, step or multiplicative")->capture_default_str();
    app->add_flag("--clip", t.clip_gradients, "clip the gradient norm to 1");
    app->add_option("--epochs", t.epochs)->capture_default_str();
    app->add_option("--batch-size", t.batch_size)->capture_default_str();
    app->add_option("--seed", t.seed)->capture_default_str();
    app->add_option("--validation-fraction", t.validation_fraction)->capture_default_str();
  }
  TrainConfig config() const {
    TrainConfig c = t;
    c.schedule = parse_schedule(schedule);
    return c;
  }
};

std::vector<TokenSequence> read_token_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<TokenSequence> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    TokenSequence seq;
    std::string w;
    while (words >> w) seq.push_back(unescape_token(w));
    out.push_back(std::move(seq));
  }
  return out;
}

// One JSON string per line, tokenized in `f`.
std::vector<TokenSequence> read_text_lines(const std::string& path, Format f, MaskPolicy p) {
  std::istringstream in(read_text_file(path));
  std::vector<TokenSequence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string text;
    try {
      text = nlohmann::json::parse(line).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(path + ": each line must be a JSON string");
    }
    out.push_back(mapped_tokenize(text, f, p).tokens);
  }
  return out;
}

void print_report(const metrics::EvaluationReport& r, const std::string& stem) {
  std::cout << report_to_text(r);
  if (!stem.empty()) write_report(stem, r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modelizer: learn a reversible model of a program's input/output behavior"};
  app.require_subcommand(1);

  // generate
  GenerationFlags gen;
  auto* generate = app.add_subcommand("generate", "synthesize unique inputs from a grammar");
  gen.add(generate);

  // collect
  GenerationFlags col;
  std::string put_spec = "builtin";
  std::string timeout = "10s";
  auto* collect = app.add_subcommand("collect", "synthesize inputs, run the program under test, store pairs");
  col.add(collect);
  collect->add_option("--put", put_spec, "program under test: 'builtin' or a command line")->capture_default_str();
  collect->add_option("--timeout", timeout, "per-run timeout, e.g. 10s")->capture_default_str();

  // tokenize
  std::string tok_dataset, tok_out = ".";
  std::size_t merges = 0;
  FormatFlags tok_fmt;
  auto* tokenize = app.add_subcommand("tokenize", "tokenize a dataset and write vocabularies");
  tokenize->add_option("--dataset", tok_dataset, "dataset file (JSON lines)")->required();
  tokenize->add_option("--out", tok_out, "output directory")->capture_default_str();
  tokenize->add_option("--subword", merges, "also train a byte-level subword table of this size");
  tok_fmt.add(tokenize);

  // tune
  std::string tune_dataset, tune_report = "tune.json", tune_mode = "forward";
  std::size_t phase1_trials = 25, phase2_trials = 10;
  SearchOptions search;
  FormatFlags tune_fmt;
  auto* tune = app.add_subcommand("tune", "two-phase hyperparameter search");
  tune->add_option("--dataset", tune_dataset)->required();
  tune->add_option("--phase1-trials", phase1_trials)->capture_default_str();
  tune->add_option("--phase2-trials", phase2_trials)->capture_default_str();
  tune->add_option("--phase1-epochs", search.phase1_epochs)->capture_default_str();
  tune->add_option("--phase2-epochs", search.phase2_epochs)->capture_default_str();
  tune->add_option("--seed", search.seed)->capture_default_str();
  tune->add_option("--context-window", search.context_window)->capture_default_str();
  tune->add_option("--mode", tune_mode, "forward or inverse")->capture_default_str();
  tune->add_option("--report", tune_report, "JSON report listing every trial")->capture_default_str();
  tune_fmt.add(tune);

  // train
  std::string train_dataset, train_out = "model.ckpt", train_mode = "forward";
  FormatFlags train_fmt;
  ModelFlags train_model;
  TrainFlags train_flags;
  auto* trainc = app.add_subcommand("train", "train a forward or inverse model");
  trainc->add_option("--dataset", train_dataset)->required();
  trainc->add_option("--mode", train_mode, "forward or inverse")->capture_default_str();
  trainc->add_option("--out", train_out, "checkpoint path")->capture_default_str();
  train_fmt.add(trainc);
  train_model.add(trainc);
  train_flags.add(trainc);

  // evaluate
  std::string ref_file, hyp_file, eval_format = "html", eval_stem, eval_ckpt, eval_dataset, eval_mode = "forward";
  bool eval_tokens = false;
  std::optional<std::size_t> eval_max_len;
  auto* evaluate = app.add_subcommand("evaluate", "compute the metric bundle");
  evaluate->add_option("--ref", ref_file, "reference file");
  evaluate->add_option("--hyp", hyp_file, "hypothesis file");
  evaluate->add_flag("--tokens", eval_tokens, "files hold one space-separated token sequence per line");
  evaluate->add_option("--format", eval_format, "format of JSON-string lines when --tokens is absent")
      ->capture_default_str();
  evaluate->add_option("--checkpoint", eval_ckpt, "evaluate a model on --dataset instead");
  evaluate->add_option("--dataset", eval_dataset);
  evaluate->add_option("--mode", eval_mode)->capture_default_str();
  evaluate->add_option("--max-len", eval_max_len);
  evaluate->add_option("--report", eval_stem, "write STEM.txt and STEM.json");

  // predict
  std::string pred_ckpt, pred_mode = "forward", pred_in, pred_out, pred_trace, pred_put, pred_timeout = "10s",
                         pred_policy = "optimizing";
  std::optional<std::size_t> pred_max_len;
  bool pred_validate = false;
  auto* predict = app.add_subcommand("predict", "predict an output (forward) or an input (inverse)");
  predict->add_option("--checkpoint", pred_ckpt)->required();
  predict->add_option("--mode", pred_mode, "forward or inverse")->capture_default_str();
  predict->add_option("--in", pred_in, "input file, - for stdin")->required();
  predict->add_option("--out", pred_out, "output file, default stdout");
  predict->add_option("--max-len", pred_max_len, "maximum output tokens");
  predict->add_option("--trace", pred_trace, "write a phase-labelled trace");
  predict->add_flag("--validate", pred_validate, "check the prediction with the program under test");
  predict->add_option("--put", pred_put, "program under test: 'builtin' or a command line");
  predict->add_option("--timeout", pred_timeout)->capture_default_str();
  predict->add_option("--policy", pred_policy)->capture_default_str();

  // pipeline
  std::string pipe_config;
  auto* pipeline = app.add_subcommand("pipeline", "run every stage from a config file");
  pipeline->add_option("--config", pipe_config)->required();

  // subject-convert
  std::string conv_in, conv_out;
  auto* convert = app.add_subcommand("subject-convert", "the bundled Markdown-subset to HTML converter");
  convert->add_option("--in", conv_in, "input file, default stdin");
  convert->add_option("--out", conv_out, "output file, default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_usage;
  }

  try {
    if (*generate) {
      fs::create_directories(gen.out);
      const PreparedGrammar g(load_grammar(gen.grammar));
      HashStore store((fs::path(gen.out) / "hashes.txt").string());
      Synthesizer synth(g, gen.config(), store, Hasher(), gen.count);
      std::vector<SampleRecord> recs;
      for (auto& s : synth.next(gen.count))
        recs.push_back({std::move(s.text), "", std::move(s.hash), s.min_expansions, s.max_expansions, s.seed});
      write_records((fs::path(gen.out) / "inputs.jsonl").string(), recs);
      store.save();
      std::cerr << recs.size() << " inputs, " << synth.attempts() << " attempts, " << synth.escalations()
                << " escalations\n";
    } else if (*collect) {
      fs::create_directories(col.out);
      const PreparedGrammar g(load_grammar(col.grammar));
      const auto summary = collect_pairs(g, col.config(), make_put(put_spec, parse_duration(timeout)), col.count,
                                         (fs::path(col.out) / "dataset.jsonl").string());
      std::cerr << summary.records << " pairs, " << summary.attempts << " attempts, " << summary.escalations
                << " escalations, " << summary.put_failures << " PUT failures, " << summary.put_timeouts
                << " timeouts\n";
    } else if (*tokenize) {
      fs::create_directories(tok_out);
      const auto recs = read_records(tok_dataset);
      const auto pc = tokenize_pairs(recs, tok_fmt.in(), tok_fmt.out(), tok_fmt.mask());
      save_vocabulary(build_vocabulary(pc.inputs), (fs::path(tok_out) / (tok_fmt.input_format + ".vocab")).string());
      save_vocabulary(build_vocabulary(pc.outputs), (fs::path(tok_out) / (tok_fmt.output_format + ".vocab")).string());
      std::string lines;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        nlohmann::ordered_json j{{"input", pc.inputs[i]}, {"output", pc.outputs[i]}};
        lines += j.dump() + "\n";
      }
      write_text_file((fs::path(tok_out) / "tokens.jsonl").string(), lines);
      if (merges > 0) {
        std::vector<std::string> texts;
        for (const auto& r : recs) {
          texts.push_back(r.input);
          texts.push_back(r.output);
        }
        save_merges(subword_train(texts, merges), (fs::path(tok_out) / "merges.txt").string());
      }
      std::cerr << recs.size() << " pairs tokenized\n";
    } else if (*tune) {
      const auto pc = tokenize_pairs(read_records(tune_dataset), tune_fmt.in(), tune_fmt.out(), tune_fmt.mask());
      const auto enc = encode_corpus(pc, parse_direction(tune_mode));
      const TrainingData td{enc.data, enc.source.size(), enc.target.size()};
      const auto out = two_phase_search(SearchSpace{}, td, phase1_trials, phase2_trials, search);
      write_text_file(tune_report, search_report(out).dump(2) + "\n");
      std::cout << model_config_to_json(out.model()).dump() << "\n" << train_config_to_json(out.train()).dump() << "\n";
    } else if (*trainc) {
      const auto pc = tokenize_pairs(read_records(train_dataset), train_fmt.in(), train_fmt.out(), train_fmt.mask());
      const auto ck = train_checkpoint(pc, parse_direction(train_mode), train_fmt.in(), train_fmt.out(), train_model.m,
                                       train_flags.config(), &std::cerr);
      save_checkpoint(ck, train_out);
    } else if (*evaluate) {
      if (!eval_ckpt.empty()) {
        if (eval_dataset.empty()) throw Error("--checkpoint needs --dataset", ErrorClass::usage);
        const auto ck = load_checkpoint(eval_ckpt);
        const auto d = parse_direction(eval_mode);
        const Format in = d == Direction::forward ? ck.source_format : ck.target_format;
        const Format out = d == Direction::forward ? ck.target_format : ck.source_format;
        const auto pc = tokenize_pairs(read_records(eval_dataset), in, out);
        const auto e = evaluate_checkpoint(ck, pc, d, eval_max_len);
        print_report(e.report, eval_stem);
        std::cout << "truncated=" << e.truncated << "\n";
      } else {
        if (ref_file.empty() || hyp_file.empty()) throw Error("evaluate needs --ref and --hyp", ErrorClass::usage);
        std::vector<TokenSequence> refs, hyps;
        if (eval_tokens) {
          refs = read_token_lines(ref_file);
          hyps = read_token_lines(hyp_file);
        } else {
          const Format f = parse_format(eval_format);
          refs = read_text_lines(ref_file, f, MaskPolicy::optimizing);
          hyps = read_text_lines(hyp_file, f, MaskPolicy::optimizing);
        }
        if (refs.size() != hyps.size())
          throw Error("reference and hypothesis files have different sample counts", ErrorClass::usage);
        print_report(metrics::evaluate(refs, hyps), eval_stem);
      }
    } else if (*predict) {
      const Direction mode = parse_direction(pred_mode);
      std::optional<Put> put;
      if (pred_validate) {
        if (pred_put.empty()) throw Error("--validate needs --put", ErrorClass::usage);
        put = make_put(pred_put, parse_duration(pred_timeout));
      }
      const auto session =
          DeploymentSession::load(pred_ckpt, {mode, pred_max_len, parse_policy(pred_policy)}, std::move(put));
      const std::string text = read_input(pred_in);
      const auto p = session.predict(text);
      write_output(pred_out, p.text);
      if (!pred_trace.empty()) write_text_file(pred_trace, format_trace(p.trace));
      if (p.truncated) std::cerr << "warning: output truncated at the maximum length\n";
      for (const auto& u : p.unbound) std::cerr << "warning: unbound placeholder " << u << "\n";
      if (pred_validate) {
        if (mode == Direction::forward) {
          std::cerr << report_to_text(session.validate_forward(text, p.text));
        } else {
          const auto v = session.validate_inverse(text, p.text);
          if (v.rejected) {
            std::cerr << "rejected: " << v.reason << "\n";
          } else {
            std::cerr << report_to_text(v.report);
          }
        }
      }
    } else if (*pipeline) {
      const auto rep = run_pipeline(load_pipeline_config(pipe_config), std::cerr);
      std::cout << pipeline_report_to_json(rep).dump(2) << "\n";
    } else if (*convert) {
      try {
        write_output(conv_out, builtin_convert(read_input(conv_in)));
      } catch (const ConversionError& e) {
        std::cerr << e.what() << "\n";
        return 1;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.error_class()) {
      case ErrorClass::usage:
        return exit_usage;
      case ErrorClass::put:
        return exit_put;
      case ErrorClass::data:
        return exit_data;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_data;
  }
  return 0;
}
