#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "modelizer/checkpoint.hpp"
#include "modelizer/dataset.hpp"
#include "modelizer/errors.hpp"
#include "modelizer/metrics.hpp"
#include "modelizer/tokenizer.hpp"
#include "modelizer/trainer.hpp"
#include "modelizer/vocabulary.hpp"

namespace modelizer {

namespace detail {

inline bool is_format_marker(const std::string& t, Format f) {
  if (f == Format::html) return t.size() >= 3 && t.front() == '<' && t.back() == '>' && t != "<PAD>" && t != "<BOS>" &&
                                t != "<EOS>" && t != "<UNK>";
  static const std::set<std::string> md{"*", "**", "_", "`", "[", "](", ")", "#", "##", "###", "####", "#####", "######"};
  return md.count(t) != 0;
}

inline std::size_t marker_count(const Vocabulary& v, Format f) {
  return static_cast<std::size_t>(std::count_if(v.tokens().begin(), v.tokens().end(),
                                                [&](const std::string& t) { return is_format_marker(t, f); }));
}

}  // namespace detail

// A vocabulary belongs to a format when it holds that format's structural
// markers and more of them than of the other format's.
inline bool vocabulary_matches(const Vocabulary& v, Format f) {
  const Format other = f == Format::html ? Format::markdown : Format::html;
  const auto mine = detail::marker_count(v, f);
  return mine > 0 && mine > detail::marker_count(v, other);
}

struct SessionOptions {
  Direction mode = Direction::forward;
  std::optional<std::size_t> max_len;
  MaskPolicy policy = MaskPolicy::optimizing;
};

struct PredictionTrace {
  TokenSequence input_tokens;
  PlaceholderMap input_map;
  std::vector<int> source_ids;
  std::vector<int> predicted_ids;
  TokenSequence predicted_tokens;
  std::string output;
};

struct Prediction {
  std::string text;
  PredictionTrace trace;
  bool truncated = false;
  std::vector<std::string> unbound;  // placeholders emitted but absent from the input map
};

// Phase-labelled text rendering of a trace.
inline std::string format_trace(const PredictionTrace& t) {
  std::ostringstream out;
  auto tokens = [&](const TokenSequence& s) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << escape_token(s[i]);
    out << '\n';
  };
  auto ids = [&](const std::vector<int>& s) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  };
  out << "[phase 1: input tokenization]\n";
  tokens(t.input_tokens);
  for (const auto& [k, v] : t.input_map.entries()) out << k << " = " << escape_token(v) << '\n';
  for (const auto& [k, v] : t.input_map.occurrences()) out << k << " = " << escape_token(v) << '\n';
  out << "[phase 2: prediction]\n";
  ids(t.source_ids);
  ids(t.predicted_ids);
  tokens(t.predicted_tokens);
  out << "[phase 3: reconstruction]\n" << t.output;
  if (t.output.empty() || t.output.back() != '\n') out << '\n';
  return out.str();
}

// Result of checking a predicted input against the PUT. A rejected input made
// the PUT fail; `report` is meaningful only when not rejected.
struct InverseVerdict {
  bool rejected = false;
  std::string reason;
  metrics::EvaluationReport report;
};

class DeploymentSession {
 public:
  DeploymentSession(Checkpoint ck, SessionOptions opt, std::optional<Put> put = std::nullopt)
      : ck_(std::move(ck)), opt_(opt), put_(std::move(put)) {
    if (!vocabulary_matches(ck_.source, ck_.source_format))
      throw Error("source vocabulary does not look like " + to_string(ck_.source_format));
    if (!vocabulary_matches(ck_.target, ck_.target_format))
      throw Error("target vocabulary does not look like " + to_string(ck_.target_format));
  }

  static DeploymentSession load(const std::string& path, SessionOptions opt, std::optional<Put> put = std::nullopt) {
    return DeploymentSession(load_checkpoint(path), opt, std::move(put));
  }

  const Checkpoint& checkpoint() const { return ck_; }
  Direction mode() const { return opt_.mode; }
  Format source_format() const { return ck_.source_format; }
  Format target_format() const { return ck_.target_format; }
  bool has_put() const { return put_.has_value(); }

  Prediction predict(const std::string& text) const {
    if (text.empty()) throw Error("empty input", ErrorClass::usage);
    Prediction p;
    auto tk = mapped_tokenize(text, ck_.source_format, opt_.policy);
    p.trace.input_tokens = tk.tokens;
    p.trace.input_map = tk.map;
    p.trace.source_ids = ck_.source.encode(tk.tokens);
    const Decoded d = greedy_decode(ck_.model, p.trace.source_ids, opt_.max_len);
    p.truncated = d.truncated;
    p.trace.predicted_ids = d.tokens;
    TokenSequence out = ck_.target.decode(d.tokens);
    for (auto& t : out) {
      if (t == reserved_tokens()[unk_id]) t = std::string(unk_sentinel);
    }
    p.trace.predicted_tokens = out;

    PlaceholderMap map = tk.map.content_only();
    p.unbound = unbound_placeholders(out, map);
    for (const auto& u : p.unbound) {
      if (map.policy() == MaskPolicy::simplified) {
        map.push_occurrence(u, u);
      } else {
        map.bind(u, u);
      }
    }
    p.text = reconstruct(out, map, ck_.target_format);
    p.trace.output = p.text;
    return p;
  }

  // Forward mode: the PUT's own output for `input_text` is the reference.
  metrics::EvaluationReport validate_forward(const std::string& input_text, const std::string& predicted_text) const {
    const std::string actual = require_put()(input_text);
    return compare(actual, predicted_text, ck_.target_format);
  }

  // Inverse mode: the predicted input is run through the PUT and the result is
  // compared with the output we started from.
  InverseVerdict validate_inverse(const std::string& original_output, const std::string& predicted_input) const {
    const Put& put = require_put();
    InverseVerdict v;
    std::string fresh;
    try {
      fresh = put(predicted_input);
    } catch (const PutFailure& e) {
      v.rejected = true;
      v.reason = e.what();
      return v;
    } catch (const PutTimeout& e) {
      v.rejected = true;
      v.reason = e.what();
      return v;
    }
    v.report = compare(original_output, fresh, ck_.source_format);
    return v;
  }

 private:
  const Put& require_put() const {
    if (!put_) throw Error("validation needs a program under test", ErrorClass::usage);
    return *put_;
  }

  // Output texts are tokenized with the same policy; a hypothesis that does
  // not tokenize counts as one opaque token.
  metrics::EvaluationReport compare(const std::string& reference, const std::string& hypothesis, Format f) const {
    const auto ref = mapped_tokenize(reference, f, opt_.policy).tokens;
    TokenSequence hyp;
    try {
      hyp = mapped_tokenize(hypothesis, f, opt_.policy).tokens;
    } catch (const TokenizeFailure&) {
      hyp = {hypothesis};
    }
    return metrics::evaluate(std::vector<TokenSequence>{ref}, std::vector<TokenSequence>{hyp});
  }

  static std::vector<std::string> unbound_placeholders(const TokenSequence& tokens, const PlaceholderMap& map) {
    const PlaceholderNames names;
    std::vector<std::string> out;
    auto check = [&](const std::string& key) {
      if (map.policy() == MaskPolicy::simplified) return;
      if (!detail::numbered_placeholder(key, names.all())) return;
      if (!map.lookup(key) && std::find(out.begin(), out.end(), key) == out.end()) out.push_back(key);
    };
    std::map<std::string, std::size_t> uses;
    for (const auto& t : tokens) {
      if (detail::is_href_token(t)) {
        check(std::string(detail::href_key(t)));
      } else {
        check(t);
      }
      if (map.policy() == MaskPolicy::simplified) {
        for (const auto& n : names.all()) {
          if (t == n || (detail::is_href_token(t) && detail::href_key(t) == n)) ++uses[n];
        }
      }
    }
    for (const auto& [name, count] : uses) {
      const auto have = static_cast<std::size_t>(std::count_if(map.occurrences().begin(), map.occurrences().end(),
                                                               [&](const auto& o) { return o.first == name; }));
      for (std::size_t i = have; i < count; ++i) out.push_back(name);
    }
    return out;
  }

  Checkpoint ck_;
  SessionOptions opt_;
  std::optional<Put> put_;
};

}  // namespace modelizer
