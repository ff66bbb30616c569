#pragma once

#include <string>
#include <vector>

#include "modelizer/dataset.hpp"
#include "modelizer/tokenizer.hpp"
#include "modelizer/transformer.hpp"
#include "modelizer/vocabulary.hpp"

namespace modelizer {

enum class Direction { forward, inverse };

inline std::string to_string(Direction d) { return d == Direction::forward ? "forward" : "inverse"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::forward;
  if (s == "inverse") return Direction::inverse;
  throw Error("unknown mode '" + std::string(s) + "' (expected forward or inverse)", ErrorClass::usage);
}

// Token sequences of PUT inputs and outputs, row-aligned with the records.
struct PairCorpus {
  std::vector<TokenSequence> inputs;
  std::vector<TokenSequence> outputs;
};

inline PairCorpus tokenize_pairs(const std::vector<SampleRecord>& records, Format input_format, Format output_format,
                                 MaskPolicy policy = MaskPolicy::optimizing) {
  PairCorpus c;
  for (const auto& r : records) {
    c.inputs.push_back(mapped_tokenize(r.input, input_format, policy).tokens);
    c.outputs.push_back(mapped_tokenize(r.output, output_format, policy).tokens);
  }
  return c;
}

// Source and target columns for a direction: inverse swaps them.
inline const std::vector<TokenSequence>& source_column(const PairCorpus& c, Direction d) {
  return d == Direction::forward ? c.inputs : c.outputs;
}
inline const std::vector<TokenSequence>& target_column(const PairCorpus& c, Direction d) {
  return d == Direction::forward ? c.outputs : c.inputs;
}

inline Dataset encode_pairs(const PairCorpus& c, Direction d, const Vocabulary& src, const Vocabulary& tgt) {
  const auto& s = source_column(c, d);
  const auto& t = target_column(c, d);
  Dataset out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({src.encode(s[i]), tgt.encode(t[i])});
  return out;
}

struct EncodedCorpus {
  Vocabulary source;
  Vocabulary target;
  Dataset data;
};

inline EncodedCorpus encode_corpus(const PairCorpus& c, Direction d) {
  EncodedCorpus e{build_vocabulary(source_column(c, d)), build_vocabulary(target_column(c, d)), {}};
  e.data = encode_pairs(c, d, e.source, e.target);
  return e;
}

}  // namespace modelizer
