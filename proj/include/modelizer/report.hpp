#pragma once

#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>

#include "modelizer/errors.hpp"
#include "modelizer/metrics.hpp"

namespace modelizer {

inline nlohmann::ordered_json report_to_json(const metrics::EvaluationReport& r) {
  return {{"bleu", r.bleu},
          {"bleu_std_error", r.bleu_std_error},
          {"nist", r.nist},
          {"wer", r.wer},
          {"wil", r.wil},
          {"exact_match", r.exact_match},
          {"close_match", r.close_match},
          {"levenshtein_mean", r.levenshtein_mean},
          {"sample_count", r.sample_count}};
}

inline metrics::EvaluationReport report_from_json(const nlohmann::json& j) {
  metrics::EvaluationReport r;
  r.bleu = j.at("bleu").get<double>();
  r.bleu_std_error = j.at("bleu_std_error").get<double>();
  r.nist = j.at("nist").get<double>();
  r.wer = j.at("wer").get<double>();
  r.wil = j.at("wil").get<double>();
  r.exact_match = j.at("exact_match").get<double>();
  r.close_match = j.at("close_match").get<double>();
  r.levenshtein_mean = j.at("levenshtein_mean").get<double>();
  r.sample_count = j.at("sample_count").get<std::size_t>();
  return r;
}

// One `key=value` line per field, in the JSON field order.
inline std::string report_to_text(const metrics::EvaluationReport& r) {
  std::ostringstream out;
  out << std::setprecision(10);
  const auto j = report_to_json(r);
  for (const auto& [k, v] : j.items()) {
    if (v.is_number_unsigned()) {
      out << k << '=' << v.get<std::size_t>() << '\n';
    } else {
      out << k << '=' << v.get<double>() << '\n';
    }
  }
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Writes PATH.txt and PATH.json.
inline void write_report(const std::string& stem, const metrics::EvaluationReport& r) {
  write_text_file(stem + ".txt", report_to_text(r));
  write_text_file(stem + ".json", report_to_json(r).dump(2) + "\n");
}

}  // namespace modelizer
