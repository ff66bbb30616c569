#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "modelizer/errors.hpp"

// Sequence similarity metrics over token sequences. Every function is generic
// over the token type; the project uses std::vector<std::string>.
//
// Corpus BLEU and NIST follow the NLTK definitions (per-sentence n-gram
// denominators floored at 1 for BLEU, log2 information weights from reference
// n-gram counts for NIST).

namespace modelizer::metrics {

template <class Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct AlignmentCounts {
  std::size_t hits = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

// Minimal-cost alignment of `hyp` against `ref`; the traceback runs from the
// end and prefers match, then substitution, deletion, insertion.
template <class Seq>
AlignmentCounts align(const Seq& ref, const Seq& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  AlignmentCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && here == at(i - 1, j - 1)) {
      ++c.hits;
      --i;
      --j;
    } else if (i > 0 && j > 0 && here == at(i - 1, j - 1) + 1) {
      ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && here == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

template <class Seq>
double wer(const Seq& ref, const Seq& hyp) {
  if (ref.empty()) throw EmptyReference();
  return 100.0 * static_cast<double>(levenshtein(ref, hyp)) / static_cast<double>(ref.size());
}

namespace detail {

inline double wil_from(std::size_t hits, std::size_t n_ref, std::size_t n_hyp) {
  if (n_ref == 0) throw EmptyReference();
  if (n_hyp == 0) return 100.0;
  const double h = static_cast<double>(hits);
  return 100.0 * (1.0 - (h / static_cast<double>(n_ref)) * (h / static_cast<double>(n_hyp)));
}

template <class Seq>
using Ngram = std::span<const typename Seq::value_type>;

struct NgramLess {
  template <class T>
  bool operator()(std::span<const T> a, std::span<const T> b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

template <class Seq>
using NgramCounts = std::map<Ngram<Seq>, std::size_t, NgramLess>;

template <class Seq>
NgramCounts<Seq> count_ngrams(const Seq& s, std::size_t n) {
  NgramCounts<Seq> out;
  if (s.size() < n) return out;
  const auto* data = s.data();
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Ngram<Seq>(data + i, n)];
  return out;
}

template <class Seq>
std::size_t clipped_matches(const NgramCounts<Seq>& hyp, const NgramCounts<Seq>& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    if (auto it = ref.find(g); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

inline double brevity_penalty(std::size_t ref_len, std::size_t hyp_len) {
  if (hyp_len > ref_len) return 1.0;
  if (hyp_len == 0) return 0.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace detail

template <class Seq>
double wil(const Seq& ref, const Seq& hyp) {
  if (ref.empty()) throw EmptyReference();
  return detail::wil_from(align(ref, hyp).hits, ref.size(), hyp.size());
}

inline constexpr std::size_t bleu_max_order = 4;

template <class Seq>
double corpus_bleu(const std::vector<Seq>& refs, const std::vector<Seq>& hyps) {
  if (refs.empty() || refs.size() != hyps.size()) throw EmptyCorpus();
  std::size_t num[bleu_max_order] = {};
  std::size_t den[bleu_max_order] = {};
  std::size_t ref_len = 0, hyp_len = 0;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    ref_len += refs[s].size();
    hyp_len += hyps[s].size();
    for (std::size_t n = 1; n <= bleu_max_order; ++n) {
      const auto h = detail::count_ngrams(hyps[s], n);
      const auto r = detail::count_ngrams(refs[s], n);
      num[n - 1] += detail::clipped_matches<Seq>(h, r);
      den[n - 1] += std::max<std::size_t>(1, hyps[s].size() >= n ? hyps[s].size() - n + 1 : 0);
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < bleu_max_order; ++n) {
    if (num[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(num[n]) / static_cast<double>(den[n]));
  }
  return detail::brevity_penalty(ref_len, hyp_len) * std::exp(log_sum / bleu_max_order);
}

inline constexpr double sentence_bleu_epsilon = 1e-9;

// Sentence BLEU with zero n-gram match counts replaced by epsilon.
template <class Seq>
double sentence_bleu(const Seq& ref, const Seq& hyp, double epsilon = sentence_bleu_epsilon) {
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= bleu_max_order; ++n) {
    const auto h = detail::count_ngrams(hyp, n);
    const auto r = detail::count_ngrams(ref, n);
    const double m = static_cast<double>(detail::clipped_matches<Seq>(h, r));
    const double d = static_cast<double>(std::max<std::size_t>(1, hyp.size() >= n ? hyp.size() - n + 1 : 0));
    log_sum += std::log((m > 0 ? m : epsilon) / d);
  }
  return detail::brevity_penalty(ref.size(), hyp.size()) * std::exp(log_sum / bleu_max_order);
}

// Population standard deviation over sqrt(n).
inline double standard_error(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw TooFewSamples(n);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  return std::sqrt(var) / std::sqrt(static_cast<double>(n));
}

template <class Seq>
double bleu_std_error(const std::vector<Seq>& refs, const std::vector<Seq>& hyps) {
  if (refs.size() != hyps.size()) throw EmptyCorpus();
  std::vector<double> per_sample;
  per_sample.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) per_sample.push_back(sentence_bleu(refs[i], hyps[i]));
  return standard_error(per_sample);
}

inline constexpr std::size_t nist_max_order = 5;

inline double nist_length_penalty(std::size_t ref_len, std::size_t hyp_len) {
  const double ratio = static_cast<double>(hyp_len) / static_cast<double>(ref_len);
  if (ratio > 0.0 && ratio < 1.0) {
    const double beta = std::log(0.5) / (std::log(1.5) * std::log(1.5));
    return std::exp(beta * std::log(ratio) * std::log(ratio));
  }
  return std::max(std::min(ratio, 1.0), 0.0);
}

template <class Seq>
double nist_score(const std::vector<Seq>& refs, const std::vector<Seq>& hyps) {
  if (refs.empty() || refs.size() != hyps.size()) throw EmptyCorpus();
  using Counts = detail::NgramCounts<Seq>;
  Counts freq;
  std::size_t ref_words = 0;
  std::size_t hyp_words = 0;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    for (std::size_t n = 1; n <= nist_max_order; ++n) {
      for (const auto& [g, c] : detail::count_ngrams(refs[s], n)) freq[g] += c;
    }
    ref_words += refs[s].size();
    hyp_words += hyps[s].size();
  }
  if (ref_words == 0) throw EmptyCorpus();

  auto info = [&](const detail::Ngram<Seq>& g) {
    const auto prefix = g.first(g.size() - 1);
    double numerator = static_cast<double>(ref_words);
    if (!prefix.empty()) {
      if (auto it = freq.find(prefix); it != freq.end()) numerator = static_cast<double>(it->second);
    }
    return std::log2(numerator / static_cast<double>(freq.at(g)));
  };

  double precision_sum = 0.0;
  for (std::size_t n = 1; n <= nist_max_order; ++n) {
    double numerator = 0.0;
    std::size_t denominator = 0;
    for (std::size_t s = 0; s < refs.size(); ++s) {
      const auto h = detail::count_ngrams(hyps[s], n);
      const auto r = detail::count_ngrams(refs[s], n);
      for (const auto& [g, c] : h) {
        denominator += c;
        if (auto it = r.find(g); it != r.end()) numerator += info(g) * static_cast<double>(std::min(c, it->second));
      }
    }
    if (denominator > 0) precision_sum += numerator / static_cast<double>(denominator);
  }
  return precision_sum * nist_length_penalty(ref_words, hyp_words);
}

struct MatchRates {
  double exact = 0.0;  // percent of samples at distance 0
  double close = 0.0;  // percent of samples at distance exactly 1
};

template <class Seq>
MatchRates match_rates(const std::vector<Seq>& refs, const std::vector<Seq>& hyps) {
  if (refs.empty() || refs.size() != hyps.size()) throw EmptyCorpus();
  std::size_t exact = 0, close = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto d = levenshtein(refs[i], hyps[i]);
    if (d == 0) ++exact;
    if (d == 1) ++close;
  }
  const double n = static_cast<double>(refs.size());
  return {100.0 * static_cast<double>(exact) / n, 100.0 * static_cast<double>(close) / n};
}

struct EvaluationReport {
  double bleu = 0.0;
  double bleu_std_error = 0.0;  // 0 for single-sample corpora
  double nist = 0.0;
  double wer = 0.0;  // percent, corpus-level
  double wil = 0.0;  // percent, corpus-level
  double exact_match = 0.0;
  double close_match = 0.0;
  double levenshtein_mean = 0.0;
  std::size_t sample_count = 0;
};

// Full metric bundle. WER and WIL are pooled over the corpus: total edits over
// total reference tokens, and hits against total reference/hypothesis tokens.
template <class Seq>
EvaluationReport evaluate(const std::vector<Seq>& refs, const std::vector<Seq>& hyps) {
  if (refs.empty() || refs.size() != hyps.size()) throw EmptyCorpus();
  EvaluationReport r;
  r.sample_count = refs.size();
  r.bleu = corpus_bleu(refs, hyps);
  r.bleu_std_error = refs.size() >= 2 ? bleu_std_error(refs, hyps) : 0.0;
  r.nist = nist_score(refs, hyps);
  std::size_t edits = 0, hits = 0, n_ref = 0, n_hyp = 0, lev_sum = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto c = align(refs[i], hyps[i]);
    edits += c.errors();
    hits += c.hits;
    n_ref += refs[i].size();
    n_hyp += hyps[i].size();
    lev_sum += c.errors();
  }
  if (n_ref == 0) throw EmptyReference();
  r.wer = 100.0 * static_cast<double>(edits) / static_cast<double>(n_ref);
  r.wil = detail::wil_from(hits, n_ref, n_hyp);
  const auto m = match_rates(refs, hyps);
  r.exact_match = m.exact;
  r.close_match = m.close;
  r.levenshtein_mean = static_cast<double>(lev_sum) / static_cast<double>(refs.size());
  return r;
}

}  // namespace modelizer::metrics
