#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modelizer {

// Broad classes used by the CLI to pick an exit code.
enum class ErrorClass { usage, data, put };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorClass cls = ErrorClass::data)
      : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

// grammar-core

class UndefinedNonTerminal : public Error {
 public:
  explicit UndefinedNonTerminal(std::string name)
      : Error("undefined non-terminal <" + name + ">"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class ProbabilityOverflow : public Error {
 public:
  ProbabilityOverflow(std::string rule, double sum)
      : Error("explicit probabilities of <" + rule + "> sum to " + std::to_string(sum) + " > 1"),
        rule_(std::move(rule)) {}
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

class DanglingPlaceholder : public Error {
 public:
  explicit DanglingPlaceholder(std::string name)
      : Error("placeholder " + name + " is never used by any alternative"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class GrammarSyntaxError : public Error {
 public:
  GrammarSyntaxError(std::size_t line, const std::string& msg)
      : Error("grammar line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BudgetInfeasible : public Error {
 public:
  BudgetInfeasible(std::size_t lo, std::size_t hi)
      : Error("no derivation with an expansion count in [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]") {}
};

class IncompleteTree : public Error {
 public:
  IncompleteTree() : Error("derivation tree has an unexpanded non-terminal leaf") {}
};

class ParseFailure : public Error {
 public:
  explicit ParseFailure(std::size_t position)
      : Error("parse failed at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// generation-pipeline

class GrammarExhausted : public Error {
 public:
  explicit GrammarExhausted(const std::string& detail) : Error("grammar exhausted: " + detail) {}
};

class RefinerUnknown : public Error {
 public:
  explicit RefinerUnknown(const std::string& name) : Error("unknown refiner '" + name + "'") {}
};

class PutFailure : public Error {
 public:
  PutFailure(int exit_code, std::string stderr_text)
      : Error("program under test exited with code " + std::to_string(exit_code) +
                  (stderr_text.empty() ? std::string() : ": " + stderr_text),
              ErrorClass::put),
        exit_code_(exit_code),
        stderr_(std::move(stderr_text)) {}
  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_text() const noexcept { return stderr_; }

 private:
  int exit_code_;
  std::string stderr_;
};

class PutTimeout : public Error {
 public:
  explicit PutTimeout(double seconds)
      : Error("program under test timed out after " + std::to_string(seconds) + "s", ErrorClass::put) {}
};

// tokenization

class TokenizeFailure : public Error {
 public:
  TokenizeFailure(std::size_t position, const std::string& msg)
      : Error("tokenize failed at position " + std::to_string(position) + ": " + msg),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UnboundPlaceholder : public Error {
 public:
  explicit UnboundPlaceholder(std::string token)
      : Error("placeholder " + token + " has no bound content"), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class CorpusTooSmall : public Error {
 public:
  explicit CorpusTooSmall(const std::string& detail) : Error("corpus too small: " + detail) {}
};

// seq2seq-model

class ConfigInvalid : public Error {
 public:
  explicit ConfigInvalid(const std::string& detail) : Error("invalid configuration: " + detail) {}
};

class SequenceTooLong : public Error {
 public:
  SequenceTooLong(std::size_t index, std::size_t length, std::size_t limit)
      : Error("sample " + std::to_string(index) + " has length " + std::to_string(length) +
              " > context window " + std::to_string(limit)),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& detail) : Error("non-finite loss: " + detail) {}
};

class ChecksumMismatch : public Error {
 public:
  explicit ChecksumMismatch(const std::string& detail) : Error("checkpoint checksum mismatch: " + detail) {}
};

class VersionMismatch : public Error {
 public:
  VersionMismatch(unsigned found, unsigned expected)
      : Error("checkpoint format version " + std::to_string(found) + ", expected " +
              std::to_string(expected)) {}
};

// hyperopt

class EmptySpace : public Error {
 public:
  EmptySpace() : Error("search space is empty") {}
};

// metrics

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("empty corpus or mismatched reference/hypothesis counts") {}
};

class TooFewSamples : public Error {
 public:
  explicit TooFewSamples(std::size_t n)
      : Error("standard error needs at least 2 samples, got " + std::to_string(n)) {}
};

class EmptyReference : public Error {
 public:
  EmptyReference() : Error("reference sequence is empty") {}
};

}  // namespace modelizer
