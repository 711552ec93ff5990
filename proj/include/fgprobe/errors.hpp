#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace fgprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (flags, config file, out-of-range parameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

enum class BenchmarkErrc {
  kMissingFile,
  kMalformed,
  kDuplicateClassId,
  kNonContiguousClassId,
  kEmptyDescription,
};

const char* to_string(BenchmarkErrc code);

class BenchmarkError : public Error {
 public:
  BenchmarkError(BenchmarkErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  BenchmarkErrc code() const noexcept { return code_; }

 private:
  BenchmarkErrc code_;
};

enum class BackendErrc {
  kTransport,        // retryable
  kRefusal,          // remote refused or returned nothing usable
  kCapability,       // e.g. logprobs requested but unsupported
  kContextOverflow,  // prompt exceeds the remote context window
  kInvalidRequest,
};

const char* to_string(BackendErrc code);

class BackendError : public Error {
 public:
  BackendError(BackendErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  BackendErrc code() const noexcept { return code_; }
  bool retryable() const noexcept { return code_ == BackendErrc::kTransport; }

 private:
  BackendErrc code_;
};

// No Yes/No variant token in the returned top-logprobs.
class ScoreUndefinedError : public Error {
 public:
  ScoreUndefinedError(const std::string& what, std::string raw_response)
      : Error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

// Wraps the failure of a single class query during Yes/No classification.
class ClassScoringError : public Error {
 public:
  ClassScoringError(int class_id, bool backend_failure, const std::string& what)
      : Error("class " + std::to_string(class_id) + ": " + what),
        class_id_(class_id),
        backend_failure_(backend_failure) {}
  int class_id() const noexcept { return class_id_; }
  bool backend_failure() const noexcept { return backend_failure_; }

 private:
  int class_id_;
  bool backend_failure_;
};

class ContextBudgetError : public Error {
 public:
  ContextBudgetError(int estimated_tokens, std::optional<int> budget, const std::string& detail)
      : Error("prompt of ~" + std::to_string(estimated_tokens) + " tokens exceeds context budget" +
              (budget ? " of " + std::to_string(*budget) : std::string()) +
              (detail.empty() ? std::string() : " (" + detail + ")")),
        estimated_tokens_(estimated_tokens) {}
  int estimated_tokens() const noexcept { return estimated_tokens_; }

 private:
  int estimated_tokens_;
};

enum class CurationErrc {
  kNoImages,
  kEmptyCaption,
  kPersistentLeakage,
  kIncompletePair,
};

const char* to_string(CurationErrc code);

class CurationError : public Error {
 public:
  CurationError(CurationErrc code, std::string class_name, const std::string& what)
      : Error(std::string(to_string(code)) + " [" + class_name + "]: " + what),
        code_(code),
        class_name_(std::move(class_name)) {}
  CurationErrc code() const noexcept { return code_; }
  const std::string& class_name() const noexcept { return class_name_; }

 private:
  CurationErrc code_;
  std::string class_name_;
};

class IncomparableReportsError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgprobe
