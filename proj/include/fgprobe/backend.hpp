#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fgprobe {

/// One image-plus-text query. Decoding is always greedy.
struct BackendRequest {
  std::string image;  // path, data URL, or opaque id understood by the backend
  std::string prompt;
  bool want_logprobs = false;
  int max_new_tokens = 16;

  void validate() const;  // throws BackendError(kInvalidRequest)
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct BackendResponse {
  std::string text;
  // Top alternatives at the first generated position; present only when requested and supported.
  std::optional<std::vector<TokenLogprob>> first_position_logprobs;
  nlohmann::json raw_metadata;
};

struct Capabilities {
  bool supports_logprobs = false;
  std::optional<int> max_context_tokens;
};

/// Every implementation must be safe to call concurrently from many threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse complete(const BackendRequest& req) const = 0;
  virtual Capabilities probe_capabilities() const = 0;
  virtual std::string name() const = 0;
};

/// Forwards to another backend and counts complete() calls.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(const Backend& inner) : inner_(inner) {}

  BackendResponse complete(const BackendRequest& req) const override;
  Capabilities probe_capabilities() const override { return inner_.probe_capabilities(); }
  std::string name() const override { return inner_.name(); }

  long calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  const Backend& inner_;
  mutable std::atomic<long> calls_{0};
};

}  // namespace fgprobe
