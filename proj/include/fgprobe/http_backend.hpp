#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "fgprobe/backend.hpp"

namespace fgprobe {

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";  // POSTs go to <base_url>/chat/completions
  std::string model;
  std::string api_key;  // usually from FGPROBE_API_KEY
  double timeout_s = 120.0;
  int max_in_flight = 4;
  int max_retries = 3;  // transport failures only
  double backoff_initial_s = 0.5;
  int top_logprobs = 20;
  std::optional<int> max_context_tokens;
};

/// Chat-completions request body for one query. `image_url` may be empty (text-only probe).
nlohmann::json build_chat_request(const BackendRequest& req, const HttpBackendConfig& cfg,
                                  const std::string& image_url);

/// Throws BackendError(kRefusal) when the body carries no usable answer.
BackendResponse parse_chat_response(const nlohmann::json& body);

/// Data URL for a local image file; http(s) and data: URLs pass through unchanged.
std::string image_data_url(const std::string& image_ref);

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg);
  ~HttpBackend() override;

  BackendResponse complete(const BackendRequest& req) const override;
  Capabilities probe_capabilities() const override;
  std::string name() const override { return "http:" + cfg_.model; }

  const HttpBackendConfig& config() const { return cfg_; }

 private:
  struct Impl;

  nlohmann::json post_with_retries(const nlohmann::json& body) const;

  HttpBackendConfig cfg_;
  std::unique_ptr<Impl> impl_;
  mutable std::mutex probe_mu_;
  mutable std::optional<Capabilities> probed_;
};

}  // namespace fgprobe
