#include "fgprobe/http_backend.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

using nlohmann::json;

namespace {

std::string base64(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = to_lower(p.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

bool mentions_context(const std::string& body) {
  std::string lower = to_lower(body);
  return lower.find("context") != std::string::npos || lower.find("too long") != std::string::npos ||
         lower.find("maximum length") != std::string::npos;
}

// Splits "http://host:port/v1" into ("http://host:port", "/v1").
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend base_url needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

// Counting gate for max-in-flight requests.
struct HttpBackend::Impl {
  std::string host;
  std::string path_prefix;
  std::mutex mu;
  std::condition_variable cv;
  int available = 0;

  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return available > 0; });
    --available;
  }
  void release() {
    {
      std::lock_guard lock(mu);
      ++available;
    }
    cv.notify_one();
  }
};

json build_chat_request(const BackendRequest& req, const HttpBackendConfig& cfg, const std::string& image_url) {
  json content = json::array();
  if (!image_url.empty()) content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url}}}});
  content.push_back({{"type", "text"}, {"text", req.prompt}});
  json body = {{"model", cfg.model},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})},
               {"max_tokens", req.max_new_tokens},
               {"temperature", 0}};
  if (req.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = cfg.top_logprobs;
  }
  return body;
}

BackendResponse parse_chat_response(const json& body) {
  auto choices = body.find("choices");
  if (choices == body.end() || !choices->is_array() || choices->empty())
    throw BackendError(BackendErrc::kRefusal, "response has no choices");
  const json& choice = (*choices)[0];
  const json message = choice.value("message", json::object());
  if (auto refusal = message.find("refusal"); refusal != message.end() && refusal->is_string())
    throw BackendError(BackendErrc::kRefusal, "model refused: " + refusal->get<std::string>());
  auto content = message.find("content");
  if (content == message.end() || !content->is_string() || content->get<std::string>().empty())
    throw BackendError(BackendErrc::kRefusal, "empty response");

  BackendResponse resp;
  resp.text = content->get<std::string>();
  resp.raw_metadata = {{"finish_reason", choice.value("finish_reason", json())}};
  if (body.contains("model")) resp.raw_metadata["model"] = body["model"];

  auto lp = choice.find("logprobs");
  if (lp != choice.end() && lp->is_object()) {
    auto positions = lp->find("content");
    if (positions != lp->end() && positions->is_array() && !positions->empty()) {
      const json& first = (*positions)[0];
      std::vector<TokenLogprob> entries;
      if (auto top = first.find("top_logprobs"); top != first.end() && top->is_array()) {
        for (const auto& t : *top) entries.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
      if (entries.empty() && first.contains("token"))
        entries.push_back({first.at("token").get<std::string>(), first.at("logprob").get<double>()});
      if (!entries.empty()) resp.first_position_logprobs = std::move(entries);
    }
  }
  return resp;
}

std::string image_data_url(const std::string& image_ref) {
  if (image_ref.starts_with("data:") || image_ref.starts_with("http://") || image_ref.starts_with("https://"))
    return image_ref;
  std::filesystem::path p(image_ref);
  if (!std::filesystem::is_regular_file(p))
    throw BackendError(BackendErrc::kInvalidRequest, "image not found: " + image_ref);
  return "data:" + mime_for(p) + ";base64," + base64(read_text_file(image_ref));
}

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  if (cfg_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (cfg_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  std::tie(impl_->host, impl_->path_prefix) = split_url(cfg_.base_url);
  impl_->available = cfg_.max_in_flight;
}

HttpBackend::~HttpBackend() = default;

json HttpBackend::post_with_retries(const json& body) const {
  const std::string path = impl_->path_prefix + "/chat/completions";
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::duration<double>(cfg_.backoff_initial_s * static_cast<double>(1 << (attempt - 1)));
      std::this_thread::sleep_for(delay);
    }
    impl_->acquire();
    httplib::Result res = [&] {
      httplib::Client client(impl_->host);
      auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      return client.Post(path, headers, payload, "application/json");
    }();
    impl_->release();

    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      if (mentions_context(res->body))
        throw BackendError(BackendErrc::kContextOverflow, "HTTP " + std::to_string(res->status) + ": " + res->body);
      throw BackendError(BackendErrc::kRefusal, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw BackendError(BackendErrc::kRefusal, std::string("unparseable response body: ") + e.what());
    }
  }
  throw BackendError(BackendErrc::kTransport, "giving up after " + std::to_string(cfg_.max_retries + 1) +
                                                  " attempt(s): " + last_error);
}

BackendResponse HttpBackend::complete(const BackendRequest& req) const {
  req.validate();
  std::string url = req.image.empty() ? std::string() : image_data_url(req.image);
  BackendResponse resp = parse_chat_response(post_with_retries(build_chat_request(req, cfg_, url)));
  if (!req.want_logprobs) resp.first_position_logprobs.reset();
  return resp;
}

Capabilities HttpBackend::probe_capabilities() const {
  std::lock_guard lock(probe_mu_);
  if (probed_) return *probed_;
  Capabilities caps{false, cfg_.max_context_tokens};
  BackendRequest probe{"", "Answer with Yes or No: is the sky blue?", true, 1};
  try {
    BackendResponse r = parse_chat_response(post_with_retries(build_chat_request(probe, cfg_, "")));
    caps.supports_logprobs = r.first_position_logprobs.has_value();
  } catch (const BackendError& e) {
    if (e.retryable()) throw;
  }
  probed_ = caps;
  return caps;
}

}  // namespace fgprobe
