#include "fgprobe/scripted_backend.hpp"

#include "fgprobe/errors.hpp"

namespace fgprobe {

using nlohmann::json;

namespace {

bool has_logprobs(const ScriptedReply& r) { return r.logprobs.has_value(); }

ScriptedReply reply_from_json(const json& j) {
  ScriptedReply r;
  if (j.is_string()) {
    r.text = j.get<std::string>();
    return r;
  }
  r.text = j.value("text", std::string());
  if (auto lp = j.find("logprobs"); lp != j.end()) {
    std::vector<TokenLogprob> entries;
    for (const auto& e : *lp) entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
    r.logprobs = std::move(entries);
  }
  return r;
}

}  // namespace

ScriptedBackend::ScriptedBackend(ScriptedReply fallback)
    : fallback_(std::move(fallback)), supports_logprobs_(has_logprobs(fallback_)) {}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedReply> sequence, ScriptedReply fallback)
    : sequence_(std::move(sequence)), fallback_(std::move(fallback)) {
  supports_logprobs_ = has_logprobs(fallback_);
  for (const auto& r : sequence_) supports_logprobs_ = supports_logprobs_ || has_logprobs(r);
}

ScriptedBackend::ScriptedBackend(Responder responder, bool supports_logprobs)
    : responder_(std::move(responder)), supports_logprobs_(supports_logprobs) {}

ScriptedBackend::ScriptedBackend(ScriptedBackend&& other) noexcept
    : rules_(std::move(other.rules_)),
      sequence_(std::move(other.sequence_)),
      fallback_(std::move(other.fallback_)),
      responder_(std::move(other.responder_)),
      supports_logprobs_(other.supports_logprobs_),
      history_(std::move(other.history_)),
      sequence_cursor_(other.sequence_cursor_) {}

ScriptedBackend ScriptedBackend::from_json(const json& script) {
  try {
    std::vector<ScriptedReply> sequence;
    if (auto s = script.find("sequence"); s != script.end())
      for (const auto& r : *s) sequence.push_back(reply_from_json(r));
    ScriptedReply fallback;
    if (auto d = script.find("default"); d != script.end()) fallback = reply_from_json(*d);
    ScriptedBackend backend(std::move(sequence), std::move(fallback));
    if (auto rules = script.find("rules"); rules != script.end())
      for (const auto& r : *rules) backend.add_rule(r.value("contains", std::string()), reply_from_json(r),
                         r.value("image", std::string()));
    if (auto s = script.find("supports_logprobs"); s != script.end()) backend.supports_logprobs_ = s->get<bool>();
    return backend;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed backend script: ") + e.what());
  }
}

ScriptedBackend& ScriptedBackend::add_rule(std::string contains, ScriptedReply reply, std::string image_contains) {
  supports_logprobs_ = supports_logprobs_ || has_logprobs(reply);
  rules_.push_back({std::move(contains), std::move(reply), std::move(image_contains)});
  return *this;
}

ScriptedBackend& ScriptedBackend::set_supports_logprobs(bool on) {
  supports_logprobs_ = on;
  return *this;
}

ScriptedReply ScriptedBackend::pick(const BackendRequest& req, std::size_t index) const {
  if (responder_) return responder_(req, index);
  for (const auto& rule : rules_)
    if (req.prompt.find(rule.contains) != std::string::npos &&
        req.image.find(rule.image_contains) != std::string::npos)
      return rule.reply;
  std::lock_guard lock(mu_);
  if (sequence_cursor_ < sequence_.size()) return sequence_[sequence_cursor_++];
  return fallback_;
}

BackendResponse ScriptedBackend::complete(const BackendRequest& req) const {
  req.validate();
  if (req.want_logprobs && !supports_logprobs_)
    throw BackendError(BackendErrc::kCapability, "scripted backend has no logprob script");
  std::size_t index;
  {
    std::lock_guard lock(mu_);
    index = history_.size();
    history_.push_back(req);
  }
  ScriptedReply reply = pick(req, index);
  BackendResponse resp;
  resp.text = std::move(reply.text);
  if (req.want_logprobs) resp.first_position_logprobs = std::move(reply.logprobs);
  resp.raw_metadata = {{"backend", "scripted"}, {"call_index", index}};
  return resp;
}

Capabilities ScriptedBackend::probe_capabilities() const { return {supports_logprobs_, std::nullopt}; }

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

std::vector<BackendRequest> ScriptedBackend::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

}  // namespace fgprobe
