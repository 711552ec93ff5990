#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "fgprobe/backend.hpp"

namespace fgprobe {

struct ScriptedReply {
  std::string text;
  std::optional<std::vector<TokenLogprob>> logprobs;
};

/// Mock backend. Replies come from (in priority order) substring rules on the prompt, a
/// sequence consumed by calls no rule matched, then a default. A responder callable replaces
/// all of that. Rule and default replies are referentially transparent; the sequence is
/// call-order dependent.
class ScriptedBackend : public Backend {
 public:
  using Responder = std::function<ScriptedReply(const BackendRequest&, std::size_t call_index)>;

  struct Rule {
    std::string contains;        // substring of the prompt
    ScriptedReply reply;
    std::string image_contains;  // substring of the image ref; empty matches any
  };

  explicit ScriptedBackend(ScriptedReply fallback);
  ScriptedBackend(std::vector<ScriptedReply> sequence, ScriptedReply fallback);
  ScriptedBackend(Responder responder, bool supports_logprobs);
  ScriptedBackend(ScriptedBackend&& other) noexcept;

  /// {"supports_logprobs": bool?,
  ///  "rules": [{"contains": s, "image": s?, "text": s, "logprobs": [[tok, lp]...]}],
  ///  "sequence": [{"text":..}...], "default": {"text":..}}
  static ScriptedBackend from_json(const nlohmann::json& script);

  ScriptedBackend& add_rule(std::string contains, ScriptedReply reply, std::string image_contains = {});
  ScriptedBackend& set_supports_logprobs(bool on);

  BackendResponse complete(const BackendRequest& req) const override;
  Capabilities probe_capabilities() const override;
  std::string name() const override { return "scripted"; }

  std::size_t calls() const;
  std::vector<BackendRequest> history() const;

 private:
  ScriptedReply pick(const BackendRequest& req, std::size_t index) const;

  std::vector<Rule> rules_;
  std::vector<ScriptedReply> sequence_;
  ScriptedReply fallback_;
  Responder responder_;
  bool supports_logprobs_ = false;

  mutable std::mutex mu_;
  mutable std::vector<BackendRequest> history_;
  mutable std::size_t sequence_cursor_ = 0;
};

}  // namespace fgprobe
