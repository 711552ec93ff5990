#include "fgprobe/yesno.hpp"

#include <algorithm>
#include <cmath>

#include "fgprobe/errors.hpp"

namespace fgprobe {

YesScore score_from_logprobs(int class_id, std::span<const TokenLogprob> logprobs, const YesNoOptions& opts,
                             const std::string& raw_text) {
  auto in = [](const std::vector<std::string>& set, const std::string& tok) {
    return std::find(set.begin(), set.end(), tok) != set.end();
  };
  double yes = 0.0, no = 0.0;
  bool any_yes = false, any_no = false;
  for (const auto& t : logprobs) {
    if (in(opts.yes_tokens, t.token)) {
      yes += std::exp(t.logprob);
      any_yes = true;
    } else if (in(opts.no_tokens, t.token)) {
      no += std::exp(t.logprob);
      any_no = true;
    }
  }
  if (!any_yes && !any_no)
    throw ScoreUndefinedError("class " + std::to_string(class_id) + ": no Yes/No token among top logprobs",
                              raw_text);

  YesScore s;
  s.class_id = class_id;
  if (opts.normalize) {
    s.p_yes = yes / (yes + no);
    s.p_no = 1.0 - s.p_yes;
    s.normalized = true;
  } else {
    s.p_yes = std::min(yes, 1.0);
    if (any_no) s.p_no = std::min(no, 1.0);
  }
  return s;
}

YesScore score_class(const ImageCase& image, const ClassEntry& entry, Variant variant, const PromptTemplate& tmpl,
                     const Backend& backend, const YesNoOptions& opts) {
  BackendRequest req;
  req.image = image.image_ref;
  req.prompt = tmpl.render({{"description", entry.description(variant)}});
  req.want_logprobs = true;
  req.max_new_tokens = opts.max_new_tokens;
  BackendResponse resp = backend.complete(req);
  if (!resp.first_position_logprobs)
    throw BackendError(BackendErrc::kCapability, "backend '" + backend.name() + "' returned no logprobs");
  return score_from_logprobs(entry.class_id, *resp.first_position_logprobs, opts, resp.text);
}

int argmax_lowest_id(std::span<const YesScore> scores) {
  int best = -1;
  double best_p = 0.0;
  for (const auto& s : scores) {
    if (best < 0 || s.p_yes > best_p || (s.p_yes == best_p && s.class_id < best)) {
      best = s.class_id;
      best_p = s.p_yes;
    }
  }
  return best;
}

YesNoPrediction classify_yesno(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                               const PromptTemplate& tmpl, const Backend& backend, const YesNoOptions& opts) {
  if (benchmark.size() < 2) throw ConfigError("Yes/No classification needs at least 2 classes");
  if (!backend.probe_capabilities().supports_logprobs)
    throw BackendError(BackendErrc::kCapability,
                       "backend '" + backend.name() + "' does not provide token logprobs; Yes/No scoring needs them");

  YesNoPrediction pred;
  pred.scores.reserve(benchmark.classes.size());
  for (const auto& entry : benchmark.classes) {
    try {
      pred.scores.push_back(score_class(image, entry, variant, tmpl, backend, opts));
    } catch (const BackendError& e) {
      throw ClassScoringError(entry.class_id, true, e.what());
    } catch (const ScoreUndefinedError& e) {
      throw ClassScoringError(entry.class_id, false, std::string(e.what()) + "; raw response: " + e.raw_response());
    }
    ++pred.queries_used;
  }
  pred.predicted_class_id = argmax_lowest_id(pred.scores);
  return pred;
}

}  // namespace fgprobe
