#include "fgprobe/allatonce.hpp"

#include <algorithm>
#include <random>

#include "fgprobe/errors.hpp"

namespace fgprobe {

int estimate_tokens(std::string_view text) { return static_cast<int>((text.size() + 3) / 4); }

AllAtOncePrediction classify_all_at_once(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                                         const PromptTemplate& tmpl, const Backend& backend,
                                         const AllAtOnceOptions& opts) {
  const int n = benchmark.size();
  if (n < 1) throw ConfigError("benchmark has no classes");

  AllAtOncePrediction pred;
  pred.option_order.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pred.option_order[i] = i;
  if (n == 1) {
    pred.predicted_class_id = 0;
    pred.parse_status = ParseStatus::kStrict;
    return pred;
  }
  if (opts.shuffle_options) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(pred.option_order.begin(), pred.option_order.end(), rng);
  }

  std::vector<std::string> texts;
  texts.reserve(pred.option_order.size());
  for (int id : pred.option_order) texts.push_back(benchmark.at(id).description(variant));
  std::string prompt = render_mcqa_prompt(texts, tmpl);
  pred.prompt_token_estimate = estimate_tokens(prompt);

  Capabilities caps = backend.probe_capabilities();
  if (caps.max_context_tokens && pred.prompt_token_estimate > *caps.max_context_tokens)
    throw ContextBudgetError(pred.prompt_token_estimate, caps.max_context_tokens, "pre-flight estimate");

  BackendResponse resp;
  try {
    resp = backend.complete({image.image_ref, prompt, false, opts.max_new_tokens});
  } catch (const BackendError& e) {
    if (e.code() == BackendErrc::kContextOverflow)
      throw ContextBudgetError(pred.prompt_token_estimate, caps.max_context_tokens, e.what());
    throw;
  }
  pred.queries_used = 1;
  pred.raw_response = resp.text;

  ParsedChoice choice = parse_choice(resp.text, n);
  pred.parse_status = choice.status;
  if (choice.status != ParseStatus::kFailed)
    pred.predicted_class_id = pred.option_order[static_cast<std::size_t>(choice.index - 1)];
  return pred;
}

}  // namespace fgprobe
