#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/prompt.hpp"

namespace fgprobe {

struct YesNoOptions {
  // Tokenizers split and space-prefix the answer differently; mass is summed over each set.
  std::vector<std::string> yes_tokens{"Yes", "yes", " Yes", " yes"};
  std::vector<std::string> no_tokens{"No", "no", " No", " no"};
  bool normalize = false;  // p_yes / (yes-mass + no-mass)
  int max_new_tokens = 1;
};

struct YesScore {
  int class_id = 0;
  double p_yes = 0.0;
  std::optional<double> p_no;
  bool normalized = false;
};

struct YesNoPrediction {
  int predicted_class_id = -1;
  std::vector<YesScore> scores;
  int queries_used = 0;
};

/// Pure part of scoring. Throws ScoreUndefinedError if neither set appears in `logprobs`.
YesScore score_from_logprobs(int class_id, std::span<const TokenLogprob> logprobs, const YesNoOptions& opts,
                             const std::string& raw_text = {});

YesScore score_class(const ImageCase& image, const ClassEntry& entry, Variant variant,
                     const PromptTemplate& tmpl, const Backend& backend, const YesNoOptions& opts = {});

/// Highest p_yes; ties go to the lowest class_id.
int argmax_lowest_id(std::span<const YesScore> scores);

/// One query per class. Throws BackendError(kCapability) up front if the backend lacks logprobs;
/// any per-class failure is rethrown as ClassScoringError carrying the class id.
YesNoPrediction classify_yesno(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                               const PromptTemplate& tmpl, const Backend& backend, const YesNoOptions& opts = {});

}  // namespace fgprobe
