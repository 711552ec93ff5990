#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/prompt.hpp"

namespace fgprobe {

struct AllAtOnceOptions {
  bool shuffle_options = false;  // benchmark order by default
  std::uint64_t seed = 0;
  int max_new_tokens = 8;
};

struct AllAtOncePrediction {
  int predicted_class_id = -1;  // -1 when parsing failed
  std::string raw_response;
  ParseStatus parse_status = ParseStatus::kFailed;
  int prompt_token_estimate = 0;
  int queries_used = 0;
  std::vector<int> option_order;  // class id shown at each 1-based position - 1
};

/// Rough chars/4 heuristic, used only for pre-flight budget checks.
int estimate_tokens(std::string_view text);

/// One query showing every class. Throws ContextBudgetError when the prompt exceeds a known
/// context budget or the backend reports an overflow.
AllAtOncePrediction classify_all_at_once(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                                         const PromptTemplate& tmpl, const Backend& backend,
                                         const AllAtOnceOptions& opts = {});

}  // namespace fgprobe
