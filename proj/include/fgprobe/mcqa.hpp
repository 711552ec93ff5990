#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/prompt.hpp"

namespace fgprobe {

enum class CarryPosition { kFirst, kRandom };
enum class RunMode { kPredict, kEvaluate };

std::string_view to_string(CarryPosition c);
std::string_view to_string(RunMode m);
CarryPosition parse_carry_position(std::string_view s);
RunMode parse_run_mode(std::string_view s);

/// Seeded partition of 0..N-1 into rounds. Round 0 shows min(m, N) fresh classes; every later
/// round shows the previous winner plus up to m-1 fresh classes. The last round may be short.
struct RoundPlan {
  int n_classes = 0;
  int m = 0;
  std::uint64_t seed = 0;
  CarryPosition carry_position = CarryPosition::kFirst;
  std::vector<std::vector<int>> fresh;  // fresh class ids per round, in presentation order

  int round_count() const { return static_cast<int>(fresh.size()); }
};

/// 1 + ceil((N - m) / (m - 1)) for N > m, else 1.
int expected_round_count(int n_classes, int m);

/// Throws ConfigError when m < 2 or n_classes < 1.
RoundPlan plan_rounds(int n_classes, int m, std::uint64_t seed, CarryPosition carry = CarryPosition::kFirst);

/// Slot (0-based) of the carried option in round `round` holding `n_options` options.
int carry_slot(const RoundPlan& plan, int round, int n_options);

enum class ParseStatus { kStrict, kLenient, kFailed };
std::string_view to_string(ParseStatus s);

struct ParsedChoice {
  int index = 0;  // 1-based; 0 when failed
  ParseStatus status = ParseStatus::kFailed;
};

/// Strict: the whole response, minus surrounding whitespace/punctuation, is an integer.
/// Lenient: the first integer token anywhere in the text. Out-of-range indices fail.
ParsedChoice parse_choice(std::string_view response, int n_options);

std::string render_mcqa_prompt(const std::vector<std::string>& option_texts, const PromptTemplate& tmpl);

// How a round's winner was obtained.
enum class ChoiceSource { kStrict, kReprompt, kLenient, kLogprob, kFallback, kSingleOption };
std::string_view to_string(ChoiceSource s);

struct RoundRecord {
  std::vector<int> options;             // class ids in presented order
  std::vector<std::string> responses;   // raw text of every backend call this round
  int parsed_choice = 0;                // 1-based
  ChoiceSource source = ChoiceSource::kStrict;
  int winner_class_id = -1;
};

struct McqaTrace {
  std::string image_ref;
  std::optional<int> true_class_id;
  int m = 0;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::kPredict;
  int rounds_executed = 0;
  std::vector<RoundRecord> rounds;
  bool early_stopped = false;
  int parse_failures = 0;       // rounds that exhausted the fallback chain
  int nonnumeric_responses = 0; // responses that were not a bare option index
  int final_class_id = -1;
  int queries_used = 0;         // == rounds_executed
  int backend_calls = 0;        // includes re-prompts and logprob fallbacks

  std::optional<bool> correct() const;
};

nlohmann::json to_json(const McqaTrace& t);
McqaTrace trace_from_json(const nlohmann::json& j);

struct McqaOptions {
  int m = 5;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::kPredict;
  CarryPosition carry = CarryPosition::kFirst;
  bool logprob_fallback = true;
  int max_new_tokens = 8;
  std::string reprompt_suffix = "Respond with only the option number.";
};

/// Iterative multiple choice with winner carry-forward. In evaluate mode the run stops as soon
/// as the true class is shown and not picked.
McqaTrace run_iterative(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                        const PromptTemplate& tmpl, const Backend& backend, const McqaOptions& opts);

/// Resolves one round's answer through the fallback chain: strict parse, one re-prompt, lenient
/// extraction, logprob over option indices, then `fallback_index` (1-based).
struct ChoiceOutcome {
  ParsedChoice choice;
  ChoiceSource source = ChoiceSource::kStrict;
  std::vector<std::string> responses;
  int nonnumeric = 0;
  int calls = 0;
};
ChoiceOutcome resolve_choice(const std::string& image, const std::string& prompt, int n_options,
                             int fallback_index, const Backend& backend, const McqaOptions& opts);

}  // namespace fgprobe
