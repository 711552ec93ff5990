#include "fgprobe/mcqa.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

using nlohmann::json;

std::string_view to_string(CarryPosition c) { return c == CarryPosition::kFirst ? "first" : "random"; }
std::string_view to_string(RunMode m) { return m == RunMode::kPredict ? "predict" : "evaluate"; }

CarryPosition parse_carry_position(std::string_view s) {
  if (s == "first") return CarryPosition::kFirst;
  if (s == "random") return CarryPosition::kRandom;
  throw ConfigError("unknown carry position '" + std::string(s) + "' (expected first or random)");
}

RunMode parse_run_mode(std::string_view s) {
  if (s == "predict") return RunMode::kPredict;
  if (s == "evaluate") return RunMode::kEvaluate;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected predict or evaluate)");
}

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::kStrict: return "strict";
    case ParseStatus::kLenient: return "lenient";
    case ParseStatus::kFailed: return "failed";
  }
  return "failed";
}

std::string_view to_string(ChoiceSource s) {
  switch (s) {
    case ChoiceSource::kStrict: return "strict";
    case ChoiceSource::kReprompt: return "reprompt";
    case ChoiceSource::kLenient: return "lenient";
    case ChoiceSource::kLogprob: return "logprob";
    case ChoiceSource::kFallback: return "fallback";
    case ChoiceSource::kSingleOption: return "single-option";
  }
  return "fallback";
}

namespace {

ChoiceSource parse_choice_source(std::string_view s) {
  for (auto c : {ChoiceSource::kStrict, ChoiceSource::kReprompt, ChoiceSource::kLenient, ChoiceSource::kLogprob,
                 ChoiceSource::kFallback, ChoiceSource::kSingleOption})
    if (to_string(c) == s) return c;
  throw Error("unknown choice source in trace: " + std::string(s));
}

// Non-negative decimal of at most 9 digits.
std::optional<int> to_index(std::string_view digits) {
  while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
  if (digits.empty() || digits.size() > 9) return std::nullopt;
  int v = 0;
  for (char c : digits) v = v * 10 + (c - '0');
  return v;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

int expected_round_count(int n_classes, int m) {
  if (n_classes <= m) return 1;
  return 1 + (n_classes - m + (m - 2)) / (m - 1);
}

RoundPlan plan_rounds(int n_classes, int m, std::uint64_t seed, CarryPosition carry) {
  if (m < 2) throw ConfigError("m must be at least 2 (got " + std::to_string(m) + ")");
  if (n_classes < 1) throw ConfigError("need at least one class");

  std::vector<int> order(static_cast<std::size_t>(n_classes));
  for (int i = 0; i < n_classes; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  RoundPlan plan{n_classes, m, seed, carry, {}};
  std::size_t pos = 0;
  std::size_t first = std::min<std::size_t>(m, order.size());
  plan.fresh.emplace_back(order.begin(), order.begin() + first);
  pos = first;
  while (pos < order.size()) {
    std::size_t take = std::min<std::size_t>(m - 1, order.size() - pos);
    plan.fresh.emplace_back(order.begin() + pos, order.begin() + pos + take);
    pos += take;
  }
  return plan;
}

int carry_slot(const RoundPlan& plan, int round, int n_options) {
  if (plan.carry_position == CarryPosition::kFirst || n_options <= 1) return 0;
  return static_cast<int>(mix_seed(plan.seed, static_cast<std::uint64_t>(round)) %
                          static_cast<std::uint64_t>(n_options));
}

ParsedChoice parse_choice(std::string_view response, int n_options) {
  auto in_range = [&](int v) { return v >= 1 && v <= n_options; };

  std::string_view s = response;
  auto strip = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || std::ispunct(static_cast<unsigned char>(c));
  };
  while (!s.empty() && strip(s.front())) s.remove_prefix(1);
  while (!s.empty() && strip(s.back())) s.remove_suffix(1);
  if (!s.empty() && std::all_of(s.begin(), s.end(), is_digit)) {
    auto v = to_index(s);
    if (v && in_range(*v)) return {*v, ParseStatus::kStrict};
    return {0, ParseStatus::kFailed};
  }

  auto first = std::find_if(response.begin(), response.end(), is_digit);
  if (first == response.end()) return {0, ParseStatus::kFailed};
  auto last = std::find_if_not(first, response.end(), is_digit);
  auto v = to_index(std::string_view(&*first, static_cast<std::size_t>(last - first)));
  if (v && in_range(*v)) return {*v, ParseStatus::kLenient};
  return {0, ParseStatus::kFailed};
}

std::string render_mcqa_prompt(const std::vector<std::string>& option_texts, const PromptTemplate& tmpl) {
  return tmpl.render({{"options", render_option_list(option_texts)}});
}

std::optional<bool> McqaTrace::correct() const {
  if (!true_class_id) return std::nullopt;
  return !early_stopped && final_class_id == *true_class_id;
}

ChoiceOutcome resolve_choice(const std::string& image, const std::string& prompt, int n_options,
                             int fallback_index, const Backend& backend, const McqaOptions& opts) {
  ChoiceOutcome out;
  auto ask = [&](const std::string& text, bool logprobs, int max_tokens) {
    BackendRequest req{image, text, logprobs, max_tokens};
    BackendResponse resp = backend.complete(req);
    ++out.calls;
    out.responses.push_back(resp.text);
    return resp;
  };

  ParsedChoice first = parse_choice(ask(prompt, false, opts.max_new_tokens).text, n_options);
  if (first.status == ParseStatus::kStrict) {
    out.choice = first;
    out.source = ChoiceSource::kStrict;
    return out;
  }
  ++out.nonnumeric;

  ParsedChoice second =
      parse_choice(ask(prompt + "\n" + opts.reprompt_suffix, false, opts.max_new_tokens).text, n_options);
  if (second.status == ParseStatus::kStrict) {
    out.choice = second;
    out.source = ChoiceSource::kReprompt;
    return out;
  }
  ++out.nonnumeric;

  for (const ParsedChoice& p : {first, second}) {
    if (p.status == ParseStatus::kLenient) {
      out.choice = p;
      out.source = ChoiceSource::kLenient;
      return out;
    }
  }

  if (opts.logprob_fallback && backend.probe_capabilities().supports_logprobs) {
    BackendResponse resp = ask(prompt, true, 1);
    int best = 0;
    double best_lp = 0.0;
    for (const auto& t : resp.first_position_logprobs.value_or(std::vector<TokenLogprob>{})) {
      std::string_view tok = trim(t.token);
      if (tok.empty() || !std::all_of(tok.begin(), tok.end(), is_digit)) continue;
      auto v = to_index(tok);
      if (!v || *v < 1 || *v > n_options) continue;
      if (best == 0 || t.logprob > best_lp || (t.logprob == best_lp && *v < best)) {
        best = *v;
        best_lp = t.logprob;
      }
    }
    if (best > 0) {
      out.choice = {best, ParseStatus::kLenient};
      out.source = ChoiceSource::kLogprob;
      return out;
    }
  }

  out.choice = {fallback_index, ParseStatus::kFailed};
  out.source = ChoiceSource::kFallback;
  return out;
}

McqaTrace run_iterative(const ImageCase& image, const Benchmark& benchmark, Variant variant,
                        const PromptTemplate& tmpl, const Backend& backend, const McqaOptions& opts) {
  const int n = benchmark.size();
  if (n < 1) throw ConfigError("benchmark has no classes");
  if (image.true_class_id && (*image.true_class_id < 0 || *image.true_class_id >= n))
    throw ConfigError("true_class_id " + std::to_string(*image.true_class_id) + " is not a valid class");
  if (opts.mode == RunMode::kEvaluate && !image.true_class_id)
    throw ConfigError("evaluate mode needs a ground-truth class for image '" + image.image_ref + "'");

  RoundPlan plan = plan_rounds(n, opts.m, opts.seed, opts.carry);

  McqaTrace trace;
  trace.image_ref = image.image_ref;
  trace.true_class_id = image.true_class_id;
  trace.m = opts.m;
  trace.seed = opts.seed;
  trace.mode = opts.mode;

  std::optional<int> carried;
  int winner = -1;
  for (int r = 0; r < plan.round_count(); ++r) {
    RoundRecord rec;
    rec.options = plan.fresh[r];
    int slot = -1;
    if (carried) {
      slot = carry_slot(plan, r, static_cast<int>(rec.options.size()) + 1);
      rec.options.insert(rec.options.begin() + slot, *carried);
    }

    if (rec.options.size() == 1) {
      rec.parsed_choice = 1;
      rec.source = ChoiceSource::kSingleOption;
    } else {
      std::vector<std::string> texts;
      texts.reserve(rec.options.size());
      for (int id : rec.options) texts.push_back(benchmark.at(id).description(variant));
      ChoiceOutcome outcome = resolve_choice(image.image_ref, render_mcqa_prompt(texts, tmpl),
                                             static_cast<int>(rec.options.size()), slot >= 0 ? slot + 1 : 1,
                                             backend, opts);
      rec.parsed_choice = outcome.choice.index;
      rec.source = outcome.source;
      rec.responses = std::move(outcome.responses);
      trace.backend_calls += outcome.calls;
      trace.nonnumeric_responses += outcome.nonnumeric;
      trace.parse_failures += outcome.source == ChoiceSource::kFallback;
    }
    winner = rec.options[static_cast<std::size_t>(rec.parsed_choice - 1)];
    rec.winner_class_id = winner;
    ++trace.rounds_executed;
    ++trace.queries_used;

    bool truth_shown = image.true_class_id &&
                       std::find(rec.options.begin(), rec.options.end(), *image.true_class_id) != rec.options.end();
    trace.rounds.push_back(std::move(rec));
    if (opts.mode == RunMode::kEvaluate && truth_shown && winner != *image.true_class_id) {
      trace.early_stopped = true;
      break;
    }
    carried = winner;
  }
  trace.final_class_id = winner;
  return trace;
}

json to_json(const McqaTrace& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) {
    rounds.push_back({{"options", r.options},
                      {"responses", r.responses},
                      {"parsed_choice", r.parsed_choice},
                      {"source", to_string(r.source)},
                      {"winner_class_id", r.winner_class_id}});
  }
  json j = {{"image_ref", t.image_ref},
            {"true_class_id", t.true_class_id ? json(*t.true_class_id) : json()},
            {"m", t.m},
            {"seed", t.seed},
            {"mode", to_string(t.mode)},
            {"rounds_executed", t.rounds_executed},
            {"rounds", std::move(rounds)},
            {"early_stopped", t.early_stopped},
            {"parse_failures", t.parse_failures},
            {"nonnumeric_responses", t.nonnumeric_responses},
            {"final_class_id", t.final_class_id},
            {"queries_used", t.queries_used},
            {"backend_calls", t.backend_calls}};
  if (auto c = t.correct()) j["correct"] = *c;
  return j;
}

McqaTrace trace_from_json(const json& j) {
  McqaTrace t;
  t.image_ref = j.at("image_ref").get<std::string>();
  if (!j.at("true_class_id").is_null()) t.true_class_id = j.at("true_class_id").get<int>();
  t.m = j.at("m").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.mode = parse_run_mode(j.at("mode").get<std::string>());
  t.rounds_executed = j.at("rounds_executed").get<int>();
  for (const auto& r : j.at("rounds")) {
    RoundRecord rec;
    rec.options = r.at("options").get<std::vector<int>>();
    rec.responses = r.at("responses").get<std::vector<std::string>>();
    rec.parsed_choice = r.at("parsed_choice").get<int>();
    rec.source = parse_choice_source(r.at("source").get<std::string>());
    rec.winner_class_id = r.at("winner_class_id").get<int>();
    t.rounds.push_back(std::move(rec));
  }
  t.early_stopped = j.at("early_stopped").get<bool>();
  t.parse_failures = j.at("parse_failures").get<int>();
  t.nonnumeric_responses = j.at("nonnumeric_responses").get<int>();
  t.final_class_id = j.at("final_class_id").get<int>();
  t.queries_used = j.at("queries_used").get<int>();
  t.backend_calls = j.at("backend_calls").get<int>();
  return t;
}

}  // namespace fgprobe
