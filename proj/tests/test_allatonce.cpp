#include <doctest.h>

#include <random>

#include "fgprobe/allatonce.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/oracle_backend.hpp"
#include "fgprobe/scripted_backend.hpp"
#include "random_fixtures.hpp"

using namespace fgprobe;

namespace {

// Wraps another backend and advertises a context window.
class BudgetedBackend : public Backend {
 public:
  BudgetedBackend(const Backend& inner, int budget) : inner_(inner), budget_(budget) {}
  BackendResponse complete(const BackendRequest& req) const override { return inner_.complete(req); }
  Capabilities probe_capabilities() const override { return {inner_.probe_capabilities().supports_logprobs, budget_}; }
  std::string name() const override { return "budgeted"; }

 private:
  const Backend& inner_;
  int budget_;
};

class OverflowBackend : public Backend {
 public:
  BackendResponse complete(const BackendRequest&) const override {
    throw BackendError(BackendErrc::kContextOverflow, "maximum context length exceeded");
  }
  Capabilities probe_capabilities() const override { return {false, std::nullopt}; }
  std::string name() const override { return "overflow"; }
};

}  // namespace

TEST_CASE("token estimate is a quarter of the characters, rounded up") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  CHECK(estimate_tokens(std::string(400, 'x')) == 100);
}

TEST_CASE("one query lists every class in benchmark order") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  ScriptedBackend b(ScriptedReply{"4", std::nullopt});
  AllAtOncePrediction p = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName,
                                               templates::all_at_once(), b);
  CHECK(p.predicted_class_id == 3);
  CHECK(p.queries_used == 1);
  CHECK(p.parse_status == ParseStatus::kStrict);
  CHECK(p.option_order == std::vector<int>{0, 1, 2, 3, 4});
  REQUIRE(b.calls() == 1);
  const std::string& prompt = b.history()[0].prompt;
  CHECK(prompt.find("from all of the following options") != std::string::npos);
  CHECK(prompt.find("5. " + bench.at(4).description_with_name) != std::string::npos);
  CHECK(p.prompt_token_estimate == estimate_tokens(prompt));
}

TEST_CASE("shuffled options map the answer back through the order") {
  Benchmark bench = synthetic_benchmark(9);
  ScriptedBackend b(ScriptedReply{"2", std::nullopt});
  AllAtOnceOptions opts;
  opts.shuffle_options = true;
  opts.seed = 17;
  AllAtOncePrediction p = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName,
                                               templates::all_at_once(), b, opts);
  CHECK(p.option_order != std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(p.predicted_class_id == p.option_order[1]);
  AllAtOncePrediction again = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName,
                                                   templates::all_at_once(), b, opts);
  CHECK(again.option_order == p.option_order);
}

TEST_CASE("all-at-once against the oracle matches the argmax") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + static_cast<int>(rng() % 100);
    Benchmark bench = synthetic_benchmark(n);
    ScoreTable table;
    table.set("img", random_scores(n, rng));
    OracleBackend oracle(bench, table);
    AllAtOnceOptions opts;
    opts.shuffle_options = trial % 2 == 1;
    opts.seed = rng();
    CHECK(classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithoutName, templates::all_at_once(), oracle,
                               opts)
              .predicted_class_id == table.best("img"));
  }
}

TEST_CASE("unparseable answers are reported, not guessed") {
  Benchmark bench = synthetic_benchmark(5);
  ScriptedBackend chatty(ScriptedReply{"Probably the second-to-last one.", std::nullopt});
  AllAtOncePrediction p = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName,
                                               templates::all_at_once(), chatty);
  CHECK(p.predicted_class_id == -1);
  CHECK(p.parse_status == ParseStatus::kFailed);
  CHECK(p.raw_response == "Probably the second-to-last one.");

  ScriptedBackend lenient(ScriptedReply{"The answer is 5.", std::nullopt});
  p = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName, templates::all_at_once(), lenient);
  CHECK(p.predicted_class_id == 4);
  CHECK(p.parse_status == ParseStatus::kLenient);
}

TEST_CASE("context budget is checked before sending and on overflow") {
  Benchmark bench = synthetic_benchmark(200);
  ScriptedBackend inner(ScriptedReply{"1", std::nullopt});
  BudgetedBackend small(inner, 500);
  try {
    classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName, templates::all_at_once(), small);
    FAIL("expected ContextBudgetError");
  } catch (const ContextBudgetError& e) {
    CHECK(e.estimated_tokens() > 500);
  }
  CHECK(inner.calls() == 0);

  BudgetedBackend large(inner, 100000);
  CHECK(classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName, templates::all_at_once(), large)
            .predicted_class_id == 0);

  OverflowBackend overflow;
  CHECK_THROWS_AS(
      classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName, templates::all_at_once(), overflow),
      ContextBudgetError);
}

TEST_CASE("a single class needs no query") {
  Benchmark bench = synthetic_benchmark(1);
  ScriptedBackend b(ScriptedReply{"1", std::nullopt});
  AllAtOncePrediction p = classify_all_at_once({"img", std::nullopt}, bench, Variant::kWithName,
                                               templates::all_at_once(), b);
  CHECK(p.predicted_class_id == 0);
  CHECK(p.queries_used == 0);
  CHECK(b.calls() == 0);
}
