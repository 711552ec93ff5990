#include <doctest.h>

#include <cmath>
#include <thread>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/oracle_backend.hpp"
#include "fgprobe/scripted_backend.hpp"

using namespace fgprobe;
using nlohmann::json;

namespace {

BackendErrc backend_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const BackendError& e) {
    return e.code();
  }
  FAIL("expected BackendError");
  return BackendErrc::kTransport;
}

Benchmark multiline_benchmark() {
  Benchmark b;
  b.dataset_name = "multi";
  b.classes = {{0, "A", "Alpha with name.", "Alpha line one.\n2. still alpha"},
               {1, "B", "Beta with name.", "Beta\nsecond line"},
               {2, "C", "Gamma with name.", "Gamma."}};
  return b;
}

}  // namespace

TEST_CASE("scripted backend echoes its default") {
  ScriptedBackend b(ScriptedReply{"3", std::nullopt});
  CHECK(b.complete({"img", "anything", false, 4}).text == "3");
  CHECK_FALSE(b.probe_capabilities().supports_logprobs);
}

TEST_CASE("scripted rules take priority over the sequence, which precedes the default") {
  ScriptedBackend b({ScriptedReply{"first", std::nullopt}, ScriptedReply{"second", std::nullopt}},
                    ScriptedReply{"rest", std::nullopt});
  b.add_rule("magic", {"rule", std::nullopt});
  b.add_rule("", {"bird image", std::nullopt}, "bird");
  CHECK(b.complete({"x", "plain", false, 4}).text == "first");
  CHECK(b.complete({"x", "has magic word", false, 4}).text == "rule");
  CHECK(b.complete({"x", "plain", false, 4}).text == "second");
  CHECK(b.complete({"a-bird.jpg", "plain", false, 4}).text == "bird image");
  CHECK(b.complete({"x", "plain", false, 4}).text == "rest");
  CHECK(b.calls() == 5);
  CHECK(b.history()[1].prompt == "has magic word");
}

TEST_CASE("scripted backend refuses logprobs it does not have") {
  ScriptedBackend plain(ScriptedReply{"Yes", std::nullopt});
  CHECK(backend_code([&] { plain.complete({"x", "p", true, 1}); }) == BackendErrc::kCapability);

  ScriptedBackend scored(ScriptedReply{"Yes", std::vector<TokenLogprob>{{"Yes", -0.1}, {"No", -2.3}}});
  CHECK(scored.probe_capabilities().supports_logprobs);
  auto r = scored.complete({"x", "p", true, 1});
  REQUIRE(r.first_position_logprobs);
  CHECK(r.first_position_logprobs->at(1) == TokenLogprob{"No", -2.3});
  CHECK_FALSE(scored.complete({"x", "p", false, 1}).first_position_logprobs);
}

TEST_CASE("scripted backend from JSON") {
  auto b = ScriptedBackend::from_json(json::parse(R"({
    "rules": [{"contains": "Yes or No", "text": "Yes", "logprobs": [["Yes", -0.5], [" no", -1.0]]}],
    "sequence": ["one", {"text": "two"}],
    "default": {"text": "later"}
  })"));
  CHECK(b.probe_capabilities().supports_logprobs);
  CHECK(b.complete({"x", "q", false, 4}).text == "one");
  auto r = b.complete({"x", "Answer Yes or No", true, 1});
  CHECK(r.text == "Yes");
  CHECK(r.first_position_logprobs->size() == 2);
  CHECK(b.complete({"x", "q", false, 4}).text == "two");
  CHECK(b.complete({"x", "q", false, 4}).text == "later");

  CHECK_THROWS_AS(ScriptedBackend::from_json(json::parse(R"({"rules": [{"text": 5}]})")), ConfigError);
}

TEST_CASE("requests are validated") {
  ScriptedBackend b(ScriptedReply{"1", std::nullopt});
  CHECK(backend_code([&] { b.complete({"x", "", false, 4}); }) == BackendErrc::kInvalidRequest);
  CHECK(backend_code([&] { b.complete({"x", "p", false, 0}); }) == BackendErrc::kInvalidRequest);
}

TEST_CASE("counting backend forwards and counts") {
  ScriptedBackend inner(ScriptedReply{"2", std::nullopt});
  CountingBackend counter(inner);
  for (int i = 0; i < 7; ++i) counter.complete({"x", "p", false, 2});
  CHECK(counter.calls() == 7);
  CHECK(inner.calls() == 7);
  counter.reset();
  CHECK(counter.calls() == 0);
}

TEST_CASE("oracle answers Yes/No prompts through the sigmoid link") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  OracleBackend oracle(bench, ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json"));
  CHECK(oracle.probe_capabilities().supports_logprobs);

  std::string prompt = templates::yesno().render({{"description", bench.at(0).description_without_name}});
  auto r = oracle.complete({"img/c0_a.jpg", prompt, true, 1});
  CHECK(r.text == "Yes");
  REQUIRE(r.first_position_logprobs);
  const auto& lps = *r.first_position_logprobs;
  CHECK(lps[0].token == "Yes");
  CHECK(lps[0].logprob == doctest::Approx(std::log(1.0 / (1.0 + std::exp(-2.1)))).epsilon(1e-12));
  CHECK(lps[1].logprob == doctest::Approx(std::log(1.0 / (1.0 + std::exp(2.1)))).epsilon(1e-12));
  CHECK(std::exp(lps[0].logprob) + std::exp(lps[1].logprob) == doctest::Approx(1.0));

  prompt = templates::yesno().render({{"description", bench.at(4).description_with_name}});
  CHECK(oracle.complete({"img/c0_a.jpg", prompt, false, 1}).text == "No");
}

TEST_CASE("sigmoid helpers are stable at the extremes") {
  CHECK(OracleBackend::yes_probability(0.0) == doctest::Approx(0.5));
  CHECK(std::isfinite(OracleBackend::log_yes_probability(-800.0)));
  CHECK(OracleBackend::log_yes_probability(-800.0) == doctest::Approx(-800.0));
  CHECK(OracleBackend::log_yes_probability(800.0) == doctest::Approx(0.0));
}

TEST_CASE("oracle picks the subset maximum in presented order") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  OracleBackend oracle(bench, ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json"));
  // c3_a scores: [-0.8, 0.1, 0.5, 1.2, 1.6]
  std::vector<std::string> texts = {bench.at(1).description_with_name, bench.at(3).description_with_name,
                                    bench.at(2).description_with_name};
  std::string prompt = render_mcqa_prompt(texts, templates::mcqa());
  CHECK(oracle.parse_options(prompt) == std::vector<int>{1, 3, 2});
  CHECK(oracle.complete({"img/c3_a.jpg", prompt, false, 4}).text == "2");

  texts.push_back(bench.at(4).description_without_name);
  prompt = render_mcqa_prompt(texts, templates::mcqa());
  auto r = oracle.complete({"img/c3_a.jpg", prompt, true, 4});
  CHECK(r.text == "4");
  REQUIRE(r.first_position_logprobs);
  double mass = 0;
  for (const auto& t : *r.first_position_logprobs) mass += std::exp(t.logprob);
  CHECK(mass == doctest::Approx(1.0));
}

TEST_CASE("oracle ties go to the lowest class id") {
  ScoreTable t;
  t.set("img", {0.5, 0.9, 0.9, 0.1});
  std::vector<int> ids = {2, 0, 1};
  CHECK(t.best_of("img", ids) == 1);
  CHECK(t.best("img") == 1);
}

TEST_CASE("oracle handles multi-line option text") {
  Benchmark bench = multiline_benchmark();
  ScoreTable t;
  t.set("img", {0.0, 1.0, 2.0});
  OracleBackend oracle(bench, t);
  std::vector<std::string> texts = {bench.at(0).description_without_name, bench.at(1).description_without_name,
                                    bench.at(2).description_without_name};
  std::string prompt = render_mcqa_prompt(texts, templates::mcqa());
  CHECK(oracle.parse_options(prompt) == std::vector<int>{0, 1, 2});
  CHECK(oracle.complete({"img", prompt, false, 4}).text == "3");
}

TEST_CASE("oracle refuses prompts it cannot read and unknown images") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  OracleBackend oracle(bench, ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json"));
  CHECK(backend_code([&] { oracle.complete({"img/c0_a.jpg", "What is this?", false, 4}); }) ==
        BackendErrc::kRefusal);
  CHECK(backend_code([&] { oracle.complete({"img/unknown.jpg", "1. x", false, 4}); }) ==
        BackendErrc::kInvalidRequest);
}

TEST_CASE("score table JSON round-trips") {
  ScoreTable t = ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json");
  CHECK(t.size() == 15);
  ScoreTable again = ScoreTable::from_json(t.to_json());
  CHECK(again.row("img/c1_b.jpg") == t.row("img/c1_b.jpg"));
  CHECK_THROWS_AS(ScoreTable::from_json(json::parse(R"({"rows": {}})")), ConfigError);
}

TEST_CASE("backends are safe under concurrent calls") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  OracleBackend oracle(bench, ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json"));
  ScriptedBackend scripted(ScriptedReply{"1", std::nullopt});
  std::string prompt = templates::yesno().render({{"description", bench.at(2).description_with_name}});
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        if (oracle.complete({"img/c2_a.jpg", prompt, true, 1}).text != "Yes") ++mismatches;
        scripted.complete({"x", "p", false, 1});
      }
    });
  for (auto& th : threads) th.join();
  CHECK(mismatches == 0);
  CHECK(scripted.calls() == 1600);
}
