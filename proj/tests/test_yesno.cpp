#include <doctest.h>

#include <cmath>

#include "fgprobe/errors.hpp"
#include "fgprobe/oracle_backend.hpp"
#include "fgprobe/scripted_backend.hpp"
#include "fgprobe/yesno.hpp"

using namespace fgprobe;

TEST_CASE("P(Yes) sums probability over the Yes-token variants") {
  std::vector<TokenLogprob> lps = {{"Yes", std::log(0.5)}, {" yes", std::log(0.2)}, {"No", std::log(0.1)},
                                   {"Maybe", std::log(0.15)}};
  YesScore s = score_from_logprobs(3, lps, {});
  CHECK(s.class_id == 3);
  CHECK(s.p_yes == doctest::Approx(0.7));
  REQUIRE(s.p_no);
  CHECK(*s.p_no == doctest::Approx(0.1));
  CHECK_FALSE(s.normalized);

  YesNoOptions norm;
  norm.normalize = true;
  YesScore n = score_from_logprobs(3, lps, norm);
  CHECK(n.normalized);
  CHECK(n.p_yes == doctest::Approx(0.7 / 0.8));
}

TEST_CASE("only a No token means P(Yes) is zero; neither is undefined") {
  std::vector<TokenLogprob> only_no = {{" No", -0.01}};
  CHECK(score_from_logprobs(0, only_no, {}).p_yes == 0.0);

  std::vector<TokenLogprob> neither = {{"The", -0.2}, {"A", -1.9}};
  try {
    score_from_logprobs(4, neither, {}, "The bird");
    FAIL("expected ScoreUndefinedError");
  } catch (const ScoreUndefinedError& e) {
    CHECK(e.raw_response() == "The bird");
  }
}

TEST_CASE("custom token sets replace the defaults") {
  YesNoOptions opts;
  opts.yes_tokens = {"oui"};
  opts.no_tokens = {"non"};
  std::vector<TokenLogprob> lps = {{"Yes", -0.1}, {"oui", std::log(0.3)}};
  CHECK(score_from_logprobs(0, lps, opts).p_yes == doctest::Approx(0.3));
}

TEST_CASE("argmax breaks ties toward the lowest class id") {
  auto score = [](int id, double p) {
    YesScore s;
    s.class_id = id;
    s.p_yes = p;
    return s;
  };
  std::vector<YesScore> scores = {score(0, 0.2), score(1, 0.9), score(2, 0.9), score(3, 0.5)};
  CHECK(argmax_lowest_id(scores) == 1);
  std::vector<YesScore> reversed = {score(3, 0.5), score(2, 0.9), score(1, 0.9), score(0, 0.2)};
  CHECK(argmax_lowest_id(reversed) == 1);
}

TEST_CASE("Yes/No classification agrees with the oracle's argmax") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  ScoreTable table = ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json");
  OracleBackend oracle(bench, table);
  CountingBackend counter(oracle);
  for (const char* img : {"img/c0_a.jpg", "img/c1_b.jpg", "img/c3_a.jpg", "img/c4_b.jpg"}) {
    for (Variant v : {Variant::kWithName, Variant::kWithoutName}) {
      YesNoPrediction p = classify_yesno({img, std::nullopt}, bench, v, templates::yesno(), counter);
      CHECK(p.predicted_class_id == table.best(img));
      CHECK(p.queries_used == 5);
      REQUIRE(p.scores.size() == 5);
      CHECK(p.scores[2].p_yes == doctest::Approx(1.0 / (1.0 + std::exp(-table.row(img)[2]))));
    }
  }
  CHECK(counter.calls() == 4 * 2 * 5);
}

TEST_CASE("Yes/No prompt text") {
  std::string p = templates::yesno().render({{"description", "This bird is small."}});
  CHECK(p == "Does this description accurately describe the image? Answer Yes or No.\nDescription: This bird is small.");
}

TEST_CASE("a backend without logprobs is rejected before any query") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  ScriptedBackend plain(ScriptedReply{"Yes", std::nullopt});
  try {
    classify_yesno({"img", std::nullopt}, bench, Variant::kWithName, templates::yesno(), plain);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.code() == BackendErrc::kCapability);
  }
  CHECK(plain.calls() == 0);
}

TEST_CASE("a failing class is identified by id") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  ScriptedBackend b(ScriptedReply{"Yes", std::vector<TokenLogprob>{{"Yes", -0.3}}});
  b.add_rule(bench.at(2).description_with_name, {"Hmm", std::vector<TokenLogprob>{{"Hmm", -0.1}}});
  try {
    classify_yesno({"img", std::nullopt}, bench, Variant::kWithName, templates::yesno(), b);
    FAIL("expected ClassScoringError");
  } catch (const ClassScoringError& e) {
    CHECK(e.class_id() == 2);
    CHECK_FALSE(e.backend_failure());
  }
}

TEST_CASE("fewer than two classes is a configuration error") {
  Benchmark bench = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  bench.classes.resize(1);
  OracleBackend oracle(bench, ScoreTable::load(FGPROBE_FIXTURES "/birds5_scores.json"));
  CHECK_THROWS_AS(classify_yesno({"img/c0_a.jpg", std::nullopt}, bench, Variant::kWithName, templates::yesno(), oracle),
                  ConfigError);
}
