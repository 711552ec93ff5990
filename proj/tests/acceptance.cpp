// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fgprobe/allatonce.hpp"
#include "fgprobe/curation.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/harness.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/oracle_backend.hpp"
#include "fgprobe/sandbox/attention.hpp"
#include "fgprobe/sandbox/transformer.hpp"
#include "fgprobe/scripted_backend.hpp"
#include "fgprobe/yesno.hpp"
#include "random_fixtures.hpp"
#include "reference_sandbox.hpp"

using namespace fgprobe;
using nlohmann::json;

namespace {

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------------------

void oracle_agreement() {
  const int instances = 1000;
  std::mt19937_64 rng(20240611);
  int agree = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < instances; ++i) {
    int n = std::uniform_int_distribution<int>(2, 300)(rng);
    int m = std::uniform_int_distribution<int>(2, 10)(rng);
    Benchmark bench = synthetic_benchmark(n);
    ScoreTable table;
    const std::string img = "img" + std::to_string(i);
    table.set(img, random_scores(n, rng));
    OracleBackend oracle(bench, table);
    const int truth = table.best(img);
    ImageCase c{img, std::nullopt};
    Variant v = (rng() & 1) ? Variant::kWithName : Variant::kWithoutName;

    YesNoPrediction y = classify_yesno(c, bench, v, templates::yesno(), oracle);
    McqaOptions mo;
    mo.m = m;
    mo.seed = rng();
    mo.carry = (rng() & 1) ? CarryPosition::kRandom : CarryPosition::kFirst;
    McqaTrace t = run_iterative(c, bench, v, templates::mcqa(), oracle, mo);
    AllAtOnceOptions ao;
    ao.shuffle_options = rng() & 1;
    ao.seed = rng();
    AllAtOncePrediction a = classify_all_at_once(c, bench, v, templates::all_at_once(), oracle, ao);
    if (y.predicted_class_id == truth && t.final_class_id == truth && a.predicted_class_id == truth) ++agree;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("oracle-agreement", agree == instances && secs < 10.0,
         fmt("%.0f/%.0f instances agree, %.2f s", agree, instances, secs));
}

void query_counts() {
  const int formula = expected_round_count(200, 5);
  const int planned = plan_rounds(200, 5, 7).round_count();
  Benchmark bench = synthetic_benchmark(200);
  std::mt19937_64 rng(5);
  ScoreTable table;
  table.set("img", random_scores(200, rng));
  OracleBackend oracle(bench, table);
  CountingBackend counter(oracle);
  McqaOptions mo;
  mo.m = 5;
  McqaTrace t = run_iterative({"img", std::nullopt}, bench, Variant::kWithName, templates::mcqa(), counter, mo);
  CountingBackend yes_counter(oracle);
  classify_yesno({"img", std::nullopt}, bench, Variant::kWithName, templates::yesno(), yes_counter);
  const double reduction = 100.0 * (1.0 - static_cast<double>(counter.calls()) / yes_counter.calls());
  const bool ok = formula == 50 && planned == 50 && t.queries_used == 50 && counter.calls() == 50 &&
                  yes_counter.calls() == 200 && std::abs(reduction - 75.0) < 1e-12;
  report("query-counts", ok,
         fmt("rounds(200,5): formula %.0f, executed %.0f calls; reduction vs yes/no %.0f%%", formula,
             static_cast<double>(counter.calls()), reduction));
}

void early_stop() {
  const int runs = 600;
  std::mt19937_64 rng(77);
  int same_verdict = 0, cheaper_or_equal = 0, stopped = 0;
  for (int i = 0; i < runs; ++i) {
    int n = std::uniform_int_distribution<int>(2, 120)(rng);
    Benchmark bench = synthetic_benchmark(n);
    ScoreTable table;
    table.set("img", random_scores(n, rng));
    OracleBackend oracle(bench, table);
    int truth = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (rng() % 3 == 0) truth = table.best("img");
    ImageCase c{"img", truth};
    McqaOptions mo;
    mo.m = std::uniform_int_distribution<int>(2, 10)(rng);
    mo.seed = rng();
    mo.carry = (rng() & 1) ? CarryPosition::kRandom : CarryPosition::kFirst;
    CountingBackend pc(oracle), ec(oracle);
    McqaTrace p = run_iterative(c, bench, Variant::kWithoutName, templates::mcqa(), pc, mo);
    mo.mode = RunMode::kEvaluate;
    McqaTrace e = run_iterative(c, bench, Variant::kWithoutName, templates::mcqa(), ec, mo);
    if (p.correct() == e.correct()) ++same_verdict;
    if (e.queries_used <= p.queries_used && ec.calls() <= pc.calls()) ++cheaper_or_equal;
    if (e.early_stopped) ++stopped;
  }
  report("early-stop", same_verdict == runs && cheaper_or_equal == runs,
         fmt("%.0f/%.0f verdicts equal, queries never higher, %.0f runs stopped early", same_verdict, runs,
             stopped));
}

// Strictly increasing maps kept inside the sigmoid's resolvable range.
std::function<double(double)> random_transform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 3.0);
  switch (rng() % 4) {
    case 0: {
      double a = u(rng), b = u(rng) - 1.5;
      return [a, b](double x) { return a * x + b; };
    }
    case 1:
      return [](double x) { return x * x * x / 20.0; };
    case 2: {
      double c = u(rng);
      return [c](double x) { return 8.0 * std::tanh(x / (4.0 * c)); };
    }
    default: {
      std::vector<double> knots = {-1e9, -2.0, 0.0, 2.0};
      std::uniform_real_distribution<double> slope(0.1, 1.0);
      std::vector<double> slopes;
      for (std::size_t i = 0; i < knots.size(); ++i) slopes.push_back(slope(rng));
      return [knots, slopes](double x) {
        double y = 0.0;
        for (std::size_t i = 0; i < knots.size(); ++i) {
          double hi = i + 1 < knots.size() ? knots[i + 1] : 1e9;
          double lo = i == 0 ? -20.0 : knots[i];
          y += slopes[i] * (std::clamp(x, lo, hi) - lo);
        }
        return y - 10.0;
      };
    }
  }
}

void yesno_invariance() {
  const int runs = 600;
  std::mt19937_64 rng(31);
  int unchanged = 0;
  for (int i = 0; i < runs; ++i) {
    int n = std::uniform_int_distribution<int>(2, 40)(rng);
    Benchmark bench = synthetic_benchmark(n);
    std::vector<double> s = random_scores(n, rng);
    auto f = random_transform(rng);
    std::vector<double> fs;
    for (double x : s) fs.push_back(f(x));
    ScoreTable a, b;
    a.set("img", s);
    b.set("img", fs);
    OracleBackend oa(bench, a), ob(bench, b);
    YesNoOptions opts;
    opts.normalize = rng() & 1;
    ImageCase c{"img", std::nullopt};
    int pa = classify_yesno(c, bench, Variant::kWithName, templates::yesno(), oa, opts).predicted_class_id;
    int pb = classify_yesno(c, bench, Variant::kWithName, templates::yesno(), ob, opts).predicted_class_id;
    if (pa == pb && pa == a.best("img")) ++unchanged;
  }
  report("yesno-invariance", unchanged == runs, fmt("%.0f/%.0f predictions unchanged", unchanged, runs));
}

sandbox::SandboxConfig random_sandbox(std::mt19937_64& rng, int i) {
  sandbox::SandboxConfig c;
  c.layers = std::uniform_int_distribution<int>(6, 12)(rng);
  c.heads = std::array<int, 3>{1, 2, 4}[rng() % 3];
  c.width = c.heads * std::array<int, 3>{4, 8, 12}[rng() % 3];
  c.vocab = 32;
  c.max_seq = 24;
  if (i % 3 == 0)
    c.k = 3;
  else if (i % 3 == 1)
    c.k = c.layers - 3;
  else
    c.k = std::uniform_int_distribution<int>(3, c.layers - 3)(rng);
  c.lambda = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
  c.renormalize = rng() % 4 != 0;
  c.deep_source = (rng() & 1) ? sandbox::DeepSource::kRaw : sandbox::DeepSource::kModified;
  c.seed = rng();
  return c;
}

void lambda_identity() {
  const int cases = 120;
  std::mt19937_64 rng(11);
  int ok = 0, boundary = 0;
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    sandbox::SandboxConfig c = random_sandbox(rng, i);
    if (c.k == 3 || c.k == c.layers - 3) ++boundary;
    sandbox::Sandbox model(c);
    auto tokens = sandbox::random_tokens(std::uniform_int_distribution<std::size_t>(1, 24)(rng), c.vocab, rng());
    auto exec = (i & 1) ? sandbox::Exec::kParallel : sandbox::Exec::kSerial;
    auto off = model.forward(tokens, sandbox::Intervention::kOff, exec);
    auto zero = model.with_intervention(c.k, 0.0, c.renormalize, c.deep_source)
                    .forward(tokens, sandbox::Intervention::kOn, exec);
    double d = sandbox::max_abs_diff(off.logits, zero.logits);
    worst = std::max(worst, d);
    if (d <= 1e-6) ++ok;
  }
  report("lambda0-identity", ok == cases && boundary > 0,
         fmt("%.0f/%.0f cases, %.0f with k at a boundary", ok, cases, boundary) + fmt(", max |diff| %.1e", worst));
}

void attention_algebra() {
  const int cases = 120;
  std::mt19937_64 rng(13);
  int ok = 0;
  double worst = 0.0, worst_row = 0.0;
  for (int i = 0; i < cases; ++i) {
    sandbox::SandboxConfig c = random_sandbox(rng, i);
    sandbox::Sandbox model(c);
    std::vector<int> tokens =
        sandbox::random_tokens(std::uniform_int_distribution<std::size_t>(1, 24)(rng), c.vocab, rng());
    auto exec = (i & 1) ? sandbox::Exec::kParallel : sandbox::Exec::kSerial;
    auto on = model.forward(tokens, sandbox::Intervention::kOn, exec);
    auto off = model.forward(tokens, sandbox::Intervention::kOff, exec);
    auto ref = reference::forward(c, model.weights(), tokens, true);

    double diff = 0.0;
    bool untouched = true;
    for (int l = 1; l <= c.layers; ++l)
      for (int h = 0; h < c.heads; ++h) {
        diff = std::max(diff, reference::max_diff(ref.applied[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)],
                                                  on.attention.at(l, h)));
        if (l <= c.k) untouched = untouched && on.attention.at(l, h) == off.attention.at(l, h);
      }
    diff = std::max(diff, reference::max_diff(ref.logits, on.logits));

    // The as-applied stack also has to equal the two-step algebra on the raw stack.
    std::vector<std::vector<reference::Mat>> raw(static_cast<std::size_t>(c.layers) + 1);
    for (int l = 1; l <= c.layers; ++l)
      for (int h = 0; h < c.heads; ++h) {
        const auto& a = off.attention.at(l, h);
        reference::Mat m(a.rows, std::vector<double>(a.cols));
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t col = 0; col < a.cols; ++col) m[r][col] = a(r, col);
        raw[static_cast<std::size_t>(l)].push_back(m);
      }
    // Only valid where the stack is unchanged by upstream value mixing: layers up to k+1.
    auto algebra = reference::intervene(raw, c.layers, c.k, c.lambda, c.renormalize,
                                        c.deep_source == sandbox::DeepSource::kRaw);
    for (int h = 0; h < c.heads; ++h)
      diff = std::max(diff, reference::max_diff(algebra[static_cast<std::size_t>(c.k + 1)][static_cast<std::size_t>(h)],
                                                on.attention.at(c.k + 1, h)));

    sandbox::StackCheck chk = sandbox::check_stack(on.attention);
    bool rows_ok = !c.renormalize || chk.row_stochastic(1e-6);
    if (c.renormalize) worst_row = std::max(worst_row, chk.max_row_sum_error);
    worst = std::max(worst, diff);
    if (diff <= 1e-6 && untouched && rows_ok && chk.causal()) ++ok;
  }
  report("attention-vs-reference", ok == cases,
         fmt("%.0f/%.0f cases, max |diff| %.1e", ok, cases, worst) + fmt(", max |row sum - 1| %.1e", worst_row));
}

// ---------------------------------------------------------------------------

// Five-class benchmark where exactly `correct` of `total` cases are won by their true class.
EvalReport planted_run(const std::string& dataset, int correct, int total) {
  Benchmark bench = synthetic_benchmark(5, dataset);
  ScoreTable table;
  std::vector<ImageCase> cases;
  for (int i = 0; i < total; ++i) {
    const int truth = i % 5;
    const int winner = i < correct ? truth : (truth + 1) % 5;
    std::vector<double> s(5, 0.0);
    s[static_cast<std::size_t>(winner)] = 1.0;
    const std::string img = dataset + "/" + std::to_string(i);
    table.set(img, s);
    cases.push_back({img, truth});
  }
  OracleBackend oracle(bench, table);
  EvalConfig cfg;
  cfg.workers = 4;
  return run_eval(cfg, bench, cases, oracle);
}

void delta_table() {
  struct Planted {
    std::string dataset;
    int a_correct, b_correct, total;
    std::string expect_a, expect_b, expect_delta;
  };
  const std::vector<Planted> rows = {{"cub", 184, 233, 1000, "18.40", "23.30", "+4.90"},
                                     {"aircraft", 41, 53, 350, "11.71", "15.14", "+3.43"}};
  bool ok = true;
  std::string detail;
  for (const auto& p : rows) {
    EvalReport a = planted_run(p.dataset, p.a_correct, p.total);
    EvalReport b = planted_run(p.dataset, p.b_correct, p.total);
    DeltaTable t = diff_reports(a, b);
    std::string got = format_signed(t.overall().delta_centi());
    ok = ok && got == p.expect_delta && format_percent(a.accuracy) == p.expect_a &&
         format_percent(b.accuracy) == p.expect_b;
    detail += format_percent(a.accuracy) + " -> " + format_percent(b.accuracy) + " = " + got + "  ";
  }
  report("delta-arithmetic", ok, detail);
}

void sampling() {
  ImageManifest manifest;
  for (int c = 0; c < 200; ++c)
    for (int i = 0; i < 12; ++i)
      manifest.by_class[c].push_back({"c" + std::to_string(c) + "/" + std::to_string(i) + ".jpg", i < 2});
  SampledCases a = sample_cases(manifest, 5, 2024), b = sample_cases(manifest, 5, 2024);
  std::set<std::string> unique;
  std::map<int, int> per_class;
  bool no_curation = true, same = a.cases.size() == b.cases.size();
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    unique.insert(a.cases[i].image_ref);
    ++per_class[*a.cases[i].true_class_id];
    const auto& ref = a.cases[i].image_ref;
    no_curation = no_curation && !ref.ends_with("/0.jpg") && !ref.ends_with("/1.jpg");
    same = same && ref == b.cases[i].image_ref && a.cases[i].true_class_id == b.cases[i].true_class_id;
  }
  bool balanced = per_class.size() == 200 &&
                  std::all_of(per_class.begin(), per_class.end(), [](const auto& kv) { return kv.second == 5; });
  report("sampling", a.cases.size() == 1000 && unique.size() == 1000 && same && balanced && no_curation,
         fmt("%.0f cases, %.0f unique, reproducible under a fixed seed", static_cast<double>(a.cases.size()),
             static_cast<double>(unique.size())));
}

void robustness() {
  Benchmark bench = synthetic_benchmark(60);
  std::mt19937_64 rng(3);
  ScoreTable table;
  std::vector<ImageCase> cases;
  for (int i = 0; i < 30; ++i) {
    const std::string img = "img" + std::to_string(i);
    table.set(img, random_scores(60, rng));
    cases.push_back({img, table.best(img)});
  }
  auto oracle = std::make_shared<OracleBackend>(bench, table);
  const std::string suffix = McqaOptions{}.reprompt_suffix;

  // Per image: a round counter, and the rounds whose answers are corrupted. Hard injections keep
  // answering prose through the re-prompt; soft ones recover when re-prompted.
  struct Plan {
    std::set<int> hard, soft;
    int round = -1;
  };
  auto plans = std::make_shared<std::map<std::string, Plan>>();
  int hard = 0, soft = 0;
  const int rounds = expected_round_count(60, 5);
  for (const auto& c : cases) {
    Plan p;
    for (int r = 0; r < rounds; ++r) {
      auto x = rng() % 10;
      if (x == 0) p.hard.insert(r);
      else if (x == 1) p.soft.insert(r);
    }
    hard += static_cast<int>(p.hard.size());
    soft += static_cast<int>(p.soft.size());
    (*plans)[c.image_ref] = p;
  }
  ScriptedBackend injector(
      [oracle, plans, suffix](const BackendRequest& req, std::size_t) -> ScriptedReply {
        Plan& p = plans->at(req.image);
        const bool reprompt = req.prompt.ends_with(suffix);
        if (!reprompt) ++p.round;
        if (p.hard.count(p.round)) return {"I am not sure which one this is.", std::nullopt};
        if (p.soft.count(p.round) && !reprompt) return {"Hmm, hard to say.", std::nullopt};
        BackendRequest clean = req;
        if (reprompt) clean.prompt.resize(clean.prompt.size() - suffix.size() - 1);
        return {oracle->complete(clean).text, std::nullopt};
      },
      false);

  EvalConfig cfg;
  cfg.m = 5;
  bool ran = true;
  EvalReport r;
  try {
    r = run_eval(cfg, bench, cases, injector);
  } catch (const std::exception&) {
    ran = false;
  }
  const bool ok = ran && r.aborted_cases == 0 && r.evaluated_cases == 30 && r.parse_failures == hard &&
                  r.nonnumeric_responses == 2 * hard + soft;
  report("mcqa-robustness", ok,
         fmt("%.0f hard injections -> %.0f parse failures", hard, r.parse_failures) +
             fmt(", %.0f recovered via re-prompt, %.0f non-numeric responses", soft, r.nonnumeric_responses));
}

ScriptedBackend load_script(const std::string& name) {
  std::ifstream in(std::string(FGPROBE_FIXTURES) + "/" + name);
  return ScriptedBackend::from_json(json::parse(in));
}

void curation() {
  std::ifstream in(std::string(FGPROBE_FIXTURES) + "/curate_jobs.json");
  json doc = json::parse(in);
  std::vector<std::pair<std::string, std::vector<std::string>>> classes;
  for (const auto& c : doc["classes"]) classes.emplace_back(c["class_name"], c["images"]);
  auto jobs = make_job_pairs(classes);

  ScriptedBackend good = load_script("curate_script.json");
  ProgressManifest clean_manifest;
  CurationSummary clean;
  bool clean_ok = false;
  try {
    Benchmark b = build_benchmark(jobs, good, clean_manifest, "auklets2", &clean);
    clean_ok = validate_benchmark(b).ok() && clean.regenerations == 0 && clean.review_queue.empty();
  } catch (const std::exception&) {
  }

  ScriptedBackend leaky = load_script("curate_leaky_script.json");
  ProgressManifest leak_manifest;
  CurationSummary leak;
  bool flagged = false;
  try {
    build_benchmark(jobs, leaky, leak_manifest, "auklets2", &leak);
  } catch (const CurationError& e) {
    flagged = e.code() == CurationErrc::kPersistentLeakage;
  }
  const bool ok = clean_ok && flagged && leak.regenerations == 1 && leak.review_queue.size() == 1;
  report("curation-leakage", ok,
         std::string(clean_ok ? "clean script validates" : "clean script rejected") +
             fmt(", leaking script: %.0f regeneration(s), %.0f review item(s)", leak.regenerations,
                 static_cast<double>(leak.review_queue.size())));
}

}  // namespace

int main() {
  oracle_agreement();
  query_counts();
  early_stop();
  yesno_invariance();
  lambda_identity();
  attention_algebra();
  delta_table();
  sampling();
  robustness();
  curation();
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
