#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "fgprobe/allatonce.hpp"
#include "fgprobe/config.hpp"
#include "fgprobe/curation.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/harness.hpp"
#include "fgprobe/http_backend.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/oracle_backend.hpp"
#include "fgprobe/sandbox/attention.hpp"
#include "fgprobe/sandbox/transformer.hpp"
#include "fgprobe/scripted_backend.hpp"
#include "fgprobe/yesno.hpp"

using namespace fgprobe;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitParse = 4;
constexpr int kExitReview = 5;

// Flag values are collected as strings and layered over file/env settings after parsing.
class FlagBindings {
 public:
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_option(flag, values_[key], help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    bound_.emplace_back(opt, key);
    return opt;
  }

  void toggle(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_flag(flag, toggles_[key], help);
    toggled_.emplace_back(opt, key);
  }

  void apply(CliConfig& cfg) const {
    for (const auto& [opt, key] : bound_)
      if (opt->count() > 0) cfg.set(key, values_.at(key), ConfigSource::kFlag);
    for (const auto& [opt, key] : toggled_)
      if (opt->count() > 0) cfg.set(key, toggles_.at(key) ? "true" : "false", ConfigSource::kFlag);
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> toggles_;
  std::vector<std::pair<CLI::Option*, std::string>> bound_;
  std::vector<std::pair<CLI::Option*, std::string>> toggled_;
};

void add_backend_flags(CLI::App* app, FlagBindings& b) {
  b.option(app, "--backend", "backend.kind", "oracle | scripted | http");
  b.option(app, "--oracle-table", "backend.oracle_table", "score table for the oracle backend");
  b.option(app, "--script", "backend.script", "script for the scripted backend");
  b.option(app, "--base-url", "backend.base_url", "chat-completions base URL");
  b.option(app, "--model", "backend.model", "remote model name");
  b.option(app, "--timeout", "backend.timeout_s", "request timeout in seconds");
  b.option(app, "--max-in-flight", "backend.max_in_flight", "concurrent live requests");
  b.option(app, "--max-context", "backend.max_context_tokens", "context window in tokens");
}

void add_method_flags(CLI::App* app, FlagBindings& b) {
  b.option(app, "--method", "eval.method", "yesno | mcqa | allatonce");
  b.option(app, "--variant", "eval.variant", "with_name | without_name");
  b.option(app, "--m", "eval.m", "options per MCQA round");
  b.option(app, "--seed", "eval.seed", "master seed");
  b.option(app, "--mode", "eval.mode", "predict | evaluate");
  b.option(app, "--carry", "eval.carry", "first | random");
  b.toggle(app, "--normalize,!--no-normalize", "eval.normalize", "normalize P(Yes) by Yes+No mass");
  b.toggle(app, "--shuffle-options,!--no-shuffle-options", "eval.shuffle_options", "shuffle all-at-once options");
}

std::unique_ptr<Backend> make_backend(const CliConfig& cfg, const Benchmark* benchmark, const EvalTemplates& tmpl) {
  const std::string& kind = cfg.get("backend.kind");
  if (kind == "oracle") {
    auto table = cfg.get_optional("backend.oracle_table");
    if (!table) throw ConfigError("the oracle backend needs --oracle-table (backend.oracle_table)");
    if (!benchmark) throw ConfigError("the oracle backend needs a benchmark");
    return std::make_unique<OracleBackend>(*benchmark, ScoreTable::load(*table), tmpl.yesno);
  }
  if (kind == "scripted") {
    auto path = cfg.get_optional("backend.script");
    if (!path) throw ConfigError("the scripted backend needs --script (backend.script)");
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open backend script: " + *path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("malformed backend script " + *path + ": " + e.what());
    }
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_json(doc));
  }
  if (kind == "http") return std::make_unique<HttpBackend>(cfg.http_config());
  throw ConfigError("unknown backend kind '" + kind + "' (expected oracle, scripted or http)");
}

Benchmark load_benchmark_or_config_error(const std::string& path) {
  try {
    return load_benchmark(path);
  } catch (const BenchmarkError& e) {
    throw ConfigError(e.what());
  }
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct ClassifyArgs {
  std::string image;
  std::string benchmark;
  std::string trace;
};

int run_classify(const CliConfig& cfg, const ClassifyArgs& args) {
  const Benchmark bench = load_benchmark_or_config_error(args.benchmark);
  const EvalConfig ec = cfg.eval_config();
  const EvalTemplates tmpl = cfg.eval_templates();
  auto backend = make_backend(cfg, &bench, tmpl);
  ImageCase image{args.image, std::nullopt};

  int predicted = -1;
  json trace;
  int exit_code = kExitOk;
  switch (ec.method) {
    case Method::kYesNo: {
      YesNoOptions opts;
      opts.normalize = ec.normalize_yes;
      YesNoPrediction p = classify_yesno(image, bench, ec.variant, tmpl.yesno, *backend, opts);
      predicted = p.predicted_class_id;
      json scores = json::array();
      for (const auto& s : p.scores) scores.push_back({{"class_id", s.class_id}, {"p_yes", s.p_yes}});
      trace = {{"method", "yesno"}, {"scores", scores}, {"queries_used", p.queries_used}};
      break;
    }
    case Method::kMcqa: {
      if (ec.mode == RunMode::kEvaluate) throw ConfigError("classify has no ground truth; use --mode predict");
      McqaOptions opts;
      opts.m = ec.m;
      opts.seed = case_seed(ec.seed, image.image_ref);
      opts.carry = ec.carry;
      McqaTrace t = run_iterative(image, bench, ec.variant, tmpl.mcqa, *backend, opts);
      predicted = t.final_class_id;
      trace = to_json(t);
      if (t.parse_failures > 0)
        std::cerr << "warning: " << t.parse_failures << " round(s) fell back to the carried option\n";
      break;
    }
    case Method::kAllAtOnce: {
      AllAtOnceOptions opts;
      opts.shuffle_options = ec.shuffle_options;
      opts.seed = case_seed(ec.seed, image.image_ref);
      AllAtOncePrediction p = classify_all_at_once(image, bench, ec.variant, tmpl.all_at_once, *backend, opts);
      predicted = p.predicted_class_id;
      trace = {{"method", "allatonce"},
               {"raw_response", p.raw_response},
               {"parse_status", to_string(p.parse_status)},
               {"prompt_token_estimate", p.prompt_token_estimate},
               {"option_order", p.option_order}};
      if (predicted < 0) {
        std::cerr << "error: could not parse an option index from: " << p.raw_response << '\n';
        exit_code = kExitParse;
      }
      break;
    }
  }
  if (!args.trace.empty()) write_json_file(args.trace, trace);
  if (predicted >= 0) std::cout << predicted << '\t' << bench.at(predicted).class_name << '\n';
  return exit_code;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string benchmark;
  std::string images;
  std::string report;
  std::string traces;
  std::vector<std::string> compare;
  std::vector<int> ablate_m;
  bool json_out = false;
};

int run_eval_command(const CliConfig& cfg, const EvalArgs& args) {
  if (!args.compare.empty()) {
    if (args.compare.size() != 2) throw ConfigError("--compare takes exactly two report files");
    DeltaTable t = diff_reports(load_report(args.compare[0]), load_report(args.compare[1]));
    if (args.json_out)
      std::cout << t.to_json().dump(2) << '\n';
    else
      std::cout << t.render();
    return kExitOk;
  }
  if (args.benchmark.empty()) throw ConfigError("eval needs --benchmark");
  if (args.images.empty()) throw ConfigError("eval needs --images (image manifest)");

  const Benchmark bench = load_benchmark_or_config_error(args.benchmark);
  EvalConfig ec = cfg.eval_config();
  const EvalTemplates tmpl = cfg.eval_templates();
  SampledCases sampled = sample_cases(ImageManifest::load(args.images), ec.per_class_samples, ec.seed);
  for (const auto& w : sampled.warnings) std::cerr << "warning: " << w << '\n';
  auto backend = make_backend(cfg, &bench, tmpl);

  if (!args.ablate_m.empty()) {
    auto reports = run_options_ablation(ec, args.ablate_m, bench, sampled.cases, *backend, tmpl);
    json all = json::object();
    std::cout << "m      accuracy  queries/case\n";
    for (const auto& [m, r] : reports) {
      char line[96];
      std::snprintf(line, sizeof line, "%-6d %8s  %12.2f\n", m, format_percent(r.accuracy).c_str(), r.queries.mean);
      std::cout << line;
      all[std::to_string(m)] = to_json(r);
    }
    if (!args.report.empty()) write_json_file(args.report, all);
    return kExitOk;
  }

  std::unique_ptr<std::ofstream> trace_file;
  std::unique_ptr<OrderedJsonlWriter> writer;
  if (!args.traces.empty()) {
    trace_file = std::make_unique<std::ofstream>(args.traces);
    if (!*trace_file) throw ConfigError("cannot write " + args.traces);
    writer = std::make_unique<OrderedJsonlWriter>(*trace_file);
  }
  EvalReport r = run_eval(ec, bench, sampled.cases, *backend, tmpl, writer.get());
  if (!args.report.empty()) save_report(r, args.report);
  if (args.json_out)
    std::cout << to_json(r).dump(2) << '\n';
  else
    std::cout << render_report(r);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CurateArgs {
  std::string jobs;
  std::string manifest;
  std::string out;
};

// {"dataset_name": "...", "classes": [{"class_name": "...", "images": ["...", ...]}, ...]}
int run_curate(const CliConfig& cfg, const CurateArgs& args) {
  std::ifstream in(args.jobs);
  if (!in) throw ConfigError("cannot open jobs file: " + args.jobs);
  json doc;
  std::string dataset;
  std::vector<std::pair<std::string, std::vector<std::string>>> classes;
  try {
    doc = json::parse(in);
    dataset = doc.at("dataset_name").get<std::string>();
    for (const auto& c : doc.at("classes"))
      classes.emplace_back(c.at("class_name").get<std::string>(), c.at("images").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ConfigError("malformed jobs file " + args.jobs + ": " + e.what());
  }
  auto jobs = make_job_pairs(classes);
  auto backend = make_backend(cfg, nullptr, cfg.eval_templates());
  ProgressManifest manifest = args.manifest.empty() ? ProgressManifest() : ProgressManifest(args.manifest);

  CurationSummary summary;
  int code = kExitOk;
  std::optional<Benchmark> bench;
  try {
    bench = build_benchmark(jobs, *backend, manifest, dataset, &summary);
  } catch (const CurationError& e) {
    if (e.code() != CurationErrc::kPersistentLeakage) throw;
    code = kExitReview;
  }
  std::cout << "classes      " << summary.classes << '\n'
            << "resumed      " << summary.resumed_pairs << '\n'
            << "generated    " << summary.generated_pairs << '\n'
            << "regenerated  " << summary.regenerations << '\n';
  for (const auto& w : summary.warnings) std::cout << "WARNING      " << w << '\n';
  for (const auto& item : summary.review_queue)
    std::cout << "REVIEW       " << item.class_name << ": " << item.reason << '\n';
  if (bench && !args.out.empty()) {
    save_benchmark(*bench, args.out);
    std::cout << "wrote        " << args.out << '\n';
  }
  return code;
}

// ---------------------------------------------------------------------------

int run_validate(const std::string& path) {
  Benchmark b;
  try {
    b = load_benchmark(path);
  } catch (const BenchmarkError& e) {
    std::cout << "INVALID " << e.what() << '\n';
    return kExitConfig;
  }
  ValidationReport r = validate_benchmark(b);
  std::cout << r.render();
  std::cout << (r.ok() ? "OK " : "INVALID ") << b.dataset_name << ": " << b.size() << " classes, "
            << r.count(IssueSeverity::kViolation) << " violation(s), " << r.count(IssueSeverity::kWarning)
            << " warning(s)\n";
  return r.ok() ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct SandboxArgs {
  int seq_len = 16;
  std::uint64_t token_seed = 1;
  std::string dump;
  bool parallel = false;
};

int run_sandbox(const CliConfig& cfg, const SandboxArgs& args) {
  using namespace sandbox;
  const SandboxConfig sc = cfg.sandbox_config();
  if (args.seq_len < 1 || args.seq_len > sc.max_seq)
    throw ConfigError("--seq-len must be in [1, " + std::to_string(sc.max_seq) + "]");
  const Exec exec = args.parallel ? Exec::kParallel : Exec::kSerial;
  const Sandbox model(sc);
  const auto tokens = random_tokens(static_cast<std::size_t>(args.seq_len), sc.vocab, args.token_seed);

  const ForwardResult off = model.forward(tokens, Intervention::kOff, exec);
  const ForwardResult on = model.forward(tokens, Intervention::kOn, exec);
  const ForwardResult zero =
      model.with_intervention(sc.k, 0.0, sc.renormalize, sc.deep_source).forward(tokens, Intervention::kOn, exec);
  const LayerBands bands = layer_bands(sc.layers, sc.k);

  bool all_ok = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    all_ok = all_ok && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
  };
  auto sci = [](double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
  };

  double identity = max_abs_diff(off.logits, zero.logits);
  report("lambda0-identity", identity <= 1e-6, "max |logit diff| = " + sci(identity));

  StackCheck chk = check_stack(on.attention);
  if (sc.renormalize)
    report("row-stochastic", chk.row_stochastic(1e-6), "max |row sum - 1| = " + sci(chk.max_row_sum_error));
  else
    report("non-negative", chk.min_entry >= 0.0, "min entry = " + sci(chk.min_entry));
  report("causal", chk.causal(), "max above diagonal = " + sci(chk.max_above_diagonal));

  bool prefix_equal = true;
  for (int l = 1; l <= bands.early_last; ++l)
    for (int h = 0; h < sc.heads; ++h) prefix_equal = prefix_equal && on.attention.at(l, h) == off.attention.at(l, h);
  report("untouched-layers", prefix_equal, "layers 1.." + std::to_string(bands.early_last) + " bitwise equal");

  std::cout << "bands        early " << bands.early_first << ".." << bands.early_last << ", deep " << bands.deep_first
            << ".." << bands.deep_last << ", final " << bands.final_first << ".." << bands.final_last << '\n';
  std::cout << "logit shift  max |on - off| = " << sci(max_abs_diff(on.logits, off.logits)) << '\n';

  if (!args.dump.empty()) {
    write_json_file(args.dump, dump_forward(sc, tokens, Intervention::kOn, on));
    std::cout << "wrote        " << args.dump << '\n';
  }
  return all_ok ? kExitOk : kExitCheckFailed;
}

int exit_code_for(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TemplateError& e) {
    std::cerr << "template error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BenchmarkError& e) {
    std::cerr << "benchmark error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IncomparableReportsError& e) {
    std::cerr << "cannot compare: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const ContextBudgetError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const ClassScoringError& e) {
    std::cerr << (e.backend_failure() ? "backend error: " : "scoring error: ") << e.what() << '\n';
    return e.backend_failure() ? kExitBackend : kExitParse;
  } catch (const ScoreUndefinedError& e) {
    std::cerr << "scoring error: " << e.what() << '\n';
    return kExitParse;
  } catch (const CurationError& e) {
    std::cerr << "curation error: " << e.what() << '\n';
    switch (e.code()) {
      case CurationErrc::kEmptyCaption: return kExitBackend;
      case CurationErrc::kPersistentLeakage: return kExitReview;
      default: return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fgprobe: fine-grained classification probes for vision-language models"};
  app.require_subcommand(1);
  std::string config_path;
  bool print_config = false;
  app.add_option("--config", config_path, "config file ([backend] [eval] [sandbox] [templates] sections)")
      ->check(CLI::ExistingFile);
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");
  FlagBindings flags;
  std::function<int(const CliConfig&)> action;

  ClassifyArgs cls;
  auto* classify = app.add_subcommand("classify", "classify one image, printing class_id<TAB>class_name");
  classify->add_option("image", cls.image, "image path or reference")->required();
  classify->add_option("--benchmark,-b", cls.benchmark, "benchmark JSON")->required();
  classify->add_option("--trace", cls.trace, "write the run trace as JSON");
  add_method_flags(classify, flags);
  add_backend_flags(classify, flags);
  classify->callback([&] { action = [&](const CliConfig& c) { return run_classify(c, cls); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "evaluate a method on sampled test images, or compare two reports");
  eval->add_option("--benchmark,-b", ev.benchmark, "benchmark JSON");
  eval->add_option("--images", ev.images, "image manifest JSON {class_id: [paths]}");
  flags.option(eval, "--per-class", "eval.per_class", "test images per class");
  flags.option(eval, "--workers,-j", "eval.workers", "parallel cases");
  eval->add_option("--report", ev.report, "write the report as JSON");
  eval->add_option("--traces", ev.traces, "write per-case traces as JSONL");
  eval->add_option("--compare", ev.compare, "diff two saved reports (B minus A)")->expected(2);
  eval->add_option("--ablate-m", ev.ablate_m, "run MCQA once per listed m")->delimiter(',');
  eval->add_flag("--json", ev.json_out, "print JSON instead of tables");
  add_method_flags(eval, flags);
  add_backend_flags(eval, flags);
  eval->callback([&] { action = [&](const CliConfig& c) { return run_eval_command(c, ev); }; });

  CurateArgs cur;
  auto* curate = app.add_subcommand("curate", "build a benchmark from representative images");
  curate->add_option("jobs", cur.jobs, "jobs JSON {dataset_name, classes: [{class_name, images}]}")->required();
  curate->add_option("--manifest", cur.manifest, "JSONL progress manifest; completed pairs are skipped");
  curate->add_option("--out,-o", cur.out, "benchmark JSON to write");
  add_backend_flags(curate, flags);
  curate->callback([&] { action = [&](const CliConfig& c) { return run_curate(c, cur); }; });

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a benchmark file");
  validate->add_option("benchmark", validate_path, "benchmark JSON")->required();
  validate->callback([&] { action = [&](const CliConfig&) { return run_validate(validate_path); }; });

  SandboxArgs sb;
  auto* sandbox_cmd = app.add_subcommand("sandbox", "run attention-intervention checks on the toy transformer");
  flags.option(sandbox_cmd, "--lambda", "sandbox.lambda", "intervention strength");
  flags.option(sandbox_cmd, "--k", "sandbox.k", "last early layer (3 <= k <= L-3)");
  flags.option(sandbox_cmd, "--layers", "sandbox.layers", "layer count L");
  flags.option(sandbox_cmd, "--heads", "sandbox.heads", "attention heads");
  flags.option(sandbox_cmd, "--width", "sandbox.width", "model width");
  flags.option(sandbox_cmd, "--seed", "sandbox.seed", "weight seed");
  flags.option(sandbox_cmd, "--deep-source", "sandbox.deep_source", "modified | raw");
  flags.toggle(sandbox_cmd, "--renormalize,!--no-renormalize", "sandbox.renormalize", "renormalize rows");
  sandbox_cmd->add_option("--seq-len", sb.seq_len, "input length");
  sandbox_cmd->add_option("--token-seed", sb.token_seed, "input token seed");
  sandbox_cmd->add_flag("--parallel", sb.parallel, "use the OpenMP kernels");
  sandbox_cmd->add_option("--dump-attention", sb.dump, "write the as-applied attention stack and logits as JSON");
  sandbox_cmd->callback([&] { action = [&](const CliConfig& c) { return run_sandbox(c, sb); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    CliConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_process_env();
    flags.apply(cfg);
    if (print_config) {
      std::cout << cfg.dump();
      return kExitOk;
    }
    return action(cfg);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
}
