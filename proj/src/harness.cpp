#include "fgprobe/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "fgprobe/allatonce.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

using nlohmann::json;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kYesNo: return "yesno";
    case Method::kMcqa: return "mcqa";
    case Method::kAllAtOnce: return "allatonce";
  }
  return "mcqa";
}

Method parse_method(std::string_view s) {
  if (s == "yesno") return Method::kYesNo;
  if (s == "mcqa") return Method::kMcqa;
  if (s == "allatonce") return Method::kAllAtOnce;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected yesno, mcqa or allatonce)");
}

void EvalConfig::validate() const {
  if (per_class_samples < 1) throw ConfigError("per_class_samples must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (method == Method::kMcqa && m < 2) throw ConfigError("m must be at least 2 (got " + std::to_string(m) + ")");
}

json EvalConfig::to_json() const {
  json j = {{"method", to_string(method)},
            {"variant", fgprobe::to_string(variant)},
            {"seed", seed},
            {"per_class_samples", per_class_samples},
            {"mode", fgprobe::to_string(mode)},
            {"workers", workers}};
  if (method == Method::kMcqa) {
    j["m"] = m;
    j["carry"] = fgprobe::to_string(carry);
  }
  if (method == Method::kYesNo) j["normalize"] = normalize_yes;
  if (method == Method::kAllAtOnce) j["shuffle_options"] = shuffle_options;
  return j;
}

// ---------------------------------------------------------------------------

ImageManifest ImageManifest::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("image manifest must be an object keyed by class id");
  ImageManifest m;
  for (const auto& [key, images] : doc.items()) {
    int class_id;
    try {
      std::size_t used = 0;
      class_id = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError("image manifest key '" + key + "' is not a class id");
    }
    if (!images.is_array()) throw ConfigError("image manifest entry for class " + key + " must be a list");
    auto& list = m.by_class[class_id];
    for (const auto& img : images) {
      if (img.is_string()) {
        list.push_back({img.get<std::string>(), false});
      } else if (img.is_object() && img.contains("path")) {
        list.push_back({img.at("path").get<std::string>(), img.value("curation_source", false)});
      } else {
        throw ConfigError("image manifest entry for class " + key + " is neither a path nor {path, ...}");
      }
    }
  }
  return m;
}

ImageManifest ImageManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open image manifest: " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed image manifest " + path.string() + ": " + e.what());
  }
}

json ImageManifest::to_json() const {
  json doc = json::object();
  for (const auto& [id, images] : by_class) {
    json list = json::array();
    for (const auto& img : images) {
      if (img.curation_source)
        list.push_back({{"path", img.path}, {"curation_source", true}});
      else
        list.push_back(img.path);
    }
    doc[std::to_string(id)] = std::move(list);
  }
  return doc;
}

SampledCases sample_cases(const ImageManifest& manifest, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("per_class must be >= 1");
  SampledCases out;
  for (const auto& [class_id, images] : manifest.by_class) {
    std::vector<std::string> eligible;
    for (const auto& img : images)
      if (!img.curation_source) eligible.push_back(img.path);
    if (eligible.empty()) {
      out.warnings.push_back("class " + std::to_string(class_id) + " has no eligible images; skipped");
      continue;
    }
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(class_id)));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    if (static_cast<int>(eligible.size()) < per_class) {
      out.warnings.push_back("class " + std::to_string(class_id) + " has only " + std::to_string(eligible.size()) +
                             " eligible image(s); wanted " + std::to_string(per_class));
    }
    std::size_t take = std::min<std::size_t>(eligible.size(), static_cast<std::size_t>(per_class));
    for (std::size_t i = 0; i < take; ++i) out.cases.push_back({eligible[i], class_id});
  }
  return out;
}

// ---------------------------------------------------------------------------

void OrderedJsonlWriter::write(std::size_t case_index, json record) {
  std::lock_guard lock(mu_);
  pending_.emplace(case_index, std::move(record));
  for (auto it = pending_.find(next_); it != pending_.end(); it = pending_.find(next_)) {
    out_ << it->second.dump() << '\n';
    pending_.erase(it);
    ++next_;
  }
  out_.flush();
}

std::size_t OrderedJsonlWriter::written() const {
  std::lock_guard lock(mu_);
  return next_;
}

std::string case_fingerprint(std::span<const ImageCase> cases) {
  std::vector<std::string> keys;
  keys.reserve(cases.size());
  for (const auto& c : cases) keys.push_back(c.image_ref + '\x1f' + (c.true_class_id ? std::to_string(*c.true_class_id) : "?"));
  std::sort(keys.begin(), keys.end());
  std::string joined;
  for (const auto& k : keys) joined += k + '\x1e';
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(joined)));
  return std::to_string(cases.size()) + ":" + buf;
}

std::uint64_t case_seed(std::uint64_t seed, const std::string& image_ref) { return mix_seed(seed, fnv1a64(image_ref)); }

namespace {

struct CaseOutcome {
  int predicted = -1;
  bool correct = false;
  bool aborted = false;
  std::string abort_reason;
  int queries = 0;
  int parse_failures = 0;
  int nonnumeric = 0;
  bool early_stopped = false;
};

CaseOutcome run_case(const EvalConfig& cfg, const Benchmark& bench, const ImageCase& image, const Backend& backend,
                     const EvalTemplates& tmpl, json& record) {
  CaseOutcome o;
  const int truth = *image.true_class_id;
  switch (cfg.method) {
    case Method::kYesNo: {
      YesNoOptions opts;
      opts.normalize = cfg.normalize_yes;
      YesNoPrediction p = classify_yesno(image, bench, cfg.variant, tmpl.yesno, backend, opts);
      o.predicted = p.predicted_class_id;
      o.queries = p.queries_used;
      json scores = json::array();
      for (const auto& s : p.scores) scores.push_back(s.p_yes);
      record["p_yes"] = std::move(scores);
      break;
    }
    case Method::kMcqa: {
      McqaOptions opts;
      opts.m = cfg.m;
      opts.seed = case_seed(cfg.seed, image.image_ref);
      opts.mode = cfg.mode;
      opts.carry = cfg.carry;
      McqaTrace t = run_iterative(image, bench, cfg.variant, tmpl.mcqa, backend, opts);
      o.predicted = t.final_class_id;
      o.queries = t.queries_used;
      o.parse_failures = t.parse_failures;
      o.nonnumeric = t.nonnumeric_responses;
      o.early_stopped = t.early_stopped;
      record["trace"] = to_json(t);
      break;
    }
    case Method::kAllAtOnce: {
      AllAtOnceOptions opts;
      opts.shuffle_options = cfg.shuffle_options;
      opts.seed = case_seed(cfg.seed, image.image_ref);
      AllAtOncePrediction p = classify_all_at_once(image, bench, cfg.variant, tmpl.all_at_once, backend, opts);
      o.predicted = p.predicted_class_id;
      o.queries = p.queries_used;
      o.parse_failures = p.parse_status == ParseStatus::kFailed;
      o.nonnumeric = p.parse_status != ParseStatus::kStrict && p.queries_used > 0;
      record["raw_response"] = p.raw_response;
      record["parse_status"] = to_string(p.parse_status);
      record["prompt_token_estimate"] = p.prompt_token_estimate;
      break;
    }
  }
  o.correct = !o.early_stopped && o.predicted == truth;
  return o;
}

}  // namespace

EvalReport run_eval(const EvalConfig& config, const Benchmark& benchmark, std::span<const ImageCase> cases,
                    const Backend& backend, const EvalTemplates& templates, TraceSink* traces) {
  config.validate();
  if (benchmark.size() < 2) throw ConfigError("evaluation needs a benchmark with at least 2 classes");
  for (const auto& c : cases) {
    if (!c.true_class_id) throw ConfigError("case '" + c.image_ref + "' has no ground-truth class");
    if (*c.true_class_id < 0 || *c.true_class_id >= benchmark.size())
      throw ConfigError("case '" + c.image_ref + "' has out-of-range class " + std::to_string(*c.true_class_id));
  }
  if (config.method == Method::kYesNo && !backend.probe_capabilities().supports_logprobs)
    throw BackendError(BackendErrc::kCapability,
                       "backend '" + backend.name() + "' does not provide token logprobs; Yes/No scoring needs them");

  const auto start = std::chrono::steady_clock::now();
  std::vector<CaseOutcome> outcomes(cases.size());
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  const long n = static_cast<long>(cases.size());
#pragma omp parallel for schedule(dynamic) num_threads(config.workers)
  for (long i = 0; i < n; ++i) {
    const ImageCase& image = cases[static_cast<std::size_t>(i)];
    json record = {{"case_index", i},
                   {"image_ref", image.image_ref},
                   {"true_class_id", *image.true_class_id},
                   {"method", to_string(config.method)}};
    CaseOutcome& o = outcomes[static_cast<std::size_t>(i)];
    try {
      o = run_case(config, benchmark, image, backend, templates, record);
    } catch (const ConfigError&) {
      std::lock_guard lock(fatal_mu);
      if (!fatal) fatal = std::current_exception();
      continue;
    } catch (const TemplateError&) {
      std::lock_guard lock(fatal_mu);
      if (!fatal) fatal = std::current_exception();
      continue;
    } catch (const Error& e) {
      o = CaseOutcome{};
      o.aborted = true;
      o.abort_reason = e.what();
    } catch (...) {
      std::lock_guard lock(fatal_mu);
      if (!fatal) fatal = std::current_exception();
      continue;
    }
    record["predicted_class_id"] = o.predicted;
    record["correct"] = o.correct;
    record["aborted"] = o.aborted;
    if (o.aborted) record["abort_reason"] = o.abort_reason;
    record["queries"] = o.queries;
    if (traces) traces->write(static_cast<std::size_t>(i), std::move(record));
  }
  if (fatal) std::rethrow_exception(fatal);

  EvalReport r;
  r.dataset_name = benchmark.dataset_name;
  r.total_cases = static_cast<int>(cases.size());
  r.case_fingerprint = case_fingerprint(cases);
  r.config = config.to_json();
  bool first = true;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const CaseOutcome& o = outcomes[i];
    if (o.aborted) {
      ++r.aborted_cases;
      r.aborted.push_back({cases[i].image_ref, o.abort_reason});
      continue;
    }
    ++r.evaluated_cases;
    r.correct_cases += o.correct;
    ClassAccuracy& pc = r.per_class[*cases[i].true_class_id];
    ++pc.total;
    pc.correct += o.correct;
    r.parse_failures += o.parse_failures;
    r.nonnumeric_responses += o.nonnumeric;
    r.early_stops += o.early_stopped;
    r.queries.total += o.queries;
    r.queries.min = first ? o.queries : std::min(r.queries.min, o.queries);
    r.queries.max = first ? o.queries : std::max(r.queries.max, o.queries);
    first = false;
  }
  if (r.evaluated_cases > 0) {
    r.accuracy = 100.0 * r.correct_cases / r.evaluated_cases;
    r.queries.mean = static_cast<double>(r.queries.total) / r.evaluated_cases;
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::map<int, EvalReport> run_options_ablation(const EvalConfig& base, std::span<const int> m_values,
                                               const Benchmark& benchmark, std::span<const ImageCase> cases,
                                               const Backend& backend, const EvalTemplates& templates) {
  if (m_values.empty()) throw ConfigError("options ablation needs at least one m value");
  for (int m : m_values)
    if (m < 2) throw ConfigError("m must be at least 2 (got " + std::to_string(m) + ")");
  std::map<int, EvalReport> out;
  for (int m : m_values) {
    EvalConfig cfg = base;
    cfg.method = Method::kMcqa;
    cfg.m = m;
    out[m] = run_eval(cfg, benchmark, cases, backend, templates);
  }
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [id, acc] : r.per_class)
    per_class[std::to_string(id)] = {{"correct", acc.correct}, {"total", acc.total}};
  json aborted = json::array();
  for (const auto& a : r.aborted) aborted.push_back({{"image_ref", a.image_ref}, {"reason", a.reason}});
  return {{"dataset_name", r.dataset_name},
          {"accuracy", r.accuracy},
          {"total_cases", r.total_cases},
          {"evaluated_cases", r.evaluated_cases},
          {"correct_cases", r.correct_cases},
          {"aborted_cases", r.aborted_cases},
          {"per_class", std::move(per_class)},
          {"queries", {{"total", r.queries.total}, {"min", r.queries.min}, {"max", r.queries.max}, {"mean", r.queries.mean}}},
          {"parse_failures", r.parse_failures},
          {"nonnumeric_responses", r.nonnumeric_responses},
          {"early_stops", r.early_stops},
          {"aborted", std::move(aborted)},
          {"case_fingerprint", r.case_fingerprint},
          {"config", r.config},
          {"wall_time_s", r.wall_time_s}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.dataset_name = j.at("dataset_name").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.total_cases = j.value("total_cases", 0);
    r.evaluated_cases = j.value("evaluated_cases", 0);
    r.correct_cases = j.value("correct_cases", 0);
    r.aborted_cases = j.value("aborted_cases", 0);
    const json per_class = j.value("per_class", json::object());
    for (const auto& [id, acc] : per_class.items())
      r.per_class[std::stoi(id)] = {acc.at("correct").get<int>(), acc.at("total").get<int>()};
    if (auto q = j.find("queries"); q != j.end()) {
      r.queries.total = q->at("total").get<long>();
      r.queries.min = q->at("min").get<int>();
      r.queries.max = q->at("max").get<int>();
      r.queries.mean = q->at("mean").get<double>();
    }
    r.parse_failures = j.value("parse_failures", 0);
    r.nonnumeric_responses = j.value("nonnumeric_responses", 0);
    r.early_stops = j.value("early_stops", 0);
    const json aborted = j.value("aborted", json::array());
    for (const auto& a : aborted)
      r.aborted.push_back({a.at("image_ref").get<std::string>(), a.at("reason").get<std::string>()});
    r.case_fingerprint = j.value("case_fingerprint", std::string());
    r.config = j.value("config", json());
    r.wall_time_s = j.value("wall_time_s", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report: " + path.string());
  out << to_json(r).dump(2) << '\n';
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report: " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed report " + path.string() + ": " + e.what());
  }
}

long to_centi(double percent) { return std::lround(percent * 100.0); }

std::string format_signed(long centi) {
  char buf[32];
  long mag = centi < 0 ? -centi : centi;
  std::snprintf(buf, sizeof buf, "%c%ld.%02ld", centi < 0 ? '-' : '+', mag / 100, mag % 100);
  return buf;
}

std::string format_percent(double percent) {
  long c = to_centi(percent);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%ld.%02ld", c < 0 ? "-" : "", std::labs(c) / 100, std::labs(c) % 100);
  return buf;
}

std::string render_report(const EvalReport& r) {
  std::ostringstream out;
  out << "dataset      " << r.dataset_name << '\n';
  if (r.config.is_object()) out << "config       " << r.config.dump() << '\n';
  out << "accuracy     " << format_percent(r.accuracy) << "  (" << r.correct_cases << "/" << r.evaluated_cases << ")\n";
  out << "cases        " << r.total_cases << " total, " << r.aborted_cases << " aborted\n";
  out << "queries      total " << r.queries.total << ", per case min " << r.queries.min << " / mean "
      << std::fixed << std::setprecision(2) << r.queries.mean << " / max " << r.queries.max << '\n';
  out << "early stops  " << r.early_stops << '\n';
  out << "parse        " << r.parse_failures << " failure(s), " << r.nonnumeric_responses
      << " non-numeric response(s)\n";
  for (const auto& a : r.aborted) out << "ABORTED      " << a.image_ref << ": " << a.reason << '\n';
  return out.str();
}

DeltaTable diff_reports(const EvalReport& a, const EvalReport& b) {
  if (a.dataset_name != b.dataset_name)
    throw IncomparableReportsError("reports cover different datasets ('" + a.dataset_name + "' vs '" +
                                   b.dataset_name + "')");
  if (a.case_fingerprint != b.case_fingerprint)
    throw IncomparableReportsError("reports cover different case sets (" + a.case_fingerprint + " vs " +
                                   b.case_fingerprint + ")");
  DeltaTable t;
  t.rows.push_back({"overall", to_centi(a.accuracy), to_centi(b.accuracy)});
  for (const auto& [id, acc] : a.per_class) {
    auto other = b.per_class.find(id);
    if (other == b.per_class.end()) continue;
    t.rows.push_back({"class " + std::to_string(id), to_centi(acc.accuracy()), to_centi(other->second.accuracy())});
  }
  return t;
}

std::string DeltaTable::render() const {
  std::ostringstream out;
  auto pct = [](long c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%ld.%02ld", c / 100, c % 100);
    return std::string(buf);
  };
  out << std::left << std::setw(12) << "" << std::right << std::setw(9) << "A" << std::setw(9) << "B"
      << std::setw(9) << "Delta" << '\n';
  for (const auto& r : rows)
    out << std::left << std::setw(12) << r.label << std::right << std::setw(9) << pct(r.a_centi) << std::setw(9)
        << pct(r.b_centi) << std::setw(9) << format_signed(r.delta_centi()) << '\n';
  return out.str();
}

json DeltaTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"label", r.label},
                         {"a", r.a_centi / 100.0},
                         {"b", r.b_centi / 100.0},
                         {"delta", format_signed(r.delta_centi())}});
  return rows_json;
}

}  // namespace fgprobe
