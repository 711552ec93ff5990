#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/prompt.hpp"
#include "fgprobe/yesno.hpp"

namespace fgprobe {

enum class Method { kYesNo, kMcqa, kAllAtOnce };
std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct EvalConfig {
  Method method = Method::kMcqa;
  Variant variant = Variant::kWithName;
  int m = 5;  // mcqa only
  std::uint64_t seed = 0;
  int per_class_samples = 5;
  RunMode mode = RunMode::kPredict;
  CarryPosition carry = CarryPosition::kFirst;
  bool normalize_yes = false;
  bool shuffle_options = false;  // all-at-once only
  int workers = 1;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
};

struct EvalTemplates {
  PromptTemplate mcqa = templates::mcqa();
  PromptTemplate yesno = templates::yesno();
  PromptTemplate all_at_once = templates::all_at_once();
};

// ---------------------------------------------------------------------------
// Case sampling

struct ManifestImage {
  std::string path;
  bool curation_source = false;  // used to write descriptions; never sampled for testing
};

/// class_id -> candidate test images.
struct ImageManifest {
  std::map<int, std::vector<ManifestImage>> by_class;

  /// {"<class_id>": ["path", {"path": "...", "curation_source": true}, ...], ...}
  static ImageManifest from_json(const nlohmann::json& doc);
  static ImageManifest load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct SampledCases {
  std::vector<ImageCase> cases;
  std::vector<std::string> warnings;
};

/// Seeded per-class selection of up to `per_class` non-curation images, ordered by class id.
SampledCases sample_cases(const ImageManifest& manifest, int per_class, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Running

/// Receives one JSON record per case. Implementations must be thread-safe.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void write(std::size_t case_index, nlohmann::json record) = 0;
};

/// JSONL writer that emits records in case-index order no matter when workers finish.
class OrderedJsonlWriter : public TraceSink {
 public:
  explicit OrderedJsonlWriter(std::ostream& out) : out_(out) {}
  void write(std::size_t case_index, nlohmann::json record) override;
  std::size_t written() const;

 private:
  std::ostream& out_;
  mutable std::mutex mu_;
  std::map<std::size_t, nlohmann::json> pending_;
  std::size_t next_ = 0;
};

struct ClassAccuracy {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total ? 100.0 * correct / total : 0.0; }
  bool operator==(const ClassAccuracy&) const = default;
};

struct QueryStats {
  long total = 0;
  int min = 0;
  int max = 0;
  double mean = 0.0;
  bool operator==(const QueryStats&) const = default;
};

struct AbortedCase {
  std::string image_ref;
  std::string reason;
  bool operator==(const AbortedCase&) const = default;
};

struct EvalReport {
  std::string dataset_name;
  double accuracy = 0.0;  // percent over non-aborted cases
  int total_cases = 0;
  int evaluated_cases = 0;
  int correct_cases = 0;
  int aborted_cases = 0;
  std::map<int, ClassAccuracy> per_class;
  QueryStats queries;  // over non-aborted cases
  int parse_failures = 0;
  int nonnumeric_responses = 0;
  int early_stops = 0;
  std::vector<AbortedCase> aborted;
  std::string case_fingerprint;
  nlohmann::json config;
  double wall_time_s = 0.0;

  bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
void save_report(const EvalReport& r, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

/// Accuracy table for humans, two decimals.
std::string render_report(const EvalReport& r);

/// Order-independent identity of a case list (image refs and truths).
std::string case_fingerprint(std::span<const ImageCase> cases);

/// Per-case MCQA/all-at-once seed: depends on the image, not on its position in the list.
std::uint64_t case_seed(std::uint64_t seed, const std::string& image_ref);

/// Runs `config.method` on every case with up to `config.workers` threads. Backend failures
/// abort single cases (reported, excluded from accuracy); configuration errors abort the run.
EvalReport run_eval(const EvalConfig& config, const Benchmark& benchmark, std::span<const ImageCase> cases,
                    const Backend& backend, const EvalTemplates& templates = {}, TraceSink* traces = nullptr);

/// One run per m, keyed by m.
std::map<int, EvalReport> run_options_ablation(const EvalConfig& base, std::span<const int> m_values,
                                               const Benchmark& benchmark, std::span<const ImageCase> cases,
                                               const Backend& backend, const EvalTemplates& templates = {});

// ---------------------------------------------------------------------------
// Comparison

struct DeltaRow {
  std::string label;
  long a_centi = 0;  // accuracy in hundredths of a percentage point
  long b_centi = 0;
  long delta_centi() const { return b_centi - a_centi; }
};

struct DeltaTable {
  std::vector<DeltaRow> rows;  // "overall" first, then per class
  const DeltaRow& overall() const { return rows.front(); }
  std::string render() const;
  nlohmann::json to_json() const;
};

long to_centi(double percent);
/// "+4.90", "-3.96", "+0.00".
std::string format_signed(long centi);
std::string format_percent(double percent);

/// b - a per row. Throws IncomparableReportsError unless both cover the same dataset and cases.
DeltaTable diff_reports(const EvalReport& a, const EvalReport& b);

}  // namespace fgprobe
