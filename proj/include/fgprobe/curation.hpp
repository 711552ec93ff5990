#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/prompt.hpp"

namespace fgprobe {

struct CurationJob {
  std::string class_name;
  std::vector<std::string> image_refs;  // typically 10 representatives per class
  PromptTemplate describe_template = templates::describe_image();
  PromptTemplate synthesize_template = templates::synthesize_without_name();
  Variant variant = Variant::kWithoutName;
};

/// Both variants for every class, sharing image refs, with the default templates.
std::vector<CurationJob> make_job_pairs(const std::vector<std::pair<std::string, std::vector<std::string>>>& classes);

struct CaptionRecord {
  std::string image_ref;
  std::string caption;
  std::string prompt_version;
};

/// Throws CurationError(kEmptyCaption) on a blank answer.
CaptionRecord describe_image(const std::string& image_ref, const PromptTemplate& tmpl, const Backend& backend);

struct SynthesisResult {
  std::string text;
  int attempts = 0;
  bool leakage_flagged = false;  // still leaking after the single regeneration
  std::vector<std::string> warnings;
};

/// Without-name outputs are checked for the class name; a leak triggers exactly one
/// regeneration with an explicit reminder, after which a persisting leak is flagged, not fixed.
SynthesisResult synthesize_class_description(std::span<const std::string> captions, const std::string& class_name,
                                             Variant variant, const PromptTemplate& tmpl, const Backend& backend);

struct ManifestRecord {
  std::string class_name;
  Variant variant = Variant::kWithoutName;
  std::string description;
  std::vector<CaptionRecord> captions;
  std::string synthesize_template;
  std::string model;
  std::string timestamp;
  int attempts = 1;
};

nlohmann::json to_json(const ManifestRecord& r);
ManifestRecord manifest_record_from_json(const nlohmann::json& j);

/// Append-only JSONL of completed (class, variant) pairs. Each record is one flushed line.
class ProgressManifest {
 public:
  ProgressManifest() = default;  // in-memory only
  explicit ProgressManifest(std::filesystem::path path);  // loads existing records if present

  std::optional<ManifestRecord> find(const std::string& class_name, Variant v) const;
  std::optional<std::vector<CaptionRecord>> captions_for(const std::string& class_name) const;
  void append(const ManifestRecord& r);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<ManifestRecord> records_;
};

struct ReviewItem {
  std::string class_name;
  std::string text;
  std::string reason;
};

struct CurationSummary {
  int classes = 0;
  int resumed_pairs = 0;
  int generated_pairs = 0;
  int regenerations = 0;
  std::vector<ReviewItem> review_queue;
  std::vector<std::string> warnings;
};

/// Groups jobs by class (first-seen order gives class ids) and requires both variants per class.
/// Completed pairs found in `manifest` are reused without backend calls. On a persistent leak the
/// item is queued in `summary` and CurationError(kPersistentLeakage) is thrown; progress so far
/// stays in the manifest.
Benchmark build_benchmark(std::span<const CurationJob> jobs, const Backend& backend, ProgressManifest& manifest,
                          const std::string& dataset_name, CurationSummary* summary = nullptr);

}  // namespace fgprobe
