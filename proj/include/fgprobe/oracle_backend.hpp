#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgprobe/backend.hpp"
#include "fgprobe/benchmark.hpp"
#include "fgprobe/prompt.hpp"

namespace fgprobe {

/// Hidden per-(image, class) scores.
class ScoreTable {
 public:
  void set(const std::string& image, std::vector<double> scores) { rows_[image] = std::move(scores); }
  const std::vector<double>& row(const std::string& image) const;
  bool contains(const std::string& image) const { return rows_.count(image) != 0; }
  std::size_t size() const { return rows_.size(); }

  /// (score, -class_id) maximum among `class_ids`: highest score, ties to the lowest id.
  int best_of(const std::string& image, std::span<const int> class_ids) const;
  int best(const std::string& image) const;

  static ScoreTable from_json(const nlohmann::json& doc);  // {"scores": {image: [s0, s1, ...]}}
  nlohmann::json to_json() const;
  static ScoreTable load(const std::string& path);

 private:
  std::map<std::string, std::vector<double>> rows_;
};

/// A perfect comparator. Reads the prompt back into class ids and answers from the score table:
/// Yes/No prompts get log-probabilities through the sigmoid link, option-list prompts get the
/// 1-based position of the subset maximum.
class OracleBackend : public Backend {
 public:
  OracleBackend(const Benchmark& benchmark, ScoreTable table, PromptTemplate yesno_template = templates::yesno());

  BackendResponse complete(const BackendRequest& req) const override;
  Capabilities probe_capabilities() const override { return {true, std::nullopt}; }
  std::string name() const override { return "oracle"; }

  const ScoreTable& table() const { return table_; }

  static double yes_probability(double score);  // sigmoid
  static double log_yes_probability(double score);

  /// Class ids of the numbered options in `prompt`, in presented order; empty if none found.
  std::vector<int> parse_options(std::string_view prompt) const;

 private:
  std::optional<int> parse_yesno(std::string_view prompt) const;
  int lookup(std::string_view description) const;

  ScoreTable table_;
  std::unordered_map<std::string, int> description_to_class_;
  std::string yes_prefix_;
  std::string yes_suffix_;
};

}  // namespace fgprobe
