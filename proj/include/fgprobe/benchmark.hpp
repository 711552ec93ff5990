#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fgprobe {

enum class Variant { kWithName, kWithoutName };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);  // "with_name" | "without_name"

struct ClassEntry {
  int class_id = 0;
  std::string class_name;
  std::string description_with_name;
  std::string description_without_name;

  const std::string& description(Variant v) const {
    return v == Variant::kWithName ? description_with_name : description_without_name;
  }
};

/// A named set of classes. class_id equals the entry's position in `classes`.
struct Benchmark {
  std::string dataset_name;
  std::vector<ClassEntry> classes;
  std::string source_note;

  int size() const { return static_cast<int>(classes.size()); }
  const ClassEntry& at(int class_id) const { return classes.at(static_cast<std::size_t>(class_id)); }
};

struct ImageCase {
  std::string image_ref;  // filesystem path or opaque identifier handed to the backend
  std::optional<int> true_class_id;
};

/// Parses and checks structural invariants (unique contiguous ids, non-empty descriptions).
/// Throws BenchmarkError with a code naming the violated rule.
Benchmark benchmark_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Benchmark& b);

Benchmark load_benchmark(const std::filesystem::path& path);
void save_benchmark(const Benchmark& b, const std::filesystem::path& path);

inline constexpr int kDescriptionWordLimit = 60;

enum class IssueSeverity { kWarning, kViolation };
enum class IssueKind { kNameLeakage, kEmptyField, kLength, kTooFewClasses };

struct ValidationIssue {
  IssueSeverity severity;
  IssueKind kind;
  int class_id;  // -1 for benchmark-level issues
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  std::size_t count(IssueSeverity s) const;
  std::size_t count(IssueKind k) const;
  bool ok() const { return count(IssueSeverity::kViolation) == 0; }
  std::string render() const;
};

// Case-insensitive whole-substring match.
bool leaks_class_name(std::string_view text, std::string_view class_name);

ValidationReport validate_benchmark(const Benchmark& b);

}  // namespace fgprobe
