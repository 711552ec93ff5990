#include "fgprobe/benchmark.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

using nlohmann::json;

std::string_view to_string(Variant v) {
  return v == Variant::kWithName ? "with_name" : "without_name";
}

Variant parse_variant(std::string_view s) {
  if (s == "with_name") return Variant::kWithName;
  if (s == "without_name") return Variant::kWithoutName;
  throw ConfigError("unknown description variant '" + std::string(s) +
                    "' (expected with_name or without_name)");
}

namespace {

std::string required_string(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw BenchmarkError(BenchmarkErrc::kMalformed,
                         "classes[" + std::to_string(index) + "]." + key + " must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

Benchmark benchmark_from_json(const json& doc) {
  if (!doc.is_object()) throw BenchmarkError(BenchmarkErrc::kMalformed, "document is not an object");
  auto name = doc.find("dataset_name");
  auto classes = doc.find("classes");
  if (name == doc.end() || !name->is_string())
    throw BenchmarkError(BenchmarkErrc::kMalformed, "dataset_name must be a string");
  if (classes == doc.end() || !classes->is_array())
    throw BenchmarkError(BenchmarkErrc::kMalformed, "classes must be an array");

  Benchmark b;
  b.dataset_name = name->get<std::string>();
  if (auto note = doc.find("source_note"); note != doc.end() && note->is_string())
    b.source_note = note->get<std::string>();

  std::set<int> seen;
  for (std::size_t i = 0; i < classes->size(); ++i) {
    const json& c = (*classes)[i];
    if (!c.is_object())
      throw BenchmarkError(BenchmarkErrc::kMalformed, "classes[" + std::to_string(i) + "] is not an object");
    auto id = c.find("class_id");
    if (id == c.end() || !id->is_number_integer())
      throw BenchmarkError(BenchmarkErrc::kMalformed,
                           "classes[" + std::to_string(i) + "].class_id must be an integer");
    ClassEntry e;
    e.class_id = id->get<int>();
    e.class_name = required_string(c, "class_name", i);
    e.description_with_name = required_string(c, "description_with_name", i);
    e.description_without_name = required_string(c, "description_without_name", i);

    if (!seen.insert(e.class_id).second)
      throw BenchmarkError(BenchmarkErrc::kDuplicateClassId,
                           "class_id " + std::to_string(e.class_id) + " appears more than once");
    if (e.class_id != static_cast<int>(i))
      throw BenchmarkError(BenchmarkErrc::kNonContiguousClassId,
                           "classes[" + std::to_string(i) + "] has class_id " + std::to_string(e.class_id) +
                               "; ids must run 0..N-1 in file order");
    if (trim(e.class_name).empty())
      throw BenchmarkError(BenchmarkErrc::kMalformed, "class " + std::to_string(i) + " has an empty class_name");
    if (trim(e.description_with_name).empty() || trim(e.description_without_name).empty())
      throw BenchmarkError(BenchmarkErrc::kEmptyDescription,
                           "class " + std::to_string(i) + " (" + e.class_name + ") has an empty description");
    b.classes.push_back(std::move(e));
  }
  return b;
}

json to_json(const Benchmark& b) {
  json classes = json::array();
  for (const auto& c : b.classes) {
    classes.push_back({{"class_id", c.class_id},
                       {"class_name", c.class_name},
                       {"description_with_name", c.description_with_name},
                       {"description_without_name", c.description_without_name}});
  }
  json doc = {{"dataset_name", b.dataset_name}, {"classes", std::move(classes)}};
  if (!b.source_note.empty()) doc["source_note"] = b.source_note;
  return doc;
}

Benchmark load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BenchmarkError(BenchmarkErrc::kMissingFile, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw BenchmarkError(BenchmarkErrc::kMalformed, path.string() + ": " + e.what());
  }
  return benchmark_from_json(doc);
}

void save_benchmark(const Benchmark& b, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write benchmark: " + path.string());
  out << to_json(b).dump(2) << '\n';
}

std::size_t ValidationReport::count(IssueSeverity s) const {
  std::size_t n = 0;
  for (const auto& i : issues) n += i.severity == s;
  return n;
}

std::size_t ValidationReport::count(IssueKind k) const {
  std::size_t n = 0;
  for (const auto& i : issues) n += i.kind == k;
  return n;
}

std::string ValidationReport::render() const {
  std::ostringstream out;
  for (const auto& i : issues) {
    out << (i.severity == IssueSeverity::kViolation ? "VIOLATION" : "warning") << "  ";
    if (i.class_id >= 0) out << "class " << i.class_id << ": ";
    out << i.message << '\n';
  }
  out << count(IssueSeverity::kViolation) << " violation(s), " << count(IssueSeverity::kWarning)
      << " warning(s)\n";
  return out.str();
}

bool leaks_class_name(std::string_view text, std::string_view class_name) {
  return icontains(text, trim(class_name));
}

ValidationReport validate_benchmark(const Benchmark& b) {
  ValidationReport r;
  if (b.size() < 2) {
    r.issues.push_back({IssueSeverity::kWarning, IssueKind::kTooFewClasses, -1,
                        "benchmark has " + std::to_string(b.size()) + " class(es); classification needs at least 2"});
  }
  for (const auto& c : b.classes) {
    if (trim(c.class_name).empty())
      r.issues.push_back({IssueSeverity::kViolation, IssueKind::kEmptyField, c.class_id, "empty class_name"});
    for (Variant v : {Variant::kWithName, Variant::kWithoutName}) {
      const std::string& d = c.description(v);
      std::string label = std::string(to_string(v)) + " description";
      if (trim(d).empty()) {
        r.issues.push_back({IssueSeverity::kViolation, IssueKind::kEmptyField, c.class_id, "empty " + label});
        continue;
      }
      int words = word_count(d);
      if (words > kDescriptionWordLimit) {
        r.issues.push_back({IssueSeverity::kWarning, IssueKind::kLength, c.class_id,
                            label + " has " + std::to_string(words) + " words (limit " +
                                std::to_string(kDescriptionWordLimit) + ")"});
      }
    }
    if (!trim(c.class_name).empty() && leaks_class_name(c.description_without_name, c.class_name)) {
      r.issues.push_back({IssueSeverity::kViolation, IssueKind::kNameLeakage, c.class_id,
                          "without_name description contains the class name '" + c.class_name + "'"});
    }
  }
  return r;
}

}  // namespace fgprobe
