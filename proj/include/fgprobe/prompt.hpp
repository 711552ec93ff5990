#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fgprobe {

/// Text with `{name}` placeholders (name = [a-z_]+). Other braces are literal.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string id, std::string body);

  const std::string& id() const { return id_; }
  const std::string& body() const { return body_; }
  std::vector<std::string> placeholders() const;  // distinct, in first-seen order
  bool has_placeholder(std::string_view name) const;

  /// Substitutes every placeholder. Values are inserted verbatim and never re-scanned.
  /// Throws TemplateError if a placeholder has no value.
  std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

  /// Text before and after a single placeholder; throws if it does not appear exactly once.
  std::pair<std::string, std::string> split_at(std::string_view name) const;

 private:
  std::string id_;
  std::string body_;
};

PromptTemplate load_template(const std::string& path, std::string id);

/// "1. first\n2. second" -- option text is kept verbatim, newlines included.
std::string render_option_list(const std::vector<std::string>& option_texts);

namespace templates {

// Iterative multiple choice; placeholder {options}.
const PromptTemplate& mcqa();
// Single prompt with every class; placeholder {options}. Authored default wording.
const PromptTemplate& all_at_once();
// Binary query; placeholder {description}. Authored default wording.
const PromptTemplate& yesno();
// Per-image caption request; no placeholders.
const PromptTemplate& describe_image();
// Caption synthesis; placeholders {image_count} {image_descriptions}.
const PromptTemplate& synthesize_without_name();
// Caption synthesis naming the class; adds {class_name}. Authored default wording.
const PromptTemplate& synthesize_with_name();

const std::vector<const PromptTemplate*>& builtin();
const PromptTemplate& by_id(std::string_view id);

}  // namespace templates

}  // namespace fgprobe
