#include "fgprobe/prompt.hpp"

#include <algorithm>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Calls on_text(literal) / on_placeholder(name) in order.
template <typename OnText, typename OnPlaceholder>
void scan(std::string_view body, OnText on_text, OnPlaceholder on_placeholder) {
  std::size_t pos = 0;
  std::size_t literal_start = 0;
  while (pos < body.size()) {
    if (body[pos] == '{') {
      std::size_t end = pos + 1;
      while (end < body.size() && is_name_char(body[end])) ++end;
      if (end < body.size() && body[end] == '}' && end > pos + 1) {
        on_text(body.substr(literal_start, pos - literal_start));
        on_placeholder(body.substr(pos + 1, end - pos - 1));
        pos = end + 1;
        literal_start = pos;
        continue;
      }
    }
    ++pos;
  }
  on_text(body.substr(literal_start));
}

}  // namespace

PromptTemplate::PromptTemplate(std::string id, std::string body) : id_(std::move(id)), body_(std::move(body)) {}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  scan(body_, [](std::string_view) {}, [&](std::string_view n) {
    if (std::find(names.begin(), names.end(), n) == names.end()) names.emplace_back(n);
  });
  return names;
}

bool PromptTemplate::has_placeholder(std::string_view name) const {
  for (const auto& n : placeholders())
    if (n == name) return true;
  return false;
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
  std::string out;
  out.reserve(body_.size());
  scan(
      body_, [&](std::string_view text) { out.append(text); },
      [&](std::string_view name) {
        auto it = values.find(name);
        if (it == values.end())
          throw TemplateError("template '" + id_ + "' has unresolved placeholder {" + std::string(name) + "}");
        out.append(it->second);
      });
  return out;
}

std::pair<std::string, std::string> PromptTemplate::split_at(std::string_view name) const {
  std::string before, after;
  int hits = 0;
  scan(
      body_, [&](std::string_view text) { (hits == 0 ? before : after).append(text); },
      [&](std::string_view n) {
        if (n != name) throw TemplateError("template '" + id_ + "' has extra placeholder {" + std::string(n) + "}");
        ++hits;
      });
  if (hits != 1) throw TemplateError("template '" + id_ + "' must contain {" + std::string(name) + "} exactly once");
  return {before, after};
}

PromptTemplate load_template(const std::string& path, std::string id) {
  try {
    return PromptTemplate(std::move(id), read_text_file(path));
  } catch (const Error& e) {
    throw TemplateError(e.what());
  }
}

std::string render_option_list(const std::vector<std::string>& option_texts) {
  std::string out;
  for (std::size_t i = 0; i < option_texts.size(); ++i) {
    if (i > 0) out += '\n';
    out += std::to_string(i + 1);
    out += ". ";
    out += option_texts[i];
  }
  return out;
}

namespace templates {

const PromptTemplate& mcqa() {
  static const PromptTemplate t(
      "mcqa.v1",
      "Please look at this image and choose the most accurate description of the image from the following "
      "options.\n"
      "\n"
      "Your answer should ONLY contain the number (index) of the correct option.\n"
      "\n"
      "{options}\n"
      "\n"
      "Answer:");
  return t;
}

const PromptTemplate& all_at_once() {
  static const PromptTemplate t(
      "allatonce.v1",
      "Please look at this image and choose the most accurate description of the image from all of the "
      "following options.\n"
      "\n"
      "Your answer should ONLY contain the number (index) of the correct option.\n"
      "\n"
      "{options}\n"
      "\n"
      "Answer:");
  return t;
}

const PromptTemplate& yesno() {
  static const PromptTemplate t(
      "yesno.v1",
      "Does this description accurately describe the image? Answer Yes or No.\n"
      "Description: {description}");
  return t;
}

const PromptTemplate& describe_image() {
  static const PromptTemplate t(
      "describe.v1",
      "Briefly describe the visual characteristics of the main object in this image in sentence format. The "
      "description should highlight distinguishing features that help differentiate it from similar objects in "
      "its category. List the attributes of its key body parts (e.g., texture, shape, color, patterns, and "
      "distinctive markings). Focus on fine-grained details that enhance identification.");
  return t;
}

const PromptTemplate& synthesize_without_name() {
  static const PromptTemplate t(
      "synthesize.v1",
      "The following are captions describing {image_count} images of a single class. Your task is to generate a "
      "concise class description by identifying the shared visual features and characteristics across the "
      "captions. Provide a single meaningful sentence, within 60 words. Do not include the class name or "
      "unrelated details. Your response should start with 'The/This...'.\n"
      "\n"
      "{image_descriptions}");
  return t;
}

const PromptTemplate& synthesize_with_name() {
  static const PromptTemplate t(
      "synthesize-named.v1",
      "The following are captions describing {image_count} images of a single class. Your task is to generate a "
      "concise class description by identifying the shared visual features and characteristics across the "
      "captions. Provide a single meaningful sentence, within 60 words. Name the class as \"{class_name}\" in the "
      "description and do not include unrelated details. Your response should start with 'The/This...'.\n"
      "\n"
      "{image_descriptions}");
  return t;
}

const std::vector<const PromptTemplate*>& builtin() {
  static const std::vector<const PromptTemplate*> all = {&mcqa(),           &all_at_once(),
                                                         &yesno(),          &describe_image(),
                                                         &synthesize_without_name(), &synthesize_with_name()};
  return all;
}

const PromptTemplate& by_id(std::string_view id) {
  for (const auto* t : builtin())
    if (t->id() == id) return *t;
  throw TemplateError("unknown template id '" + std::string(id) + "'");
}

}  // namespace templates

}  // namespace fgprobe
