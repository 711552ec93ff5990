#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fgprobe/benchmark.hpp"
#include "fgprobe/errors.hpp"
#include "fgprobe/mcqa.hpp"
#include "fgprobe/prompt.hpp"

using namespace fgprobe;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("MCQA prompt matches the golden file byte for byte") {
  Benchmark b = load_benchmark(FGPROBE_FIXTURES "/birds5.json");
  std::vector<std::string> texts;
  for (const auto& c : b.classes) texts.push_back(c.description_without_name);
  CHECK(render_mcqa_prompt(texts, templates::mcqa()) == slurp(FGPROBE_GOLDEN "/mcqa_prompt_5.txt"));
}

TEST_CASE("option list numbering starts at one") {
  CHECK(render_option_list({"red", "green", "blue"}) == "1. red\n2. green\n3. blue");
  CHECK(render_option_list({"only"}) == "1. only");
}

TEST_CASE("render substitutes once and never re-scans values") {
  PromptTemplate t("t", "A {x} and {y}; again {x}.");
  CHECK(t.placeholders() == std::vector<std::string>{"x", "y"});
  CHECK(t.render({{"x", "{y}"}, {"y", "2"}}) == "A {y} and 2; again {y}.");
}

TEST_CASE("unresolved placeholders are an error") {
  PromptTemplate t("t", "Describe {description} now");
  CHECK_THROWS_AS(t.render({}), TemplateError);
  CHECK_NOTHROW(t.render({{"description", "x"}, {"unused", "y"}}));
}

TEST_CASE("split_at divides around a single placeholder") {
  auto [pre, post] = templates::yesno().split_at("description");
  CHECK(pre == "Does this description accurately describe the image? Answer Yes or No.\nDescription: ");
  CHECK(post.empty());
  CHECK_THROWS_AS(PromptTemplate("t", "{a} {a}").split_at("a"), TemplateError);
  CHECK_THROWS_AS(PromptTemplate("t", "none").split_at("a"), TemplateError);
}

TEST_CASE("builtin templates carry versioned ids and expected placeholders") {
  CHECK(templates::mcqa().id() == "mcqa.v1");
  CHECK(templates::mcqa().has_placeholder("options"));
  CHECK(templates::all_at_once().has_placeholder("options"));
  CHECK(templates::yesno().has_placeholder("description"));
  CHECK(templates::describe_image().placeholders().empty());
  CHECK(templates::synthesize_without_name().has_placeholder("image_descriptions"));
  CHECK_FALSE(templates::synthesize_without_name().has_placeholder("class_name"));
  CHECK(templates::synthesize_with_name().has_placeholder("class_name"));
  CHECK(&templates::by_id("yesno.v1") == &templates::yesno());
  CHECK_THROWS_AS(templates::by_id("nope"), TemplateError);
}

TEST_CASE("load_template reads a file and reports a missing one") {
  auto path = std::filesystem::temp_directory_path() / "fgprobe_tmpl.txt";
  {
    std::ofstream out(path);
    out << "Pick one:\n{options}\n";
  }
  PromptTemplate t = load_template(path.string(), "custom");
  CHECK(t.id() == "custom");
  CHECK(t.render({{"options", "1. a"}}) == "Pick one:\n1. a\n");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_template("/nonexistent/t.txt", "x"), TemplateError);
}
