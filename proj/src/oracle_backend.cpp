#include "fgprobe/oracle_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fgprobe/errors.hpp"

namespace fgprobe {

using nlohmann::json;

const std::vector<double>& ScoreTable::row(const std::string& image) const {
  auto it = rows_.find(image);
  if (it == rows_.end()) throw BackendError(BackendErrc::kInvalidRequest, "oracle has no scores for image '" + image + "'");
  return it->second;
}

int ScoreTable::best_of(const std::string& image, std::span<const int> class_ids) const {
  const auto& scores = row(image);
  int best = -1;
  for (int id : class_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= scores.size())
      throw BackendError(BackendErrc::kInvalidRequest, "class id " + std::to_string(id) + " outside score row");
    if (best < 0 || scores[id] > scores[best] || (scores[id] == scores[best] && id < best)) best = id;
  }
  return best;
}

int ScoreTable::best(const std::string& image) const {
  std::vector<int> ids(row(image).size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return best_of(image, ids);
}

ScoreTable ScoreTable::from_json(const json& doc) {
  ScoreTable t;
  try {
    for (const auto& [image, scores] : doc.at("scores").items()) t.set(image, scores.get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed score table: ") + e.what());
  }
  return t;
}

json ScoreTable::to_json() const {
  json scores = json::object();
  for (const auto& [image, row] : rows_) scores[image] = row;
  return {{"scores", scores}};
}

ScoreTable ScoreTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open score table: " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed score table " + path + ": " + e.what());
  }
}

OracleBackend::OracleBackend(const Benchmark& benchmark, ScoreTable table, PromptTemplate yesno_template)
    : table_(std::move(table)) {
  for (const auto& c : benchmark.classes) {
    description_to_class_.emplace(c.description_with_name, c.class_id);
    description_to_class_.emplace(c.description_without_name, c.class_id);
  }
  std::tie(yes_prefix_, yes_suffix_) = yesno_template.split_at("description");
}

double OracleBackend::yes_probability(double score) { return 1.0 / (1.0 + std::exp(-score)); }

double OracleBackend::log_yes_probability(double score) {
  return score >= 0 ? -std::log1p(std::exp(-score)) : score - std::log1p(std::exp(score));
}

int OracleBackend::lookup(std::string_view description) const {
  auto it = description_to_class_.find(std::string(description));
  return it == description_to_class_.end() ? -1 : it->second;
}

std::optional<int> OracleBackend::parse_yesno(std::string_view prompt) const {
  if (prompt.size() < yes_prefix_.size() + yes_suffix_.size()) return std::nullopt;
  if (!prompt.starts_with(yes_prefix_) || !prompt.ends_with(yes_suffix_)) return std::nullopt;
  std::string_view middle = prompt.substr(yes_prefix_.size(), prompt.size() - yes_prefix_.size() - yes_suffix_.size());
  int id = lookup(middle);
  if (id < 0) return std::nullopt;
  return id;
}

std::vector<int> OracleBackend::parse_options(std::string_view prompt) const {
  std::vector<int> ids;
  std::size_t pos;
  if (prompt.starts_with("1. ")) {
    pos = 3;
  } else {
    std::size_t at = prompt.find("\n1. ");
    if (at == std::string_view::npos) return ids;
    pos = at + 4;
  }
  for (int k = 1;; ++k) {
    // Option text runs to some newline (descriptions may span lines) or to the end.
    std::string next_marker = "\n" + std::to_string(k + 1) + ". ";
    int found = -1;
    std::size_t end = pos;
    bool more = false;
    for (std::size_t e = prompt.find('\n', pos);; e = prompt.find('\n', e + 1)) {
      std::size_t cut = e == std::string_view::npos ? prompt.size() : e;
      int id = lookup(prompt.substr(pos, cut - pos));
      if (id >= 0) {
        bool followed = prompt.substr(cut).starts_with(next_marker);
        if (found < 0 || followed) {
          found = id;
          end = cut;
          more = followed;
        }
        if (followed) break;
      }
      if (e == std::string_view::npos) break;
    }
    if (found < 0) return ids;
    ids.push_back(found);
    if (!more) return ids;
    pos = end + next_marker.size();
  }
}

BackendResponse OracleBackend::complete(const BackendRequest& req) const {
  req.validate();
  const auto& scores = table_.row(req.image);
  BackendResponse resp;
  resp.raw_metadata = {{"backend", "oracle"}};

  if (auto cls = parse_yesno(req.prompt)) {
    double s = scores.at(static_cast<std::size_t>(*cls));
    resp.text = s >= 0 ? "Yes" : "No";
    if (req.want_logprobs)
      resp.first_position_logprobs = std::vector<TokenLogprob>{{"Yes", log_yes_probability(s)},
                                                                {"No", log_yes_probability(-s)}};
    resp.raw_metadata["kind"] = "yesno";
    resp.raw_metadata["class_id"] = *cls;
    return resp;
  }

  std::vector<int> options = parse_options(req.prompt);
  if (options.empty()) throw BackendError(BackendErrc::kRefusal, "oracle cannot interpret prompt");
  int winner = table_.best_of(req.image, options);
  auto pos = std::find(options.begin(), options.end(), winner) - options.begin();
  resp.text = std::to_string(pos + 1);
  if (req.want_logprobs) {
    double mx = -INFINITY;
    for (int id : options) mx = std::max(mx, scores[id]);
    double z = 0;
    for (int id : options) z += std::exp(scores[id] - mx);
    std::vector<TokenLogprob> lps;
    for (std::size_t i = 0; i < options.size(); ++i)
      lps.push_back({std::to_string(i + 1), scores[options[i]] - mx - std::log(z)});
    resp.first_position_logprobs = std::move(lps);
  }
  resp.raw_metadata["kind"] = "options";
  resp.raw_metadata["options"] = options;
  return resp;
}

}  // namespace fgprobe
