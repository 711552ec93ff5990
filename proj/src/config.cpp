#include "fgprobe/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

std::string_view to_string(ConfigSource s) {
  switch (s) {
    case ConfigSource::kDefault: return "default";
    case ConfigSource::kFile: return "file";
    case ConfigSource::kEnv: return "env";
    case ConfigSource::kFlag: return "flag";
  }
  return "default";
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"backend.kind", "oracle", "oracle | scripted | http"},
      {"backend.oracle_table", "", "score table JSON for the oracle backend"},
      {"backend.script", "", "script JSON for the scripted backend"},
      {"backend.base_url", "http://127.0.0.1:8000/v1", "chat-completions base URL"},
      {"backend.model", "", "remote model name"},
      {"backend.api_key", "", "bearer token (prefer FGPROBE_API_KEY)"},
      {"backend.timeout_s", "120", "per-request timeout in seconds"},
      {"backend.max_in_flight", "4", "concurrent requests to the live backend"},
      {"backend.max_retries", "3", "retries on transport failures"},
      {"backend.top_logprobs", "20", "top-logprobs requested per position"},
      {"backend.max_context_tokens", "", "known context window, enables pre-flight checks"},
      {"eval.method", "mcqa", "yesno | mcqa | allatonce"},
      {"eval.variant", "with_name", "with_name | without_name"},
      {"eval.m", "5", "options per MCQA round"},
      {"eval.seed", "0", "master seed"},
      {"eval.per_class", "5", "test images sampled per class"},
      {"eval.mode", "predict", "predict | evaluate"},
      {"eval.carry", "first", "position of the carried winner: first | random"},
      {"eval.normalize", "false", "normalize P(Yes) by the Yes+No mass"},
      {"eval.shuffle_options", "false", "shuffle the all-at-once option list"},
      {"eval.workers", "1", "parallel cases"},
      {"sandbox.layers", "8", "transformer layers L"},
      {"sandbox.heads", "2", "attention heads"},
      {"sandbox.width", "64", "model width"},
      {"sandbox.max_seq", "64", "maximum sequence length"},
      {"sandbox.vocab", "128", "vocabulary size"},
      {"sandbox.k", "4", "last early layer"},
      {"sandbox.lambda", "1", "intervention strength"},
      {"sandbox.renormalize", "true", "renormalize rows after each update"},
      {"sandbox.deep_source", "modified", "deep mean taken from modified | raw weights"},
      {"sandbox.seed", "0", "weight seed"},
      {"templates.mcqa", "", "MCQA prompt template file"},
      {"templates.yesno", "", "Yes/No prompt template file"},
      {"templates.allatonce", "", "all-at-once prompt template file"},
  };
  return keys;
}

CliConfig::CliConfig() {
  for (const auto& k : config_keys()) values_[k.name] = {k.default_value, ConfigSource::kDefault};
}

void CliConfig::set(const std::string& key, const std::string& value, ConfigSource source) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  if (static_cast<int>(source) >= static_cast<int>(it->second.source)) it->second = {value, source};
}

void CliConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  load_string(buf.str(), path.string());
}

void CliConfig::load_string(const std::string& text, const std::string& origin) {
  // The INI reader only knows ';' comments.
  std::istringstream lines(text);
  std::ostringstream filtered;
  for (std::string line; std::getline(lines, line);) {
    std::string_view t = trim(line);
    if (!t.empty() && t.front() == '#') continue;
    filtered << line << '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(filtered.str());
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed config " + origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config " + origin + ": key '" + section + "' outside any section");
    for (const auto& [key, node] : body) {
      std::string value(trim(node.data()));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      const std::string full = section + "." + key;
      if (!values_.count(full)) throw ConfigError("config " + origin + ": unknown key '" + full + "'");
      set(full, value, ConfigSource::kFile);
    }
  }
}

void CliConfig::apply_env(const EnvLookup& lookup) {
  static const std::pair<const char*, const char*> vars[] = {
      {"FGPROBE_API_KEY", "backend.api_key"},
      {"FGPROBE_BASE_URL", "backend.base_url"},
      {"FGPROBE_MODEL", "backend.model"},
  };
  for (const auto& [var, key] : vars)
    if (auto v = lookup(var); v && !v->empty()) set(key, *v, ConfigSource::kEnv);
}

void CliConfig::apply_process_env() {
  apply_env([](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

const CliConfig::Entry& CliConfig::entry(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

const std::string& CliConfig::get(const std::string& key) const { return entry(key).value; }

ConfigSource CliConfig::source_of(const std::string& key) const { return entry(key).source; }

std::optional<std::string> CliConfig::get_optional(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) return std::nullopt;
  return v;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expected);
}

}  // namespace

int CliConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    int out = std::stoi(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer");
}

std::uint64_t CliConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    if (!v.empty() && v.front() != '-') {
      unsigned long long out = std::stoull(v, &used);
      if (used == v.size()) return out;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a non-negative integer");
}

double CliConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool CliConfig::get_bool(const std::string& key) const {
  const std::string v = to_lower(get(key));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

EvalConfig CliConfig::eval_config() const {
  EvalConfig c;
  try {
    c.method = parse_method(get("eval.method"));
    c.variant = parse_variant(get("eval.variant"));
    c.mode = parse_run_mode(get("eval.mode"));
    c.carry = parse_carry_position(get("eval.carry"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.m = get_int("eval.m");
  c.seed = get_u64("eval.seed");
  c.per_class_samples = get_int("eval.per_class");
  c.normalize_yes = get_bool("eval.normalize");
  c.shuffle_options = get_bool("eval.shuffle_options");
  c.workers = get_int("eval.workers");
  c.validate();
  return c;
}

sandbox::SandboxConfig CliConfig::sandbox_config() const {
  sandbox::SandboxConfig c;
  c.layers = get_int("sandbox.layers");
  c.heads = get_int("sandbox.heads");
  c.width = get_int("sandbox.width");
  c.max_seq = get_int("sandbox.max_seq");
  c.vocab = get_int("sandbox.vocab");
  c.k = get_int("sandbox.k");
  c.lambda = get_double("sandbox.lambda");
  c.renormalize = get_bool("sandbox.renormalize");
  c.deep_source = sandbox::parse_deep_source(get("sandbox.deep_source"));
  c.seed = get_u64("sandbox.seed");
  c.validate();
  return c;
}

HttpBackendConfig CliConfig::http_config() const {
  HttpBackendConfig c;
  c.base_url = get("backend.base_url");
  c.model = get("backend.model");
  c.api_key = get("backend.api_key");
  c.timeout_s = get_double("backend.timeout_s");
  c.max_in_flight = get_int("backend.max_in_flight");
  c.max_retries = get_int("backend.max_retries");
  c.top_logprobs = get_int("backend.top_logprobs");
  if (get_optional("backend.max_context_tokens")) c.max_context_tokens = get_int("backend.max_context_tokens");
  if (c.timeout_s <= 0) throw ConfigError("backend.timeout_s must be positive");
  if (c.max_in_flight < 1) throw ConfigError("backend.max_in_flight must be >= 1");
  if (c.max_retries < 0) throw ConfigError("backend.max_retries must be >= 0");
  return c;
}

EvalTemplates CliConfig::eval_templates() const {
  EvalTemplates t;
  if (auto p = get_optional("templates.mcqa")) t.mcqa = load_template(*p, "file:" + *p);
  if (auto p = get_optional("templates.yesno")) t.yesno = load_template(*p, "file:" + *p);
  if (auto p = get_optional("templates.allatonce")) t.all_at_once = load_template(*p, "file:" + *p);
  return t;
}

std::string CliConfig::dump() const {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_keys()) {
    auto dot = k.name.find('.');
    std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    const Entry& e = values_.at(k.name);
    std::string shown = e.value;
    if (k.name == "backend.api_key" && !shown.empty()) shown = "****";
    out << k.name.substr(dot + 1) << " = \"" << shown << "\"  ; " << to_string(e.source) << '\n';
  }
  return out.str();
}

}  // namespace fgprobe
