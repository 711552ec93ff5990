#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fgprobe/harness.hpp"
#include "fgprobe/http_backend.hpp"
#include "fgprobe/sandbox/transformer.hpp"

namespace fgprobe {

enum class ConfigSource { kDefault = 0, kFile = 1, kEnv = 2, kFlag = 3 };
std::string_view to_string(ConfigSource s);

struct ConfigKey {
  std::string name;  // "section.key"
  std::string default_value;
  std::string help;
};

/// Every key the tool understands, grouped as [backend], [eval], [sandbox], [templates].
const std::vector<ConfigKey>& config_keys();

/// Resolved settings. A value from a higher-precedence source (flags > env > file > defaults)
/// is never replaced by a lower one, whatever order the sources are applied in.
class CliConfig {
 public:
  CliConfig();

  /// [section] key = value; '#' and ';' comment lines; values may be double-quoted.
  void load_file(const std::filesystem::path& path);
  void load_string(const std::string& text, const std::string& origin = "<string>");

  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
  /// FGPROBE_API_KEY, FGPROBE_BASE_URL, FGPROBE_MODEL.
  void apply_env(const EnvLookup& lookup);
  void apply_process_env();

  void set(const std::string& key, const std::string& value, ConfigSource source);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::optional<std::string> get_optional(const std::string& key) const;  // nullopt when empty
  ConfigSource source_of(const std::string& key) const;

  EvalConfig eval_config() const;
  sandbox::SandboxConfig sandbox_config() const;
  HttpBackendConfig http_config() const;
  /// Built-in templates unless [templates] names a file.
  EvalTemplates eval_templates() const;

  /// Resolved view, for --print-config. The API key is masked.
  std::string dump() const;

 private:
  struct Entry {
    std::string value;
    ConfigSource source = ConfigSource::kDefault;
  };
  const Entry& entry(const std::string& key) const;

  std::map<std::string, Entry> values_;
};

}  // namespace fgprobe
