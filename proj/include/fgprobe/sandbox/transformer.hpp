#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgprobe/sandbox/attention.hpp"
#include "fgprobe/sandbox/kernels.hpp"

namespace fgprobe::sandbox {

// Which deep-band weights feed the final-layer average.
enum class DeepSource { kModified, kRaw };

std::string_view to_string(DeepSource s);
DeepSource parse_deep_source(std::string_view s);

struct SandboxConfig {
  int layers = 8;
  int heads = 2;
  int width = 64;
  int max_seq = 64;
  int vocab = 128;
  int k = 4;
  double lambda = 1.0;
  bool renormalize = true;
  DeepSource deep_source = DeepSource::kModified;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  int head_dim() const { return width / heads; }
};

nlohmann::json to_json(const SandboxConfig& c);
SandboxConfig sandbox_config_from_json(const nlohmann::json& j);

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // width x width
  Matrix w1;              // width x 4*width
  Matrix w2;              // 4*width x width
};

struct SandboxWeights {
  Matrix token_embedding;     // vocab x width
  Matrix position_embedding;  // max_seq x width
  Matrix unembedding;         // width x vocab
  std::vector<LayerWeights> layers;

  static SandboxWeights random(const SandboxConfig& c);
};

enum class Intervention { kOff, kOn };

struct ForwardResult {
  Matrix logits;             // seq x vocab
  AttentionStack attention;  // as applied to the values
};

/// Pre-LayerNorm decoder with random frozen weights. Forward passes are pure.
class Sandbox {
 public:
  explicit Sandbox(SandboxConfig cfg);

  /// Same weights, different intervention parameters.
  Sandbox with_intervention(int k, double lambda, bool renormalize, DeepSource deep_source) const;

  const SandboxConfig& config() const { return cfg_; }
  const SandboxWeights& weights() const { return *weights_; }

  ForwardResult forward(std::span<const int> tokens, Intervention intervention, Exec exec = Exec::kSerial) const;

 private:
  Sandbox(SandboxConfig cfg, std::shared_ptr<const SandboxWeights> weights);

  SandboxConfig cfg_;
  std::shared_ptr<const SandboxWeights> weights_;
};

std::vector<int> random_tokens(std::size_t length, int vocab, std::uint64_t seed);

/// Portable dump of one forward pass for external reference checkers.
nlohmann::json dump_forward(const SandboxConfig& cfg, std::span<const int> tokens, Intervention intervention,
                            const ForwardResult& result);

}  // namespace fgprobe::sandbox
