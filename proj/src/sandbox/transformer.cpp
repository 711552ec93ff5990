#include "fgprobe/sandbox/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fgprobe/errors.hpp"

namespace fgprobe::sandbox {

std::string_view to_string(DeepSource s) { return s == DeepSource::kModified ? "modified" : "raw"; }

DeepSource parse_deep_source(std::string_view s) {
  if (s == "modified") return DeepSource::kModified;
  if (s == "raw") return DeepSource::kRaw;
  throw ConfigError("unknown deep source '" + std::string(s) + "' (expected modified or raw)");
}

void SandboxConfig::validate() const {
  if (layers < 6) throw ConfigError("sandbox needs at least 6 layers (got " + std::to_string(layers) + ")");
  if (heads < 1 || width < 1 || width % heads != 0)
    throw ConfigError("width must be a positive multiple of heads");
  if (max_seq < 1 || vocab < 2) throw ConfigError("max_seq must be >= 1 and vocab >= 2");
  validate_intervention(layers, k, lambda);
}

nlohmann::json to_json(const SandboxConfig& c) {
  return {{"layers", c.layers},     {"heads", c.heads},         {"width", c.width},
          {"max_seq", c.max_seq},   {"vocab", c.vocab},         {"k", c.k},
          {"lambda", c.lambda},     {"renormalize", c.renormalize},
          {"deep_source", to_string(c.deep_source)},            {"seed", c.seed}};
}

SandboxConfig sandbox_config_from_json(const nlohmann::json& j) {
  SandboxConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.k = j.at("k").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.renormalize = j.at("renormalize").get<bool>();
  c.deep_source = parse_deep_source(j.at("deep_source").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.data) x = dist(rng);
  return m;
}

}  // namespace

SandboxWeights SandboxWeights::random(const SandboxConfig& c) {
  std::mt19937_64 rng(c.seed);
  const auto d = static_cast<std::size_t>(c.width);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  SandboxWeights w;
  w.token_embedding = gaussian(static_cast<std::size_t>(c.vocab), d, 1.0, rng);
  w.position_embedding = gaussian(static_cast<std::size_t>(c.max_seq), d, 1.0, rng);
  for (int l = 0; l < c.layers; ++l) {
    LayerWeights lw;
    lw.wq = gaussian(d, d, s, rng);
    lw.wk = gaussian(d, d, s, rng);
    lw.wv = gaussian(d, d, s, rng);
    lw.wo = gaussian(d, d, s, rng);
    lw.w1 = gaussian(d, 4 * d, s, rng);
    lw.w2 = gaussian(4 * d, d, 0.5 * s, rng);
    w.layers.push_back(std::move(lw));
  }
  w.unembedding = gaussian(d, static_cast<std::size_t>(c.vocab), s, rng);
  return w;
}

Sandbox::Sandbox(SandboxConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  weights_ = std::make_shared<const SandboxWeights>(SandboxWeights::random(cfg_));
}

Sandbox::Sandbox(SandboxConfig cfg, std::shared_ptr<const SandboxWeights> weights)
    : cfg_(cfg), weights_(std::move(weights)) {
  cfg_.validate();
}

Sandbox Sandbox::with_intervention(int k, double lambda, bool renormalize, DeepSource deep_source) const {
  SandboxConfig c = cfg_;
  c.k = k;
  c.lambda = lambda;
  c.renormalize = renormalize;
  c.deep_source = deep_source;
  return Sandbox(c, weights_);
}

ForwardResult Sandbox::forward(std::span<const int> tokens, Intervention intervention, Exec exec) const {
  const SandboxWeights& w = *weights_;
  const std::size_t seq = tokens.size();
  if (seq == 0) throw ConfigError("empty token sequence");
  if (seq > static_cast<std::size_t>(cfg_.max_seq))
    throw ConfigError("sequence of " + std::to_string(seq) + " tokens exceeds max_seq " +
                      std::to_string(cfg_.max_seq));
  const auto d = static_cast<std::size_t>(cfg_.width);
  const auto dh = static_cast<std::size_t>(cfg_.head_dim());

  Matrix x(seq, d);
  for (std::size_t i = 0; i < seq; ++i) {
    int t = tokens[i];
    if (t < 0 || t >= cfg_.vocab) throw ConfigError("token id " + std::to_string(t) + " outside vocabulary");
    for (std::size_t c = 0; c < d; ++c)
      x(i, c) = w.token_embedding(static_cast<std::size_t>(t), c) + w.position_embedding(i, c);
  }

  const bool on = intervention == Intervention::kOn;
  const LayerBands bands = layer_bands(cfg_.layers, cfg_.k);
  std::vector<Matrix> early_sum(static_cast<std::size_t>(cfg_.heads), Matrix(seq, seq));
  std::vector<Matrix> deep_sum(static_cast<std::size_t>(cfg_.heads), Matrix(seq, seq));

  ForwardResult out{Matrix(), AttentionStack(cfg_.layers, cfg_.heads, seq)};
  Matrix h, q, k, v, mixed(seq, d), proj, hidden, mlp;
  for (int l = 1; l <= cfg_.layers; ++l) {
    const LayerWeights& lw = w.layers[static_cast<std::size_t>(l - 1)];
    h = x;
    layer_norm(h, exec);
    matmul(h, lw.wq, q, exec);
    matmul(h, lw.wk, k, exec);
    matmul(h, lw.wv, v, exec);

    for (int head = 0; head < cfg_.heads; ++head) {
      const std::size_t col0 = static_cast<std::size_t>(head) * dh;
      Matrix& a = out.attention.at(l, head);
      causal_softmax(q, k, col0, dh, a, exec);

      if (on) {
        auto& esum = early_sum[static_cast<std::size_t>(head)];
        auto& dsum = deep_sum[static_cast<std::size_t>(head)];
        if (l >= bands.early_first && l <= bands.early_last) {
          for (std::size_t i = 0; i < a.data.size(); ++i) esum.data[i] += a.data[i];
        } else if (l >= bands.deep_first && l <= bands.deep_last) {
          if (cfg_.deep_source == DeepSource::kRaw)
            for (std::size_t i = 0; i < a.data.size(); ++i) dsum.data[i] += a.data[i];
          Matrix mean = esum;
          for (double& e : mean.data) e /= static_cast<double>(bands.early_count());
          band_update(a, mean, cfg_.lambda, cfg_.renormalize, exec);
          if (cfg_.deep_source == DeepSource::kModified)
            for (std::size_t i = 0; i < a.data.size(); ++i) dsum.data[i] += a.data[i];
        } else if (l >= bands.final_first) {
          Matrix mean = dsum;
          for (double& e : mean.data) e /= static_cast<double>(bands.deep_count());
          band_update(a, mean, cfg_.lambda, cfg_.renormalize, exec);
        }
      }
      mix_values(a, v, col0, dh, mixed, exec);
    }

    matmul(mixed, lw.wo, proj, exec);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += proj.data[i];

    h = x;
    layer_norm(h, exec);
    matmul(h, lw.w1, hidden, exec);
    for (double& e : hidden.data) e = std::max(e, 0.0);
    matmul(hidden, lw.w2, mlp, exec);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += mlp.data[i];
  }

  layer_norm(x, exec);
  matmul(x, w.unembedding, out.logits, exec);
  return out;
}

std::vector<int> random_tokens(std::size_t length, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, vocab - 1);
  std::vector<int> t(length);
  for (int& x : t) x = dist(rng);
  return t;
}

nlohmann::json dump_forward(const SandboxConfig& cfg, std::span<const int> tokens, Intervention intervention,
                            const ForwardResult& result) {
  nlohmann::json logits = nlohmann::json::array();
  for (std::size_t i = 0; i < result.logits.rows; ++i)
    logits.push_back(std::vector<double>(result.logits.row(i), result.logits.row(i) + result.logits.cols));
  return {{"format", "fgprobe.attention-dump.v1"},
          {"config", to_json(cfg)},
          {"tokens", std::vector<int>(tokens.begin(), tokens.end())},
          {"intervention", intervention == Intervention::kOn},
          {"attention", to_json(result.attention)},
          {"logits", std::move(logits)}};
}

}  // namespace fgprobe::sandbox
