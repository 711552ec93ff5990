#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "fgprobe/sandbox/kernels.hpp"

namespace fgprobe::sandbox {

/// Per-layer, per-head causal attention weights. Layers are 1-based, heads 0-based.
class AttentionStack {
 public:
  AttentionStack() = default;
  AttentionStack(int layers, int heads, std::size_t seq_len);

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  std::size_t seq_len() const { return seq_len_; }

  Matrix& at(int layer, int head);
  const Matrix& at(int layer, int head) const;

  bool operator==(const AttentionStack&) const = default;

 private:
  int layers_ = 0;
  int heads_ = 0;
  std::size_t seq_len_ = 0;
  std::vector<Matrix> mats_;
};

/// Layer ranges (1-based, inclusive) touched by the intervention for L layers and cutoff k:
/// early 3..k is averaged into deep k+1..L-2, whose average feeds the final L-1..L.
struct LayerBands {
  int early_first = 3;
  int early_last = 0;
  int deep_first = 0;
  int deep_last = 0;
  int final_first = 0;
  int final_last = 0;

  int early_count() const { return early_last - early_first + 1; }
  int deep_count() const { return deep_last - deep_first + 1; }
};

/// Throws ConfigError unless 3 <= k <= L-3 and lambda is finite and >= 0.
LayerBands layer_bands(int layers, int k);
void validate_intervention(int layers, int k, double lambda);

/// Elementwise mean of head `head` over layers first..last.
Matrix band_mean(const AttentionStack& stack, int first, int last, int head);

/// Deep band k+1..L-2 becomes A_j + lambda * mean(A_3..A_k), per head, optionally row-renormalized.
AttentionStack intervene_early(const AttentionStack& stack, int k, double lambda, bool renormalize,
                               Exec exec = Exec::kSerial);

/// Final layers L-1, L become A_j + lambda * mean of `deep_source` over k+1..L-2.
AttentionStack propagate_deep(const AttentionStack& post_early, const AttentionStack& deep_source, int k,
                              double lambda, bool renormalize, Exec exec = Exec::kSerial);
/// Same, averaging the already-modified deep band of `post_early`.
AttentionStack propagate_deep(const AttentionStack& post_early, int k, double lambda, bool renormalize,
                              Exec exec = Exec::kSerial);

struct StackCheck {
  double max_row_sum_error = 0.0;   // max |row sum - 1|
  double min_entry = 0.0;
  double max_above_diagonal = 0.0;  // max |a_ij| for j > i

  bool row_stochastic(double tol) const { return max_row_sum_error <= tol && min_entry >= 0.0; }
  bool causal() const { return max_above_diagonal == 0.0; }
};

StackCheck check_stack(const AttentionStack& stack);
StackCheck check_layer(const AttentionStack& stack, int layer);
double max_abs_diff(const AttentionStack& a, const AttentionStack& b);

nlohmann::json to_json(const AttentionStack& stack);  // [layer][head][row][col]
AttentionStack stack_from_json(const nlohmann::json& j);

}  // namespace fgprobe::sandbox
