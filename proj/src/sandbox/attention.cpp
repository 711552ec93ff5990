#include "fgprobe/sandbox/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fgprobe/errors.hpp"

namespace fgprobe::sandbox {

AttentionStack::AttentionStack(int layers, int heads, std::size_t seq_len)
    : layers_(layers),
      heads_(heads),
      seq_len_(seq_len),
      mats_(static_cast<std::size_t>(layers * heads), Matrix(seq_len, seq_len)) {}

Matrix& AttentionStack::at(int layer, int head) {
  return mats_.at(static_cast<std::size_t>((layer - 1) * heads_ + head));
}

const Matrix& AttentionStack::at(int layer, int head) const {
  return mats_.at(static_cast<std::size_t>((layer - 1) * heads_ + head));
}

LayerBands layer_bands(int layers, int k) {
  if (k < 3 || k > layers - 3)
    throw ConfigError("intervention cutoff k=" + std::to_string(k) + " must satisfy 3 <= k <= L-3 (L=" +
                      std::to_string(layers) + ")");
  return {3, k, k + 1, layers - 2, layers - 1, layers};
}

void validate_intervention(int layers, int k, double lambda) {
  layer_bands(layers, k);
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw ConfigError("lambda must be a finite non-negative number (got " + std::to_string(lambda) + ")");
}

Matrix band_mean(const AttentionStack& stack, int first, int last, int head) {
  Matrix mean(stack.seq_len(), stack.seq_len());
  for (int l = first; l <= last; ++l) {
    const Matrix& a = stack.at(l, head);
    for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += a.data[i];
  }
  const double inv = 1.0 / static_cast<double>(last - first + 1);
  for (double& x : mean.data) x *= inv;
  return mean;
}

AttentionStack intervene_early(const AttentionStack& stack, int k, double lambda, bool renormalize, Exec exec) {
  validate_intervention(stack.layers(), k, lambda);
  LayerBands bands = layer_bands(stack.layers(), k);
  AttentionStack out = stack;
  for (int h = 0; h < stack.heads(); ++h) {
    Matrix early = band_mean(stack, bands.early_first, bands.early_last, h);
    for (int j = bands.deep_first; j <= bands.deep_last; ++j) band_update(out.at(j, h), early, lambda, renormalize, exec);
  }
  return out;
}

AttentionStack propagate_deep(const AttentionStack& post_early, const AttentionStack& deep_source, int k,
                              double lambda, bool renormalize, Exec exec) {
  validate_intervention(post_early.layers(), k, lambda);
  LayerBands bands = layer_bands(post_early.layers(), k);
  AttentionStack out = post_early;
  for (int h = 0; h < post_early.heads(); ++h) {
    Matrix deep = band_mean(deep_source, bands.deep_first, bands.deep_last, h);
    for (int j = bands.final_first; j <= bands.final_last; ++j) band_update(out.at(j, h), deep, lambda, renormalize, exec);
  }
  return out;
}

AttentionStack propagate_deep(const AttentionStack& post_early, int k, double lambda, bool renormalize, Exec exec) {
  return propagate_deep(post_early, post_early, k, lambda, renormalize, exec);
}

StackCheck check_layer(const AttentionStack& stack, int layer) {
  StackCheck c;
  c.min_entry = INFINITY;
  for (int h = 0; h < stack.heads(); ++h) {
    const Matrix& a = stack.at(layer, h);
    for (std::size_t i = 0; i < a.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.cols; ++j) {
        sum += a(i, j);
        c.min_entry = std::min(c.min_entry, a(i, j));
        if (j > i) c.max_above_diagonal = std::max(c.max_above_diagonal, std::abs(a(i, j)));
      }
      c.max_row_sum_error = std::max(c.max_row_sum_error, std::abs(sum - 1.0));
    }
  }
  return c;
}

StackCheck check_stack(const AttentionStack& stack) {
  StackCheck total;
  total.min_entry = INFINITY;
  for (int l = 1; l <= stack.layers(); ++l) {
    StackCheck c = check_layer(stack, l);
    total.max_row_sum_error = std::max(total.max_row_sum_error, c.max_row_sum_error);
    total.min_entry = std::min(total.min_entry, c.min_entry);
    total.max_above_diagonal = std::max(total.max_above_diagonal, c.max_above_diagonal);
  }
  return total;
}

double max_abs_diff(const AttentionStack& a, const AttentionStack& b) {
  if (a.layers() != b.layers() || a.heads() != b.heads() || a.seq_len() != b.seq_len()) return INFINITY;
  double d = 0.0;
  for (int l = 1; l <= a.layers(); ++l)
    for (int h = 0; h < a.heads(); ++h) d = std::max(d, max_abs_diff(a.at(l, h), b.at(l, h)));
  return d;
}

nlohmann::json to_json(const AttentionStack& stack) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 1; l <= stack.layers(); ++l) {
    nlohmann::json heads = nlohmann::json::array();
    for (int h = 0; h < stack.heads(); ++h) {
      const Matrix& a = stack.at(l, h);
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < a.rows; ++i) rows.push_back(std::vector<double>(a.row(i), a.row(i) + a.cols));
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return layers;
}

AttentionStack stack_from_json(const nlohmann::json& j) {
  const int layers = static_cast<int>(j.size());
  const int heads = layers > 0 ? static_cast<int>(j[0].size()) : 0;
  const std::size_t seq = heads > 0 ? j[0][0].size() : 0;
  AttentionStack stack(layers, heads, seq);
  for (int l = 1; l <= layers; ++l)
    for (int h = 0; h < heads; ++h) {
      Matrix& a = stack.at(l, h);
      for (std::size_t i = 0; i < seq; ++i) {
        auto row = j[l - 1][h][i].get<std::vector<double>>();
        if (row.size() != seq) throw Error("attention dump row has wrong length");
        std::copy(row.begin(), row.end(), a.row(i));
      }
    }
  return stack;
}

}  // namespace fgprobe::sandbox
