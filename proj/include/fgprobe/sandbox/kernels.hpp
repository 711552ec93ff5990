#pragma once

#include <cstddef>
#include <vector>

namespace fgprobe::sandbox {

enum class Exec { kSerial, kParallel };

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool operator==(const Matrix&) const = default;
};

double max_abs_diff(const Matrix& a, const Matrix& b);

// Straightforward loops. These are the reference the parallel kernels are tested against.
namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// weights(i, j) = softmax_j<=i(q_i . k_j / sqrt(width)) over columns [col0, col0 + width).
void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights);
// out(i, col0 + c) = sum_j weights(i, j) * v(j, col0 + c)
void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out);
// a += lambda * mean, then rows rescaled to sum 1 when renormalize is set.
void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize);
void layer_norm(Matrix& x);
}  // namespace serial

// OpenMP over rows; matmul and mix_values use a cache-friendlier loop order.
namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights);
void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out);
void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize);
void layer_norm(Matrix& x);
}  // namespace parallel

void matmul(const Matrix& a, const Matrix& b, Matrix& out, Exec exec);
void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights,
                    Exec exec);
void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out,
                Exec exec);
void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize, Exec exec);
void layer_norm(Matrix& x, Exec exec);

}  // namespace fgprobe::sandbox
