#include "fgprobe/sandbox/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fgprobe::sandbox {

namespace {

constexpr double kLayerNormEps = 1e-5;

void check_matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  if (out.rows != a.rows || out.cols != b.cols) out = Matrix(a.rows, b.cols);
}

void prepare_weights(const Matrix& q, Matrix& weights) {
  if (weights.rows != q.rows || weights.cols != q.rows) weights = Matrix(q.rows, q.rows);
}

// Shared by both softmax variants: rows are independent, so parallelism is across rows only.
void softmax_row(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, std::size_t i,
                 double* out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  double mx = -INFINITY;
  for (std::size_t j = 0; j <= i; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < width; ++c) s += q(i, col0 + c) * k(j, col0 + c);
    out[j] = s * scale;
    mx = std::max(mx, out[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j <= i; ++j) {
    out[j] = std::exp(out[j] - mx);
    sum += out[j];
  }
  for (std::size_t j = 0; j <= i; ++j) out[j] /= sum;
  for (std::size_t j = i + 1; j < q.rows; ++j) out[j] = 0.0;
}

void band_row(double* a, const double* mean, std::size_t n, double lambda, bool renormalize) {
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    a[j] += lambda * mean[j];
    sum += a[j];
  }
  if (renormalize && sum > 0.0)
    for (std::size_t j = 0; j < n; ++j) a[j] /= sum;
}

void norm_row(double* x, std::size_t n) {
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(n);
  double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t j = 0; j < n; ++j) x[j] = (x[j] - mean) * inv;
}

}  // namespace

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
  return d;
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
}

void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights) {
  prepare_weights(q, weights);
  for (std::size_t i = 0; i < q.rows; ++i) softmax_row(q, k, col0, width, i, weights.row(i));
}

void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out) {
  for (std::size_t i = 0; i < weights.rows; ++i)
    for (std::size_t c = 0; c < width; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < weights.cols; ++j) s += weights(i, j) * v(j, col0 + c);
      out(i, col0 + c) = s;
    }
}

void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize) {
  for (std::size_t i = 0; i < a.rows; ++i) band_row(a.row(i), mean.row(i), a.cols, lambda, renormalize);
}

void layer_norm(Matrix& x) {
  for (std::size_t i = 0; i < x.rows; ++i) norm_row(x.row(i), x.cols);
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
  const auto rows = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    double* o = out.row(static_cast<std::size_t>(i));
    std::fill(o, o + out.cols, 0.0);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(static_cast<std::size_t>(i), p);
      const double* brow = b.row(p);
#pragma omp simd
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += aip * brow[j];
    }
  }
}

void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights) {
  prepare_weights(q, weights);
  const auto rows = static_cast<long>(q.rows);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < rows; ++i)
    softmax_row(q, k, col0, width, static_cast<std::size_t>(i), weights.row(static_cast<std::size_t>(i)));
}

void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out) {
  const auto rows = static_cast<long>(weights.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    double* o = out.row(static_cast<std::size_t>(i)) + col0;
    std::fill(o, o + width, 0.0);
    for (std::size_t j = 0; j < weights.cols; ++j) {
      const double w = weights(static_cast<std::size_t>(i), j);
      if (w == 0.0) continue;
      const double* vrow = v.row(j) + col0;
#pragma omp simd
      for (std::size_t c = 0; c < width; ++c) o[c] += w * vrow[c];
    }
  }
}

void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize) {
  const auto rows = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i)
    band_row(a.row(static_cast<std::size_t>(i)), mean.row(static_cast<std::size_t>(i)), a.cols, lambda,
             renormalize);
}

void layer_norm(Matrix& x) {
  const auto rows = static_cast<long>(x.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) norm_row(x.row(static_cast<std::size_t>(i)), x.cols);
}

}  // namespace parallel

void matmul(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
  exec == Exec::kParallel ? parallel::matmul(a, b, out) : serial::matmul(a, b, out);
}

void causal_softmax(const Matrix& q, const Matrix& k, std::size_t col0, std::size_t width, Matrix& weights,
                    Exec exec) {
  exec == Exec::kParallel ? parallel::causal_softmax(q, k, col0, width, weights)
                          : serial::causal_softmax(q, k, col0, width, weights);
}

void mix_values(const Matrix& weights, const Matrix& v, std::size_t col0, std::size_t width, Matrix& out,
                Exec exec) {
  exec == Exec::kParallel ? parallel::mix_values(weights, v, col0, width, out)
                          : serial::mix_values(weights, v, col0, width, out);
}

void band_update(Matrix& a, const Matrix& mean, double lambda, bool renormalize, Exec exec) {
  exec == Exec::kParallel ? parallel::band_update(a, mean, lambda, renormalize)
                          : serial::band_update(a, mean, lambda, renormalize);
}

void layer_norm(Matrix& x, Exec exec) { exec == Exec::kParallel ? parallel::layer_norm(x) : serial::layer_norm(x); }

}  // namespace fgprobe::sandbox
