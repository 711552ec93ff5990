#pragma once

#include <random>
#include <string>

#include "fgprobe/benchmark.hpp"
#include "fgprobe/oracle_backend.hpp"

// Synthetic benchmarks with unique, name-free descriptions.
inline fgprobe::Benchmark synthetic_benchmark(int n, const std::string& name = "synthetic") {
  fgprobe::Benchmark b;
  b.dataset_name = name;
  for (int i = 0; i < n; ++i) {
    std::string id = std::to_string(i);
    b.classes.push_back({i, "Class " + id, "Class " + id + " is a bird of kind " + id + ".",
                         "This bird is of kind " + id + "."});
  }
  return b;
}

inline std::vector<double> random_scores(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 2.0);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (auto& v : s) v = normal(rng);
  return s;
}
