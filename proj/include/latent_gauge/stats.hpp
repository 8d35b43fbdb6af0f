#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "latent_gauge/error.hpp"

namespace latent_gauge::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DegenerateError("mean of empty series");
  // Two-pass: the correction term removes most of the summation error.
  double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double c = 0.0;
  for (double v : x) c += v - m;
  return m + c / static_cast<double>(x.size());
}

inline double sum_sq_dev(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s;
}

// Population (1/n) variance.
inline double variance_pop(std::span<const double> x) {
  return sum_sq_dev(x, mean(x)) / static_cast<double>(x.size());
}

// Sample (1/(n-1)) variance.
inline double variance_sample(std::span<const double> x) {
  if (x.size() < 2) throw DegenerateError("sample variance needs at least 2 values");
  return sum_sq_dev(x, mean(x)) / static_cast<double>(x.size() - 1);
}

// Average ranks (1-based); ties receive the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace latent_gauge::stats
