#pragma once

#include <cmath>
#include <cstddef>
#include <random>

#include "hgfrenet/tensor.hpp"

namespace hgf::init {

/// [fan_in, fan_out] matrix with N(0, 2 / (fan_in + fan_out)) entries.
inline Tensor xavier_normal(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  Tensor t(Shape{fan_in, fan_out});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace hgf::init
