#pragma once

#include <functional>
#include <string>

#include "yoto/rng.hpp"
#include "yoto/tensor.hpp"

YOTO_BEGIN_NAMESPACE

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), shape [fan_in, fan_out].
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal_init(std::size_t n, double stddev, Rng& rng);

/// Two-layer perceptron: linear -> gelu -> linear.
struct Mlp {
  Tensor w1, b1, w2, b2;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

YOTO_END_NAMESPACE
