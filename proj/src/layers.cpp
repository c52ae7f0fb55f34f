#include "yoto/layers.hpp"

#include <cmath>

YOTO_BEGIN_NAMESPACE

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<real> values(fan_in * fan_out);
  for (auto& v : values) v = static_cast<real>(rng.uniform(-a, a));
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

Tensor normal_init(std::size_t n, double stddev, Rng& rng) {
  std::vector<real> values(n);
  for (auto& v : values) v = static_cast<real>(stddev * rng.normal());
  return Tensor::from({n}, std::move(values), true);
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.w1 = xavier_uniform(in, hidden, rng);
  m.b1 = Tensor::zeros({hidden}, true);
  m.w2 = xavier_uniform(hidden, out, rng);
  m.b2 = Tensor::zeros({out}, true);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const { return linear(gelu(linear(x, w1, b1)), w2, b2); }

void Mlp::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".fc1.weight", w1);
  f(prefix + ".fc1.bias", b1);
  f(prefix + ".fc2.weight", w2);
  f(prefix + ".fc2.bias", b2);
}

YOTO_END_NAMESPACE
