#include "mgt/nn.hpp"

#include <cmath>

#include "mgt/ops.hpp"

namespace mgt {

std::vector<double> trunc_normal(std::size_t n, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = z * stddev;
  }
  return out;
}

std::vector<double> normal(std::size_t n, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {Tensor::parameter({in, out}, trunc_normal(in * out, rng)), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, false});
}

LayerNorm LayerNorm::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, offset); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".gain", &gain, false});
  out.push_back({prefix + ".offset", &offset, false});
}

NormedMlp NormedMlp::init(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  NormedMlp m;
  m.first = Linear::init(in, hidden, rng);
  m.norm = LayerNorm::init(hidden);
  m.second = Linear::init(hidden, out, rng);
  return m;
}

Tensor NormedMlp::operator()(const Tensor& x) const { return second(gelu(norm(first(x)))); }

void NormedMlp::collect(ParamList& out, const std::string& prefix) {
  first.collect(out, prefix + ".fc1");
  norm.collect(out, prefix + ".norm");
  second.collect(out, prefix + ".fc2");
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->numel();
  return n;
}

}  // namespace mgt
