#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

// A learnable tensor exposed to the optimizer and the checkpoint writer.
struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool decay;  // false for gains, offsets, biases and tokens
};

using ParamList = std::vector<ParamRef>;

// Affine map x W + b with W: [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gain;
  Tensor offset;

  static LayerNorm init(std::size_t width);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix);
};

// affine -> layer norm -> GELU -> affine
struct NormedMlp {
  Linear first;
  LayerNorm norm;
  Linear second;

  static NormedMlp init(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix);
};

// Truncated normal (two standard deviations), std 0.02.
std::vector<double> trunc_normal(std::size_t n, std::mt19937_64& rng, double stddev = 0.02);
std::vector<double> normal(std::size_t n, std::mt19937_64& rng, double stddev = 0.02);

std::size_t parameter_count(const ParamList& params);

}  // namespace mgt
