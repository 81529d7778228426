#include "mgt/attention.hpp"

#include <algorithm>
#include <cmath>

#include "mgt/error.hpp"
#include "mgt/ops.hpp"

namespace mgt {

const char* to_string(AttentionKind kind) { return kind == AttentionKind::geodesic ? "geodesic" : "dot"; }

AttentionKind parse_attention_kind(const std::string& text) {
  if (text == "geodesic") return AttentionKind::geodesic;
  if (text == "dot") return AttentionKind::dot;
  throw ConfigError("attention must be 'geodesic' or 'dot', got '" + text + "'");
}

void AttentionConfig::validate(std::size_t width) const {
  if (factors < 1 || width % factors != 0) {
    throw ConfigError("attention factors (" + std::to_string(factors) + ") must divide the token width " +
                      std::to_string(width));
  }
  if (!(temperature > 0.0)) throw ConfigError("attention temperature must be positive");
}

AttentionParams AttentionParams::init(const AttentionConfig& config, std::size_t width, std::mt19937_64& rng) {
  AttentionParams p;
  if (config.kind == AttentionKind::dot) {
    p.query = Linear::init(width, width, rng);
    p.key = Linear::init(width, width, rng);
  }
  p.value = Linear::init(width, width, rng);
  return p;
}

void AttentionParams::collect(ParamList& out, const std::string& prefix) {
  if (query.weight.defined()) query.collect(out, prefix + ".query");
  if (key.weight.defined()) key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
}

Tensor project_oblique(const Tensor& tokens, std::size_t factors) {
  if (tokens.rank() != 2) throw ConfigError("project_oblique expects [T, d] tokens, got " + shape_str(tokens.shape()));
  const std::size_t t = tokens.dim(0);
  const std::size_t d = tokens.dim(1);
  if (factors < 1 || d % factors != 0) throw ConfigError("project_oblique: factors must divide the token width");
  const Tensor blocks = reshape(tokens, {t, factors, d / factors});
  const Tensor norms = sqrt(sum_reduce(mul(blocks, blocks), 2, true));
  // Floor at kGradGuard: a constant lift only on near-zero blocks, so unit blocks stay exactly unit.
  std::vector<double> lift(norms.numel());
  for (std::size_t i = 0; i < lift.size(); ++i) lift[i] = std::max(norms[i], kGradGuard) - norms[i];
  return reshape(div(blocks, add(norms, Tensor(norms.shape(), std::move(lift)))), {t, d});
}

double geodesic_dist(std::span<const double> q, std::span<const double> k, std::size_t factors) {
  if (q.size() != k.size() || factors < 1 || q.size() % factors != 0) {
    throw ConfigError("geodesic_dist: mismatched token widths or block count");
  }
  const std::size_t h = q.size() / factors;
  double total = 0.0;
  for (std::size_t b = 0; b < factors; ++b) {
    double dot = 0.0;
    for (std::size_t i = b * h; i < (b + 1) * h; ++i) dot += q[i] * k[i];
    const double angle = std::acos(std::clamp(dot, -1.0, 1.0));
    total += angle * angle;
  }
  return std::sqrt(total);
}

Tensor geodesic_distance_matrix(const Tensor& projected, std::size_t factors) {
  const std::size_t t = projected.dim(0);
  const std::size_t d = projected.dim(1);
  if (factors < 1 || d % factors != 0) throw ConfigError("geodesic_distance_matrix: factors must divide the token width");
  const Tensor blocks = transpose(reshape(projected, {t, factors, d / factors}), 0, 1);  // [n, T, h]
  const Tensor dots = matmul(blocks, transpose(blocks));                                  // [n, T, T]

  std::vector<double> off_diagonal(t * t, 1.0);
  for (std::size_t i = 0; i < t; ++i) off_diagonal[i * t + i] = 0.0;
  const Tensor angles = mul(arccos(dots), Tensor({t, t}, std::move(off_diagonal)));
  return sqrt(sum_reduce(mul(angles, angles), 0));
}

AttentionResult geodesic_attention(const Tensor& tokens, const AttentionParams& params,
                                   const AttentionConfig& config) {
  config.validate(tokens.dim(1));
  const Tensor projected = project_oblique(tokens, config.factors);
  const Tensor distances = geodesic_distance_matrix(projected, config.factors);
  const Tensor weights = softmax_rows(mul_scalar(distances, -1.0 / config.temperature));
  return {matmul(weights, params.value(tokens)), weights};
}

AttentionResult dot_attention(const Tensor& tokens, const AttentionParams& params) {
  if (!params.query.weight.defined() || !params.key.weight.defined()) {
    throw ConfigError("dot attention requires query and key projections");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.dim(1)));
  const Tensor logits = mul_scalar(matmul(params.query(tokens), transpose(params.key(tokens))), scale);
  const Tensor weights = softmax_rows(logits);
  return {matmul(weights, params.value(tokens)), weights};
}

AttentionResult attend(const Tensor& tokens, const AttentionParams& params, const AttentionConfig& config) {
  return config.kind == AttentionKind::geodesic ? geodesic_attention(tokens, params, config)
                                                : dot_attention(tokens, params);
}

}  // namespace mgt
