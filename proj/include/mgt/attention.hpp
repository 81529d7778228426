#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>

#include "mgt/nn.hpp"
#include "mgt/tensor.hpp"

namespace mgt {

enum class AttentionKind { geodesic, dot };

const char* to_string(AttentionKind kind);
AttentionKind parse_attention_kind(const std::string& text);

struct AttentionConfig {
  AttentionKind kind = AttentionKind::geodesic;
  std::size_t factors = 1;   // unit-norm blocks per token
  double temperature = 1.0;  // logits are -D / temperature

  void validate(std::size_t width) const;
  bool operator==(const AttentionConfig&) const = default;
};

struct AttentionParams {
  Linear value;
  // Dot-product mode only; left undefined for geodesic attention.
  Linear query;
  Linear key;

  static AttentionParams init(const AttentionConfig& config, std::size_t width, std::mt19937_64& rng);
  void collect(ParamList& out, const std::string& prefix);
};

struct AttentionResult {
  Tensor output;   // [T, d]
  Tensor weights;  // [T, T], row-stochastic
};

// Splits every token of tokens [T, d] into `factors` equal blocks and scales each to unit norm.
Tensor project_oblique(const Tensor& tokens, std::size_t factors);

// Geodesic distance between two blockwise unit vectors: sqrt(sum_b arccos^2(<q_b, k_b>)).
double geodesic_dist(std::span<const double> q, std::span<const double> k, std::size_t factors);

// Pairwise geodesic distances [T, T] of projected tokens; the diagonal is exactly zero.
Tensor geodesic_distance_matrix(const Tensor& projected, std::size_t factors);

// softmax(-D(Proj(z), Proj(z)) / temperature) * W_v(z); no query or key projections.
AttentionResult geodesic_attention(const Tensor& tokens, const AttentionParams& params,
                                   const AttentionConfig& config);

// Single-head scaled dot-product attention with learned query, key and value maps.
AttentionResult dot_attention(const Tensor& tokens, const AttentionParams& params);

AttentionResult attend(const Tensor& tokens, const AttentionParams& params, const AttentionConfig& config);

}  // namespace mgt
