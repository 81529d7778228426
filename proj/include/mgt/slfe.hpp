#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "mgt/nn.hpp"
#include "mgt/tensor.hpp"

namespace mgt {

// Per-point channel widths through the extractor: C_in -> 64 -> 64 -> 128 -> 256 -> d_out.
inline constexpr std::size_t kLiftWidth = 64;
inline constexpr std::size_t kSphereWidth = kLiftWidth;
inline constexpr std::size_t kMidWidth = 128;
inline constexpr std::size_t kMrcWidth = 2 * kMidWidth;
// Stabilizer in both sphere-mapping denominators.
inline constexpr double kSphereEps = 1e-5;

struct SphereMapParams {
  Tensor alpha;  // [d]
  Tensor beta;   // [d]
  Tensor bias;   // [d]

  static SphereMapParams init(std::size_t width);
  void collect(ParamList& out, const std::string& prefix);
};

struct SlfeAblation {
  bool sphere_map = true;
  bool mrc = true;
  bool operator==(const SlfeAblation&) const = default;
};

// One extractor per scale; its weights are shared by every patch of that scale.
struct SlfeParams {
  NormedMlp lift;  // C_in -> 64
  SphereMapParams sphere;
  NormedMlp mid;   // 64 -> 128
  NormedMlp post;  // 256 -> d_out

  static SlfeParams init(std::size_t in_channels, std::size_t out_width, std::mt19937_64& rng);
  void collect(ParamList& out, const std::string& prefix);
};

// features: [S, K, d]. Per patch, centers every point on the patch mean P̄ and returns
//   alpha * (P_j - P̄) / (|P_j - P̄| + eps)
//   + beta * (1/K) sum_s <P_j - P̄, P_s - P̄> / (|P_j - P̄| |P_s - P̄| + eps)
//   + bias,
// where the sum runs over all K points of the same patch, including s = j.
Tensor sphere_map(const Tensor& features, const SphereMapParams& params);

// features: [S, K, C] -> [S, K, 2C]: [features || per-patch channel max repeated K times].
Tensor mrc(const Tensor& features);

// patches: [S, K, C_in] -> [S, d_out].
Tensor slfe_forward(const Tensor& patches, const SlfeParams& params, const SlfeAblation& ablation = {});

}  // namespace mgt
