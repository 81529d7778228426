#include "mgt/slfe.hpp"

#include "mgt/error.hpp"
#include "mgt/ops.hpp"

namespace mgt {

SphereMapParams SphereMapParams::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void SphereMapParams::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".alpha", &alpha, false});
  out.push_back({prefix + ".beta", &beta, false});
  out.push_back({prefix + ".bias", &bias, false});
}

SlfeParams SlfeParams::init(std::size_t in_channels, std::size_t out_width, std::mt19937_64& rng) {
  SlfeParams p;
  p.lift = NormedMlp::init(in_channels, kLiftWidth, kLiftWidth, rng);
  p.sphere = SphereMapParams::init(kSphereWidth);
  p.mid = NormedMlp::init(kSphereWidth, kMidWidth, kMidWidth, rng);
  p.post = NormedMlp::init(kMrcWidth, out_width, out_width, rng);
  return p;
}

void SlfeParams::collect(ParamList& out, const std::string& prefix) {
  lift.collect(out, prefix + ".lift");
  sphere.collect(out, prefix + ".sphere");
  mid.collect(out, prefix + ".mid");
  post.collect(out, prefix + ".post");
}

Tensor sphere_map(const Tensor& features, const SphereMapParams& params) {
  if (features.rank() != 3) throw ConfigError("sphere_map expects [S, K, d] features, got " + shape_str(features.shape()));
  const std::size_t d = features.dim(2);
  if (params.alpha.numel() != d || params.beta.numel() != d || params.bias.numel() != d) {
    throw ConfigError("sphere_map: parameter width does not match feature width " + std::to_string(d));
  }
  const Tensor centered = sub(features, mean_reduce(features, 1, true));  // [S, K, d]
  const Tensor norms = sqrt(sum_reduce(mul(centered, centered), 2, true));  // [S, K, 1]
  const Tensor unit = div(centered, add_scalar(norms, kSphereEps));

  const Tensor gram = matmul(centered, transpose(centered));     // [S, K, K]
  const Tensor norm_outer = matmul(norms, transpose(norms));     // [S, K, K]
  const Tensor cosines = div(gram, add_scalar(norm_outer, kSphereEps));
  const Tensor mean_cos = mean_reduce(cosines, 2, true);         // [S, K, 1]

  return add(add(mul(params.alpha, unit), mul(params.beta, mean_cos)), params.bias);
}

Tensor mrc(const Tensor& features) {
  if (features.rank() != 3) throw ConfigError("mrc expects [S, K, C] features, got " + shape_str(features.shape()));
  const Tensor pooled = broadcast_to(max_reduce(features, 1, true), features.shape());
  return concat({features, pooled}, 2);
}

Tensor slfe_forward(const Tensor& patches, const SlfeParams& params, const SlfeAblation& ablation) {
  if (patches.rank() != 3) throw ConfigError("slfe_forward expects [S, K, C] patches, got " + shape_str(patches.shape()));
  Tensor x = params.lift(patches);
  if (ablation.sphere_map) x = sphere_map(x, params.sphere);
  x = params.mid(x);
  x = ablation.mrc ? mrc(x) : concat({x, x}, 2);
  x = params.post(x);
  return max_reduce(x, 1);
}

}  // namespace mgt
