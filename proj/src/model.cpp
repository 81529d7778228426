#include "mgt/model.hpp"

#include <random>
#include <string>

#include "mgt/error.hpp"
#include "mgt/ops.hpp"

namespace mgt {

void ModelConfig::validate() const {
  if (scales.empty() || scales.size() > 4) throw ConfigError("between 1 and 4 scales are supported");
  for (const auto& s : scales) {
    if (s.patch_size < 1 || s.patch_count < 1) throw ConfigError("patch size and count must be positive");
  }
  if (channels != 3 && channels != 6) throw ConfigError("channels must be 3 (xyz) or 6 (xyz + normal)");
  if (width < 1) throw ConfigError("width must be positive");
  if (depth < 1) throw ConfigError("encoder depth must be at least 1");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be at least 1");
  if (num_classes < 2) throw ConfigError("at least two classes are required");
  attention.validate(width);
}

std::size_t ModelConfig::token_count() const {
  std::size_t n = 1;
  for (const auto& s : scales) n += s.patch_count;
  return n;
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) {
  attn_norm.collect(out, prefix + ".attn_norm");
  attention.collect(out, prefix + ".attn");
  mlp_norm.collect(out, prefix + ".mlp_norm");
  fc1.collect(out, prefix + ".mlp.fc1");
  fc2.collect(out, prefix + ".mlp.fc2");
}

MgtModel MgtModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  MgtModel m;
  m.config = config;
  for (std::size_t i = 0; i < config.scales.size(); ++i) {
    m.extractors.push_back(SlfeParams::init(config.channels, config.width, rng));
  }
  m.class_token = Tensor::parameter({1, config.width}, normal(config.width, rng));
  m.class_center = Tensor::parameter({1, 3}, normal(3, rng));
  m.pos_fc1 = Linear::init(3, kPositionHidden, rng);
  m.pos_fc2 = Linear::init(kPositionHidden, config.width, rng);
  for (std::size_t l = 0; l < config.depth; ++l) {
    EncoderLayer layer;
    layer.attn_norm = LayerNorm::init(config.width);
    layer.attention = AttentionParams::init(config.attention, config.width, rng);
    layer.mlp_norm = LayerNorm::init(config.width);
    layer.fc1 = Linear::init(config.width, config.mlp_ratio * config.width, rng);
    layer.fc2 = Linear::init(config.mlp_ratio * config.width, config.width, rng);
    m.layers.push_back(std::move(layer));
  }
  m.final_norm = LayerNorm::init(config.width);
  m.head = Linear::init(config.width, config.num_classes, rng);
  return m;
}

ParamList MgtModel::parameters() {
  ParamList out;
  for (std::size_t i = 0; i < extractors.size(); ++i) extractors[i].collect(out, "slfe" + std::to_string(i));
  out.push_back({"class_token", &class_token, false});
  out.push_back({"class_center", &class_center, false});
  pos_fc1.collect(out, "pos.fc1");
  pos_fc2.collect(out, "pos.fc2");
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, "layers." + std::to_string(l));
  final_norm.collect(out, "final_norm");
  head.collect(out, "head");
  return out;
}

std::size_t MgtModel::parameter_count() const {
  MgtModel view = *this;  // shares storage
  return mgt::parameter_count(view.parameters());
}

Tensor embed_patches(const PatchSet& patches, const MgtModel& model) {
  if (patches.scales.size() != model.extractors.size()) {
    throw ConfigError("patch set has " + std::to_string(patches.scales.size()) + " scales, model expects " +
                      std::to_string(model.extractors.size()));
  }
  std::vector<Tensor> tokens{model.class_token};
  std::vector<Tensor> center_rows;
  for (std::size_t s = 0; s < patches.scales.size(); ++s) {
    const auto& sp = patches.scales[s];
    tokens.push_back(slfe_forward(sp.patches, model.extractors[s], model.config.ablation));
    const std::size_t c = sp.centers.dim(1);
    std::vector<double> xyz;
    for (std::size_t i = 0; i < sp.centers.dim(0); ++i) {
      for (std::size_t k = 0; k < 3; ++k) xyz.push_back(sp.centers[i * c + k]);
    }
    center_rows.push_back(Tensor({sp.centers.dim(0), 3}, std::move(xyz)));
  }
  std::vector<Tensor> position_inputs{model.class_center};
  position_inputs.insert(position_inputs.end(), center_rows.begin(), center_rows.end());
  const Tensor positions = model.pos_fc2(gelu(model.pos_fc1(concat(position_inputs, 0))));
  return add(concat(tokens, 0), positions);
}

Tensor embed(const PointCloud& cloud, const MgtModel& model, std::optional<std::uint64_t> fps_seed) {
  if (cloud.channels != model.config.channels) {
    throw ConfigError("cloud has " + std::to_string(cloud.channels) + " channels, model expects " +
                      std::to_string(model.config.channels));
  }
  const PatchSet patches = fps_seed ? divide_seeded(cloud, model.config.scales, *fps_seed)
                                    : divide(cloud, model.config.scales, 0);
  return embed_patches(patches, model);
}

Tensor encode(const Tensor& tokens, const MgtModel& model) {
  Tensor z = tokens;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    try {
      z = add(z, attend(layer.attn_norm(z), layer.attention, model.config.attention).output);
      z = add(z, layer.fc2(gelu(layer.fc1(layer.mlp_norm(z)))));
    } catch (const NumericError& e) {
      throw NumericError("encoder layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return z;
}

Tensor encoder_forward(const Tensor& tokens, const MgtModel& model) {
  const Tensor z = encode(tokens, model);
  const std::size_t first[] = {0};
  return model.head(model.final_norm(gather(z, first)));
}

Tensor forward(const PointCloud& cloud, const MgtModel& model, std::optional<std::uint64_t> fps_seed) {
  return encoder_forward(embed(cloud, model, fps_seed), model);
}

Prediction predict(const PointCloud& cloud, const MgtModel& model) {
  NoGradScope no_grad;
  const Tensor probs = softmax_rows(forward(cloud, model));
  Prediction p;
  p.probabilities.assign(probs.data().begin(), probs.data().end());
  for (std::size_t c = 1; c < p.probabilities.size(); ++c) {
    if (p.probabilities[c] > p.probabilities[p.label]) p.label = c;
  }
  return p;
}

}  // namespace mgt
