#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mgt/attention.hpp"
#include "mgt/geometry.hpp"
#include "mgt/nn.hpp"
#include "mgt/slfe.hpp"

namespace mgt {

inline constexpr std::size_t kPositionHidden = 128;

struct ModelConfig {
  ScaleConfig scales = {{32, 64}, {64, 32}, {128, 16}, {256, 8}};
  std::size_t channels = 3;  // C_in, 3 or 6
  std::size_t width = 256;   // d_out
  std::size_t depth = 4;     // L
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 40;
  AttentionConfig attention;
  SlfeAblation ablation;

  void validate() const;
  // Class token plus one token per patch over all scales.
  std::size_t token_count() const;
  bool operator==(const ModelConfig&) const = default;
};

// Pre-norm block: z += Attn(LN(z)); z += MLP(LN(z)).
struct EncoderLayer {
  LayerNorm attn_norm;
  AttentionParams attention;
  LayerNorm mlp_norm;
  Linear fc1;
  Linear fc2;

  void collect(ParamList& out, const std::string& prefix);
};

struct MgtModel {
  ModelConfig config;
  std::vector<SlfeParams> extractors;  // one per scale
  Tensor class_token;                  // E_0, [1, d]
  Tensor class_center;                 // CT_cls, [1, 3]
  Linear pos_fc1;                      // 3 -> 128
  Linear pos_fc2;                      // 128 -> d
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;
  Linear head;  // d -> num_classes

  static MgtModel init(const ModelConfig& config, std::uint64_t seed);

  // Stable order; names are the checkpoint keys.
  ParamList parameters();
  std::size_t parameter_count() const;
};

// Token sequence z_0 [1 + S, d]. Without `fps_seed` the FPS start is pinned to index 0.
Tensor embed(const PointCloud& cloud, const MgtModel& model, std::optional<std::uint64_t> fps_seed = std::nullopt);
Tensor embed_patches(const PatchSet& patches, const MgtModel& model);

// Runs the encoder stack, returning z_L.
Tensor encode(const Tensor& tokens, const MgtModel& model);
// Logits [1, num_classes] from head(LN(z_L[0])).
Tensor encoder_forward(const Tensor& tokens, const MgtModel& model);

Tensor forward(const PointCloud& cloud, const MgtModel& model, std::optional<std::uint64_t> fps_seed = std::nullopt);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

// Evaluation-mode prediction; ties resolve to the lowest class index.
Prediction predict(const PointCloud& cloud, const MgtModel& model);

}  // namespace mgt
