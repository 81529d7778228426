#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgt/geometry.hpp"
#include "mgt/model.hpp"
#include "mgt/nn.hpp"

namespace mgt {

struct AugmentConfig {
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double jitter_std = 0.02;
  double jitter_clip = 0.05;
  double max_drop_ratio = 0.125;
  bool operator==(const AugmentConfig&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 250;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double smoothing = 0.2;
  AugmentConfig aug;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct Metrics {
  double oa = 0.0;    // trace(confusion) / total
  double macc = 0.0;  // mean per-class accuracy over classes present in the split
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

// Mean over the batch of cross-entropy against targets smoothed to
// 1 - s on the true class and s / (C - 1) elsewhere. logits: [B, C].
Tensor label_smooth_ce(const Tensor& logits, std::span<const std::size_t> targets, double smoothing);

// lr0 * (1 + cos(pi t / T)) / 2, clamped at zero.
double cosine_lr(std::size_t step, std::size_t total, double lr0);

// Momentum SGD: v = momentum v + g + wd p (decay-flagged params only); p -= lr v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const ParamList& params, const std::vector<std::vector<double>>& grads, double lr);
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// Random scale of xyz, clipped Gaussian jitter of xyz, and dropout of up to
// floor(max_drop_ratio * N) points, each replaced by the first surviving point.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& aug, std::mt19937_64& rng);

// Independent RNG seed for (seed, a, b); used for per-epoch and per-sample streams.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const std::size_t> predicted,
                        std::size_t num_classes);

// Evaluation mode: no augmentation, FPS start pinned. Throws on an empty split.
Metrics evaluate(const MgtModel& model, std::span<const PointCloud> split);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double test_oa = 0.0;
  double test_macc = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  MgtModel best;
  double best_oa = -1.0;
  std::size_t best_epoch = 0;  // 1-based, 0 before the first epoch
  std::size_t steps = 0;
};

// Called after every epoch; `improved` is true when `model` is the new best.
using EpochCallback = std::function<void(const EpochRecord& record, const MgtModel& model, bool improved)>;

TrainResult train(MgtModel& model, std::span<const PointCloud> train_split, std::span<const PointCloud> test_split,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// CSV with header `epoch,lr,train_loss,test_oa,test_macc`; values printed round-trip exact.
std::string metrics_csv(const std::vector<EpochRecord>& log);

}  // namespace mgt
