#include "mgt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mgt/error.hpp"
#include "mgt/ops.hpp"

namespace mgt {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
  if (!(aug.scale_lo > 0.0 && aug.scale_lo <= aug.scale_hi)) throw ConfigError("need 0 < scale_lo <= scale_hi");
  if (!(aug.jitter_std >= 0.0 && aug.jitter_clip >= 0.0)) throw ConfigError("jitter parameters must be non-negative");
  if (!(aug.max_drop_ratio >= 0.0 && aug.max_drop_ratio < 1.0)) throw ConfigError("max_drop_ratio must lie in [0, 1)");
}

Tensor label_smooth_ce(const Tensor& logits, std::span<const std::size_t> targets, double smoothing) {
  if (logits.rank() != 2) throw ConfigError("label_smooth_ce expects [B, C] logits");
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (targets.size() != batch) throw ConfigError("label_smooth_ce: one target per row required");
  if (classes < 2) throw ConfigError("label_smooth_ce: at least two classes required");

  std::vector<double> row_max(batch);
  std::vector<double> target_dist(batch * classes, smoothing / static_cast<double>(classes - 1));
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) throw ConfigError("label_smooth_ce: target out of range");
    auto row = logits.data().subspan(b * classes, classes);
    row_max[b] = *std::max_element(row.begin(), row.end());
    target_dist[b * classes + targets[b]] = 1.0 - smoothing;
  }
  // The shift is a constant: log-softmax is invariant to it.
  const Tensor shifted = sub(logits, Tensor({batch, 1}, std::move(row_max)));
  const Tensor log_probs = sub(shifted, log(sum_reduce(exp(shifted), 1, true)));
  const Tensor weighted = mul(log_probs, Tensor({batch, classes}, std::move(target_dist)));
  return mul_scalar(sum_all(weighted), -1.0 / static_cast<double>(batch));
}

double cosine_lr(std::size_t step, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return std::max(0.0, lr0 * (1.0 + std::cos(std::numbers::pi * t)) / 2.0);
}

void Sgd::step(const ParamList& params, const std::vector<std::vector<double>>& grads, double lr) {
  if (grads.size() != params.size()) throw ConfigError("sgd: gradient count does not match parameter count");
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.tensor->numel(), 0.0);
  }
  if (velocity_.size() != params.size()) throw ConfigError("sgd: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& param = *params[k].tensor;
    const auto& g = grads[k];
    auto& v = velocity_[k];
    if (g.size() != param.numel() || v.size() != param.numel()) {
      throw ConfigError("sgd: shape mismatch for '" + params[k].name + "'");
    }
    const double wd = params[k].decay ? weight_decay_ : 0.0;
    std::vector<double> updated(param.data().begin(), param.data().end());
    for (std::size_t i = 0; i < updated.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + wd * updated[i];
      updated[i] -= lr * v[i];
    }
    param = Tensor(param.shape(), std::move(updated), true);
  }
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& aug, std::mt19937_64& rng) {
  PointCloud out = cloud;
  const std::size_t n = out.size();
  const double scale = std::uniform_real_distribution<double>(aug.scale_lo, aug.scale_hi)(rng);
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = out.point(i);
    for (int d = 0; d < 3; ++d) {
      const double noise = std::clamp(aug.jitter_std * jitter(rng), -aug.jitter_clip, aug.jitter_clip);
      p[d] = p[d] * scale + noise;
    }
  }

  const auto max_drop = static_cast<std::size_t>(std::floor(aug.max_drop_ratio * static_cast<double>(n)));
  const std::size_t drop = std::uniform_int_distribution<std::size_t>(0, max_drop)(rng);
  if (drop > 0 && drop < n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> dropped(n, false);
    for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = true;
    std::size_t survivor = 0;
    while (dropped[survivor]) ++survivor;
    const std::vector<double> keep(out.point(survivor).begin(), out.point(survivor).end());
    for (std::size_t i = 0; i < n; ++i) {
      if (dropped[i]) std::copy(keep.begin(), keep.end(), out.point(i).begin());
    }
  }
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const std::size_t> predicted,
                        std::size_t num_classes) {
  if (labels.empty()) throw ConfigError("cannot compute metrics on an empty split");
  if (labels.size() != predicted.size()) throw ConfigError("label and prediction counts differ");
  Metrics m;
  m.total = labels.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predicted[i] >= num_classes) throw ConfigError("class index out of range");
    ++m.confusion[labels[i]][predicted[i]];
    if (labels[i] == predicted[i]) ++correct;
  }
  m.oa = static_cast<double>(correct) / static_cast<double>(m.total);
  double acc_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t row = std::accumulate(m.confusion[c].begin(), m.confusion[c].end(), std::size_t{0});
    if (row == 0) continue;
    acc_sum += static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
    ++present;
  }
  m.macc = acc_sum / static_cast<double>(present);
  return m;
}

Metrics evaluate(const MgtModel& model, std::span<const PointCloud> split) {
  if (split.empty()) throw ConfigError("evaluate: empty split");
  std::vector<std::size_t> labels, predicted;
  for (const auto& cloud : split) {
    labels.push_back(cloud.label);
    predicted.push_back(predict(cloud, model).label);
  }
  return compute_metrics(labels, predicted, model.config.num_classes);
}

TrainResult train(MgtModel& model, std::span<const PointCloud> train_split, std::span<const PointCloud> test_split,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_split.empty()) throw ConfigError("train: empty training split");
  for (const auto& c : train_split) {
    if (c.label >= model.config.num_classes) throw ConfigError("train: label out of range for the model");
  }

  TrainResult result;
  Sgd sgd(config.momentum, config.weight_decay);
  const std::size_t n = train_split.size();
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(stream_seed(config.seed, epoch, ~std::uint64_t{0}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + config.batch_size)));
      std::sort(batch.begin(), batch.end());

      ParamList params = model.parameters();
      std::vector<std::vector<double>> grads;
      for (const auto& p : params) grads.emplace_back(p.tensor->numel(), 0.0);
      const double inv_batch = 1.0 / static_cast<double>(batch.size());

      for (std::size_t idx : batch) {
        std::mt19937_64 rng(stream_seed(config.seed, epoch, idx));
        const PointCloud cloud = augment(train_split[idx], config.aug, rng);
        const std::uint64_t fps_seed = rng();
        Tape tape;
        Tensor loss;
        try {
          TapeScope scope(tape);
          const std::size_t target[] = {cloud.label};
          loss = label_smooth_ce(forward(cloud, model, fps_seed), target, config.smoothing);
          loss = mul_scalar(loss, inv_batch);
        } catch (const NumericError& e) {
          throw NumericError("non-finite value in batch " + std::to_string(batch_index) + ": " + e.what());
        }
        tape.backward(loss);
        loss_sum += loss.item() / inv_batch;
        for (std::size_t k = 0; k < params.size(); ++k) {
          const Tensor g = tape.grad(*params[k].tensor);
          auto gd = g.data();
          for (std::size_t i = 0; i < gd.size(); ++i) grads[k][i] += gd[i];
        }
      }
      sgd.step(params, grads, lr);
      ++result.steps;
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    record.lr = lr;
    record.train_loss = loss_sum / static_cast<double>(n);
    if (!test_split.empty()) {
      const Metrics m = evaluate(model, test_split);
      record.test_oa = m.oa;
      record.test_macc = m.macc;
    }
    const bool improved = record.test_oa > result.best_oa;
    if (improved) {
      result.best_oa = record.test_oa;
      result.best_epoch = epoch + 1;
      result.best = model;
    }
    result.log.push_back(record);
    if (on_epoch) on_epoch(record, model, improved);
  }
  return result;
}

std::string metrics_csv(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,lr,train_loss,test_oa,test_macc\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.test_oa,
                  r.test_macc);
    out += buf;
  }
  return out;
}

}  // namespace mgt
