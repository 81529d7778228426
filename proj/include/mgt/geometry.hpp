#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

// One object: N points of `channels` values each (xyz, optionally followed by a normal).
struct PointCloud {
  std::size_t channels = 3;
  std::vector<double> coords;  // N x channels, row-major
  std::size_t label = 0;

  PointCloud() = default;
  PointCloud(std::size_t channels, std::vector<double> coords, std::size_t label = 0);

  std::size_t size() const { return channels == 0 ? 0 : coords.size() / channels; }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * channels, channels}; }
  std::span<double> point(std::size_t i) { return {coords.data() + i * channels, channels}; }
};

// Squared Euclidean distance over the xyz channels of two points.
double xyz_distance2(std::span<const double> a, std::span<const double> b);

struct Scale {
  std::size_t patch_size;   // K, neighbors per patch
  std::size_t patch_count;  // S, number of patches
  bool operator==(const Scale&) const = default;
};

// Ordered small-K to large-K; between one and four entries.
using ScaleConfig = std::vector<Scale>;

// Throws ConfigError unless every scale fits a cloud of `n_points` points.
void validate_scales(const ScaleConfig& scales, std::size_t n_points);

struct ScalePatches {
  std::vector<std::size_t> center_indices;    // S
  std::vector<std::size_t> neighbor_indices;  // S x K, row-major, nearest first
  Tensor centers;                             // [S, C]
  Tensor patches;                             // [S, K, C]
};

struct PatchSet {
  std::vector<ScalePatches> scales;
};

// Start index for farthest point sampling drawn from `seed`.
std::size_t fps_start_index(std::uint64_t seed, std::size_t n_points);

// Greedy max-min selection of `count` points beginning at `start`. Each pick
// maximizes the xyz distance to the selected set; ties go to the lowest index.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t count, std::size_t start);
std::vector<std::size_t> fps_seeded(const PointCloud& cloud, std::size_t count, std::uint64_t seed);

// For each center (an index into the cloud), the `k` nearest points by xyz
// distance, ascending, ties to the lowest index. Result is centers.size() x k.
std::vector<std::size_t> knn(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k);

// FPS then KNN per scale. `fps_start` pins the first center of every scale.
PatchSet divide(const PointCloud& cloud, const ScaleConfig& scales, std::size_t fps_start);
PatchSet divide_seeded(const PointCloud& cloud, const ScaleConfig& scales, std::uint64_t seed);

// Centers xyz on the centroid and scales to unit max norm; other channels untouched.
PointCloud normalize(const PointCloud& cloud);

}  // namespace mgt
