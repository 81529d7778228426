#include "mgt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "mgt/error.hpp"

namespace mgt {

PointCloud::PointCloud(std::size_t channels_, std::vector<double> coords_, std::size_t label_)
    : channels(channels_), coords(std::move(coords_)), label(label_) {
  if (channels != 3 && channels != 6) throw ConfigError("point clouds carry 3 (xyz) or 6 (xyz + normal) channels");
  if (coords.empty()) throw ConfigError("point cloud has no points");
  if (coords.size() % channels != 0) throw ConfigError("coordinate count is not a multiple of the channel count");
  for (double v : coords) {
    if (!std::isfinite(v)) throw ConfigError("point cloud contains a non-finite coordinate");
  }
}

double xyz_distance2(std::span<const double> a, std::span<const double> b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

void validate_scales(const ScaleConfig& scales, std::size_t n_points) {
  if (scales.empty() || scales.size() > 4) {
    throw ConfigError("scale list must hold between 1 and 4 entries, got " + std::to_string(scales.size()));
  }
  for (const auto& s : scales) {
    if (s.patch_size < 1 || s.patch_count < 1) throw ConfigError("patch size and patch count must be positive");
    if (s.patch_size > n_points || s.patch_count > n_points) {
      throw ConfigError("scale (K=" + std::to_string(s.patch_size) + ", S=" + std::to_string(s.patch_count) +
                        ") does not fit a cloud of " + std::to_string(n_points) + " points");
    }
  }
}

std::size_t fps_start_index(std::uint64_t seed, std::size_t n_points) {
  std::mt19937_64 rng(seed);
  return std::uniform_int_distribution<std::size_t>(0, n_points - 1)(rng);
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t count, std::size_t start) {
  const std::size_t n = cloud.size();
  if (count < 1 || count > n) {
    throw ConfigError("fps: cannot select " + std::to_string(count) + " of " + std::to_string(n) + " points");
  }
  if (start >= n) throw ConfigError("fps: start index out of range");

  std::vector<std::size_t> picked{start};
  picked.reserve(count);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  taken[start] = true;
  std::size_t last = start;
  while (picked.size() < count) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], xyz_distance2(cloud.point(i), cloud.point(last)));
      if (!taken[i] && (best == n || nearest[i] > nearest[best])) best = i;
    }
    taken[best] = true;
    picked.push_back(best);
    last = best;
  }
  return picked;
}

std::vector<std::size_t> fps_seeded(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  if (cloud.size() == 0) throw ConfigError("fps: empty cloud");
  return fps(cloud, count, fps_start_index(seed, cloud.size()));
}

std::vector<std::size_t> knn(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n) {
    throw ConfigError("knn: cannot take " + std::to_string(k) + " neighbors from " + std::to_string(n) + " points");
  }
  std::vector<std::size_t> out;
  out.reserve(centers.size() * k);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t c : centers) {
    if (c >= n) throw ConfigError("knn: center index out of range");
    for (std::size_t i = 0; i < n; ++i) dist[i] = {xyz_distance2(cloud.point(c), cloud.point(i)), i};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t j = 0; j < k; ++j) out.push_back(dist[j].second);
  }
  return out;
}

PatchSet divide(const PointCloud& cloud, const ScaleConfig& scales, std::size_t fps_start) {
  validate_scales(scales, cloud.size());
  const std::size_t c = cloud.channels;
  PatchSet set;
  for (const auto& scale : scales) {
    ScalePatches sp;
    sp.center_indices = fps(cloud, scale.patch_count, fps_start);
    sp.neighbor_indices = knn(cloud, sp.center_indices, scale.patch_size);

    std::vector<double> centers;
    centers.reserve(scale.patch_count * c);
    for (std::size_t idx : sp.center_indices) {
      auto p = cloud.point(idx);
      centers.insert(centers.end(), p.begin(), p.end());
    }
    std::vector<double> patches;
    patches.reserve(sp.neighbor_indices.size() * c);
    for (std::size_t idx : sp.neighbor_indices) {
      auto p = cloud.point(idx);
      patches.insert(patches.end(), p.begin(), p.end());
    }
    sp.centers = Tensor({scale.patch_count, c}, std::move(centers));
    sp.patches = Tensor({scale.patch_count, scale.patch_size, c}, std::move(patches));
    set.scales.push_back(std::move(sp));
  }
  return set;
}

PatchSet divide_seeded(const PointCloud& cloud, const ScaleConfig& scales, std::uint64_t seed) {
  if (cloud.size() == 0) throw ConfigError("divide: empty cloud");
  return divide(cloud, scales, fps_start_index(seed, cloud.size()));
}

PointCloud normalize(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n == 0) throw ConfigError("normalize: empty cloud");
  PointCloud out = cloud;
  double centroid[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) centroid[d] += cloud.point(i)[d];
  }
  for (double& v : centroid) v /= static_cast<double>(n);
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = out.point(i);
    double r2 = 0.0;
    for (int d = 0; d < 3; ++d) {
      p[d] -= centroid[d];
      r2 += p[d] * p[d];
    }
    max_norm = std::max(max_norm, std::sqrt(r2));
  }
  if (max_norm > 1e-12) {
    for (std::size_t i = 0; i < n; ++i) {
      auto p = out.point(i);
      for (int d = 0; d < 3; ++d) p[d] /= max_norm;
    }
  }
  return out;
}

}  // namespace mgt
