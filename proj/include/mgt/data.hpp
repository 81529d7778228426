#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgt/geometry.hpp"

namespace mgt {

// Text file of key=value lines: classes (comma separated), train, test, n_points, channels.
// Split paths are resolved relative to the manifest's directory.
struct DatasetManifest {
  std::vector<std::string> classes;
  std::string train;
  std::string test;
  std::size_t n_points = 0;
  std::size_t channels = 3;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// PCS1 split file, little-endian:
//   "PCS1" | version u32 = 1 | objects u32 | points per object u32 | channels u32
//   then per object: label u32 | N * C float32, row-major.
std::vector<std::uint8_t> encode_split(std::span<const PointCloud> clouds);
// Throws FormatError with the byte offset of the first problem. Clouds are normalized.
std::vector<PointCloud> decode_split(std::span<const std::uint8_t> bytes, std::size_t num_classes);

void save_split(const std::filesystem::path& path, std::span<const PointCloud> clouds);
std::vector<PointCloud> load_split(const std::filesystem::path& path, std::size_t num_classes);

struct Dataset {
  DatasetManifest manifest;
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

// Loads both splits and checks them against the manifest's point and channel counts.
Dataset load_dataset(const std::filesystem::path& manifest_path);

enum class ShapeKind { sphere, cube, cylinder, torus };

inline constexpr double kCubeHalfEdge = 1.0;
inline constexpr double kCylinderRadius = 1.0;
inline constexpr double kCylinderHalfHeight = 1.0;
inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.4;

const char* to_string(ShapeKind kind);

// Area-uniform samples on the canonical (unrotated, unit-size) surface; n x 3.
std::vector<double> sample_surface(ShapeKind kind, std::size_t n, std::mt19937_64& rng);

struct SyntheticDataset {
  std::vector<std::string> classes;
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

// Four classes (sphere, cube, cylinder, torus), `per_class` objects each, randomly
// rotated and scaled, then normalized. Per class two thirds go to train.
SyntheticDataset generate_synthetic(std::size_t per_class, std::size_t n_points, std::uint64_t seed);

// Writes manifest.txt, train.pcs and test.pcs into `dir`; returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);

// Keeps the `keep` points chosen by FPS from `start`, in their original order.
PointCloud fps_drop(const PointCloud& cloud, std::size_t keep, std::size_t start = 0);

}  // namespace mgt
