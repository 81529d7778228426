#include "mgt/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bytes.hpp"
#include "mgt/config.hpp"
#include "mgt/error.hpp"

namespace mgt {

namespace bytes {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace bytes

namespace {

constexpr std::uint32_t kSplitVersion = 1;

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    out.push_back(a == std::string::npos ? std::string{} : item.substr(a, b - a + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const KeyValues kv = read_key_value_file(path);
  for (const auto& [key, value] : kv) {
    if (key != "classes" && key != "train" && key != "test" && key != "n_points" && key != "channels") {
      throw ConfigError("manifest '" + path.string() + "': unknown key '" + key + "'");
    }
  }
  for (const char* key : {"classes", "train", "test", "n_points", "channels"}) {
    if (!kv.contains(key)) throw ConfigError("manifest '" + path.string() + "' lacks key '" + key + "'");
  }
  DatasetManifest m;
  m.classes = split_csv(kv.at("classes"));
  m.train = kv.at("train");
  m.test = kv.at("test");
  m.n_points = parse_size("n_points", kv.at("n_points"));
  m.channels = parse_size("channels", kv.at("channels"));
  if (m.classes.size() < 2) throw ConfigError("manifest must list at least two classes");
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::string classes;
  for (const auto& c : m.classes) classes += (classes.empty() ? "" : ",") + c;
  KeyValues kv{{"classes", classes},
               {"train", m.train},
               {"test", m.test},
               {"n_points", std::to_string(m.n_points)},
               {"channels", std::to_string(m.channels)}};
  const std::string text = format_key_values(kv);
  bytes::write_file(path.string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> encode_split(std::span<const PointCloud> clouds) {
  bytes::Writer w;
  w.raw("PCS1");
  w.u32(kSplitVersion);
  w.u32(static_cast<std::uint32_t>(clouds.size()));
  const std::size_t n = clouds.empty() ? 0 : clouds.front().size();
  const std::size_t c = clouds.empty() ? 3 : clouds.front().channels;
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(c));
  for (const auto& cloud : clouds) {
    if (cloud.size() != n || cloud.channels != c) {
      throw ConfigError("all objects in a split must share point and channel counts");
    }
    w.u32(static_cast<std::uint32_t>(cloud.label));
    for (double v : cloud.coords) w.f32(static_cast<float>(v));
  }
  return w.take();
}

std::vector<PointCloud> decode_split(std::span<const std::uint8_t> data, std::size_t num_classes) {
  bytes::Reader r(data);
  if (r.raw(4, "magic") != "PCS1") throw FormatError("bad magic, expected PCS1", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kSplitVersion) throw FormatError("unsupported PCS1 version", version_at);
  const std::uint32_t count = r.u32("object count");
  const std::size_t points_at = r.offset();
  const std::uint32_t n = r.u32("points per object");
  const std::size_t channels_at = r.offset();
  const std::uint32_t c = r.u32("channels");
  std::vector<PointCloud> clouds;
  if (count == 0) return clouds;
  if (n == 0) throw FormatError("points per object must be positive", points_at);
  if (c != 3 && c != 6) throw FormatError("channels must be 3 or 6", channels_at);
  clouds.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t label_at = r.offset();
    const std::uint32_t label = r.u32("label");
    if (label >= num_classes) {
      throw FormatError("label " + std::to_string(label) + " out of range for " + std::to_string(num_classes) +
                            " classes",
                        label_at);
    }
    std::vector<double> coords(static_cast<std::size_t>(n) * c);
    for (double& v : coords) {
      const std::size_t at = r.offset();
      const float f = r.f32("coordinates");
      if (!std::isfinite(f)) throw FormatError("non-finite coordinate", at);
      v = f;
    }
    clouds.push_back(normalize(PointCloud(c, std::move(coords), label)));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last object", r.offset());
  return clouds;
}

void save_split(const std::filesystem::path& path, std::span<const PointCloud> clouds) {
  bytes::write_file(path.string(), encode_split(clouds));
}

std::vector<PointCloud> load_split(const std::filesystem::path& path, std::size_t num_classes) {
  return decode_split(bytes::read_file(path.string()), num_classes);
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  ds.train = load_split(resolve(ds.manifest.train), ds.manifest.classes.size());
  ds.test = load_split(resolve(ds.manifest.test), ds.manifest.classes.size());
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& cloud : *split) {
      if (cloud.size() != ds.manifest.n_points || cloud.channels != ds.manifest.channels) {
        throw ConfigError("dataset objects do not match the manifest's n_points/channels");
      }
    }
  }
  return ds;
}

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube: return "cube";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::torus: return "torus";
  }
  return "?";
}

std::vector<double> sample_surface(ShapeKind kind, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out;
  out.reserve(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    double p[3] = {0.0, 0.0, 0.0};
    switch (kind) {
      case ShapeKind::sphere: {
        double r = 0.0;
        while (r < 1e-9) {
          for (double& v : p) v = gauss(rng);
          r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        }
        for (double& v : p) v /= r;
        break;
      }
      case ShapeKind::cube: {
        const auto face = std::uniform_int_distribution<int>(0, 5)(rng);
        const int axis = face / 2;
        p[axis] = face % 2 == 0 ? -kCubeHalfEdge : kCubeHalfEdge;
        p[(axis + 1) % 3] = kCubeHalfEdge * (2.0 * unit(rng) - 1.0);
        p[(axis + 2) % 3] = kCubeHalfEdge * (2.0 * unit(rng) - 1.0);
        break;
      }
      case ShapeKind::cylinder: {
        const double side = two_pi * kCylinderRadius * 2.0 * kCylinderHalfHeight;
        const double caps = 2.0 * std::numbers::pi * kCylinderRadius * kCylinderRadius;
        if (unit(rng) * (side + caps) < side) {
          const double phi = two_pi * unit(rng);
          p[0] = kCylinderRadius * std::cos(phi);
          p[1] = kCylinderRadius * std::sin(phi);
          p[2] = kCylinderHalfHeight * (2.0 * unit(rng) - 1.0);
        } else {
          const double phi = two_pi * unit(rng);
          const double r = kCylinderRadius * std::sqrt(unit(rng));
          p[0] = r * std::cos(phi);
          p[1] = r * std::sin(phi);
          p[2] = unit(rng) < 0.5 ? -kCylinderHalfHeight : kCylinderHalfHeight;
        }
        break;
      }
      case ShapeKind::torus: {
        // Area element is proportional to (R + r cos theta).
        double theta = 0.0;
        do {
          theta = two_pi * unit(rng);
        } while (unit(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(theta));
        const double phi = two_pi * unit(rng);
        const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
        p[0] = ring * std::cos(phi);
        p[1] = ring * std::sin(phi);
        p[2] = kTorusMinor * std::sin(theta);
        break;
      }
    }
    out.insert(out.end(), p, p + 3);
  }
  return out;
}

namespace {

// Uniform random rotation from a normalized Gaussian quaternion.
std::array<double, 9> random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  double q[4];
  double norm = 0.0;
  while (norm < 1e-9) {
    for (double& v : q) v = gauss(rng);
    norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  }
  const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

}  // namespace

SyntheticDataset generate_synthetic(std::size_t per_class, std::size_t n_points, std::uint64_t seed) {
  if (n_points < 64) throw ConfigError("synthetic objects need at least 64 points");
  if (per_class < 1) throw ConfigError("per_class must be positive");
  constexpr ShapeKind kinds[] = {ShapeKind::sphere, ShapeKind::cube, ShapeKind::cylinder, ShapeKind::torus};
  SyntheticDataset ds;
  std::mt19937_64 rng(seed);
  const std::size_t test_per_class = per_class / 3;
  for (std::size_t label = 0; label < std::size(kinds); ++label) {
    ds.classes.emplace_back(to_string(kinds[label]));
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> pts = sample_surface(kinds[label], n_points, rng);
      const auto rot = random_rotation(rng);
      const double scale = std::uniform_real_distribution<double>(0.7, 1.3)(rng);
      for (std::size_t k = 0; k < n_points; ++k) {
        double* p = pts.data() + 3 * k;
        const double x = p[0], y = p[1], z = p[2];
        for (int r = 0; r < 3; ++r) p[r] = scale * (rot[3 * r] * x + rot[3 * r + 1] * y + rot[3 * r + 2] * z);
      }
      PointCloud cloud = normalize(PointCloud(3, std::move(pts), label));
      (i < per_class - test_per_class ? ds.train : ds.test).push_back(std::move(cloud));
    }
  }
  return ds;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  save_split(dir / "train.pcs", data.train);
  save_split(dir / "test.pcs", data.test);
  DatasetManifest m;
  m.classes = data.classes;
  m.train = "train.pcs";
  m.test = "test.pcs";
  const auto& any = data.train.empty() ? data.test : data.train;
  m.n_points = any.empty() ? 0 : any.front().size();
  m.channels = any.empty() ? 3 : any.front().channels;
  const auto path = dir / "manifest.txt";
  save_manifest(path, m);
  return path;
}

PointCloud fps_drop(const PointCloud& cloud, std::size_t keep, std::size_t start) {
  if (keep < 1) throw ConfigError("fps_drop: must keep at least one point");
  std::vector<std::size_t> picked = fps(cloud, keep, start);
  std::sort(picked.begin(), picked.end());
  std::vector<double> coords;
  coords.reserve(keep * cloud.channels);
  for (std::size_t idx : picked) {
    auto p = cloud.point(idx);
    coords.insert(coords.end(), p.begin(), p.end());
  }
  return PointCloud(cloud.channels, std::move(coords), cloud.label);
}

}  // namespace mgt
