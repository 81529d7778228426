#include "mgt/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mgt/error.hpp"

namespace mgt {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return parse_unsigned<std::size_t>(key, value);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  return parse_unsigned<std::uint64_t>(key, value);
}

double parse_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected on/off, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_bool(bool v) { return v ? "on" : "off"; }

ScaleConfig parse_scales(const std::string& text) {
  ScaleConfig scales;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw ConfigError("scales: expected K:S entries, got '" + text + "'");
    scales.push_back({parse_size("scales", std::string(trim(item.substr(0, colon)))),
                      parse_size("scales", std::string(trim(item.substr(colon + 1))))});
  }
  if (scales.empty()) throw ConfigError("scales: empty list");
  return scales;
}

std::string format_scales(const ScaleConfig& scales) {
  std::string out;
  for (const auto& s : scales) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.patch_size) + ":" + std::to_string(s.patch_count);
  }
  return out;
}

void store_model_config(KeyValues& kv, const ModelConfig& c) {
  kv["scales"] = format_scales(c.scales);
  kv["channels"] = std::to_string(c.channels);
  kv["d_out"] = std::to_string(c.width);
  kv["depth"] = std::to_string(c.depth);
  kv["mlp_ratio"] = std::to_string(c.mlp_ratio);
  kv["num_classes"] = std::to_string(c.num_classes);
  kv["attention"] = to_string(c.attention.kind);
  kv["factors"] = std::to_string(c.attention.factors);
  kv["temperature"] = format_double(c.attention.temperature);
  kv["sphere_map"] = format_bool(c.ablation.sphere_map);
  kv["mrc"] = format_bool(c.ablation.mrc);
}

ModelConfig load_model_config(const KeyValues& kv) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("scales")) c.scales = parse_scales(*v);
  if (auto v = get("channels")) c.channels = parse_size("channels", *v);
  if (auto v = get("d_out")) c.width = parse_size("d_out", *v);
  if (auto v = get("depth")) c.depth = parse_size("depth", *v);
  if (auto v = get("mlp_ratio")) c.mlp_ratio = parse_size("mlp_ratio", *v);
  if (auto v = get("num_classes")) c.num_classes = parse_size("num_classes", *v);
  if (auto v = get("attention")) c.attention.kind = parse_attention_kind(*v);
  if (auto v = get("factors")) c.attention.factors = parse_size("factors", *v);
  if (auto v = get("temperature")) c.attention.temperature = parse_double("temperature", *v);
  if (auto v = get("sphere_map")) c.ablation.sphere_map = parse_bool("sphere_map", *v);
  if (auto v = get("mrc")) c.ablation.mrc = parse_bool("mrc", *v);
  return c;
}

void store_train_config(KeyValues& kv, const TrainConfig& c) {
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["lr"] = format_double(c.lr);
  kv["momentum"] = format_double(c.momentum);
  kv["weight_decay"] = format_double(c.weight_decay);
  kv["smoothing"] = format_double(c.smoothing);
  kv["scale_lo"] = format_double(c.aug.scale_lo);
  kv["scale_hi"] = format_double(c.aug.scale_hi);
  kv["jitter_std"] = format_double(c.aug.jitter_std);
  kv["jitter_clip"] = format_double(c.aug.jitter_clip);
  kv["max_drop_ratio"] = format_double(c.aug.max_drop_ratio);
  kv["seed"] = std::to_string(c.seed);
}

TrainConfig load_train_config(const KeyValues& kv) {
  TrainConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("batch_size")) c.batch_size = parse_size("batch_size", *v);
  if (auto v = get("epochs")) c.epochs = parse_size("epochs", *v);
  if (auto v = get("lr")) c.lr = parse_double("lr", *v);
  if (auto v = get("momentum")) c.momentum = parse_double("momentum", *v);
  if (auto v = get("weight_decay")) c.weight_decay = parse_double("weight_decay", *v);
  if (auto v = get("smoothing")) c.smoothing = parse_double("smoothing", *v);
  if (auto v = get("scale_lo")) c.aug.scale_lo = parse_double("scale_lo", *v);
  if (auto v = get("scale_hi")) c.aug.scale_hi = parse_double("scale_hi", *v);
  if (auto v = get("jitter_std")) c.aug.jitter_std = parse_double("jitter_std", *v);
  if (auto v = get("jitter_clip")) c.aug.jitter_clip = parse_double("jitter_clip", *v);
  if (auto v = get("max_drop_ratio")) c.aug.max_drop_ratio = parse_double("max_drop_ratio", *v);
  if (auto v = get("seed")) c.seed = parse_u64("seed", *v);
  return c;
}

}  // namespace mgt
