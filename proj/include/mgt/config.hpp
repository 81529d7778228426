#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "mgt/geometry.hpp"
#include "mgt/model.hpp"
#include "mgt/training.hpp"

namespace mgt {

// Ordered so that formatting is deterministic.
using KeyValues = std::map<std::string, std::string>;

// One `key=value` per line; blank lines and lines starting with '#' are skipped,
// surrounding whitespace is trimmed. Duplicate keys are an error.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);
KeyValues read_key_value_file(const std::filesystem::path& path);

std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);  // on/off, true/false, 1/0
std::string format_double(double v);                                // round-trip exact
std::string format_bool(bool v);

// "K:S,K:S,..." e.g. "32:64,64:32".
ScaleConfig parse_scales(const std::string& text);
std::string format_scales(const ScaleConfig& scales);

// Keys: scales channels d_out depth mlp_ratio num_classes attention factors temperature sphere_map mrc
void store_model_config(KeyValues& kv, const ModelConfig& config);
// Keys absent from `kv` keep their defaults.
ModelConfig load_model_config(const KeyValues& kv);

// Keys: batch_size epochs lr momentum weight_decay smoothing scale_lo scale_hi
//       jitter_std jitter_clip max_drop_ratio seed
void store_train_config(KeyValues& kv, const TrainConfig& config);
TrainConfig load_train_config(const KeyValues& kv);

}  // namespace mgt
