#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mgt/model.hpp"
#include "mgt/training.hpp"

namespace mgt {

// MGTC, little-endian:
//   "MGTC" | version u32 = 1 | tensors u32
//   per tensor: name length u16 | name | ndim u8 | dims u32 x ndim | f64 data
//   then a u32 length-prefixed key=value block holding the model and train config.
struct Checkpoint {
  MgtModel model;
  TrainConfig train;
};

std::vector<std::uint8_t> encode_checkpoint(const MgtModel& model, const TrainConfig& train);
// Rebuilds the model from the stored config and fills every parameter by name.
// Missing, extra or misshapen tensors are a FormatError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const MgtModel& model, const TrainConfig& train);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mgt
