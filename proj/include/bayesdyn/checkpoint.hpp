#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "bayesdyn/polykernel_net.hpp"

namespace bayesdyn {

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  double dropout_rate = 0.0;
  double h = 0.0;
  std::string created_by_version;
};

struct Checkpoint {
  WeightSet weights;
  CheckpointMetadata metadata;
};

/// JSON with every number written to 17 significant digits so it parses
/// back to the identical double.
std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace bayesdyn
