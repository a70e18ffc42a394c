#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prednext/nn.hpp"

namespace prednext {

struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

using CheckpointMap = std::map<std::string, CheckpointEntry>;

// Flat name -> array map with dtype/shape headers, little-endian,
// format tag "prednext-ckpt-v1".
void save_checkpoint(const std::filesystem::path& path, const CheckpointMap& map);
CheckpointMap load_checkpoint(const std::filesystem::path& path);

// Collects parameters and buffers from a registry, optionally dropping
// entries whose name starts with `exclude_prefix`.
CheckpointMap registry_to_checkpoint(const ParamRegistry& reg,
                                     const std::string& exclude_prefix = "");
// Applies values; throws on any shape mismatch or missing entry.
void checkpoint_to_registry(const CheckpointMap& map, ParamRegistry& reg,
                            const std::string& exclude_prefix = "");

}  // namespace prednext
