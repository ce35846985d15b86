#pragma once

// Checkpoint container: magic "CLAWCKPT1", the config as a canonical
// key=value text block, then every stored tensor in declaration order as
// (length-prefixed name, rank, 64-bit little-endian extents, 32-bit
// little-endian float values). Round-trips are bit-exact.

#include <string>

#include "claw/model.hpp"

namespace claw {

inline constexpr char kCheckpointMagic[] = "CLAWCKPT1";

std::string config_to_text(const ModelConfig& config);
ModelConfig config_from_text(const std::string& text);

void save_checkpoint(const std::string& path, ClawNet<float>& net);
ClawNet<float> load_checkpoint(const std::string& path);

/// Reads only the embedded config block.
ModelConfig peek_checkpoint_config(const std::string& path);

}  // namespace claw
