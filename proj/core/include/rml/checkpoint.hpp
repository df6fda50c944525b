#pragma once

#include <filesystem>

#include "rml/fusion.hpp"

namespace rml {

// Binary model file: the magic line "RML-CKPT-1\n", a little-endian u64 JSON
// metadata length, the metadata itself (configuration plus an ordered tensor
// directory with names and shapes), then every tensor's values concatenated
// as little-endian IEEE-754 doubles in row-major order.
inline constexpr char kCheckpointMagic[] = "RML-CKPT-1\n";

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rml
