#pragma once

#include "edr/trainer.hpp"

namespace edr {

// Checkpoint file: magic `EDRC`, u32 version, little-endian throughout.
// Two tensor sections (model, then `opt/`-prefixed optimizer accumulators),
// each a u32-counted manifest of (name, rank, u64 dims, precision tag)
// followed by raw payloads in manifest order, then a key-value string
// trailer (lambda, dims, vocab sizes, update counter, seed).
inline constexpr char kCheckpointMagic[4] = {'E', 'D', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// Tensor names in manifest order (model section then optimizer section).
std::vector<std::string> checkpoint_manifest(const std::filesystem::path& path);

}  // namespace edr
