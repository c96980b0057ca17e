#pragma once

#include <filesystem>
#include <optional>

#include "sswe/train.hpp"
#include "sswe/unet.hpp"

namespace sswe {

/// A saved model. `state` carries the optimizer moments, scheduler and loss
/// history needed to resume training; every random draw of training is keyed
/// by (seed, epoch), so seed and epoch complete the RNG state.
struct Checkpoint {
  UNetParams<float> params;
  TrainConfig train;
  std::optional<TrainState> state;
};

/// Writes manifest.json and one little-endian float32 blob per tensor into
/// `dir` (created if needed). Wall-clock timings are not stored, so equal
/// runs give byte-identical checkpoints.
void save_checkpoint(const std::filesystem::path& dir, const UNetParams<float>& params, const TrainConfig& train,
                     const TrainState* state = nullptr);

/// Throws DataError on missing files or when layer names or shapes disagree
/// with the stored network config.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace sswe
