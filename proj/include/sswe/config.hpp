#pragma once

#include <filesystem>
#include <string>

#include "sswe/phantom.hpp"
#include "sswe/train.hpp"
#include "sswe/tsne.hpp"
#include "sswe/unet.hpp"

namespace sswe {

/// Every tunable of a run. Serialized as JSON with one object per section;
/// files may omit fields (defaults apply) but unknown keys are rejected.
struct RunConfig {
  PhantomConfig phantom;
  NetConfig net;
  TrainConfig train;
  EmbeddingConfig embedding;
};

std::string to_json(const RunConfig& config);
std::string to_json(const NetConfig& config);
std::string to_json(const TrainConfig& config);

/// Throws std::invalid_argument on malformed text, unknown keys or bad types.
RunConfig parse_run_config(const std::string& text);
NetConfig parse_net_config(const std::string& text);
TrainConfig parse_train_config(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace sswe
