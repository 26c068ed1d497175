#pragma once

#include <filesystem>

#include "tbnet/training/trainer.hpp"

namespace tbnet {

/// Binary archive: magic, config/flags/taxonomy text, class weights, run
/// position, then named shape-tagged double tensors for every network tensor
/// and every optimizer accumulator ("optimizer/<parameter name>").
/// Written to a temporary file and renamed. Throws IoError on failure.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);

/// Rebuilds the network from the stored config and restores every tensor.
/// Throws LoadError on a missing, truncated or foreign file.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace tbnet
