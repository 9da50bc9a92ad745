#pragma once

#include <filesystem>

#include "tram/model.hpp"

namespace tram {

// Versioned binary blob: config, the three vocabularies, all parameter
// tensors in creation order. Round trip is bit exact.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace tram
