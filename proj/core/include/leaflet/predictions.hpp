#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "leaflet/fusion.hpp"

namespace leaflet::fusion {

/// Contents of a prediction JSON Lines file: a header followed by one record per image.
struct PredictionFile {
    std::vector<std::string> classes;
    double text_weight = kDefaultTextWeight;
    std::size_t top_k = kDefaultTopK;
    std::string image_source = "native";  ///< "native" or the external scores' source
    std::vector<PredictionRecord> records;
};

/// With `include_probabilities == false` the three probability vectors are elided.
void save_predictions(const PredictionFile& file, const std::filesystem::path& path,
                      bool include_probabilities = true);
PredictionFile load_predictions(const std::filesystem::path& path);

}  // namespace leaflet::fusion
