#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace leaflet {

/// Settings shared by the CLI subcommands and the review service.
struct PipelineConfig {
    std::filesystem::path manifest;
    std::filesystem::path cache;
    std::filesystem::path text_model;
    std::filesystem::path image_model;
    std::filesystem::path predictions;
    std::filesystem::path queue_dir;
    double text_weight = 2.0;
    std::size_t top_k = 3;
    std::size_t workers = 1;
    std::string engine = "tesseract";
    std::string languages = "deu+eng";
    long ocr_timeout_ms = 30'000;
    std::uint64_t seed = 42;
    std::string bind = "127.0.0.1:8080";
};

using Settings = std::map<std::string, std::string>;  ///< snake_case key -> raw value

/// Every key PipelineConfig understands, in snake_case.
const std::vector<std::string>& config_keys();

/// Environment variable consulted for a key: LEAFLET_ + upper-case key.
std::string env_name(const std::string& key);

/// Reads the LEAFLET_* variables for all known keys from the process environment.
Settings environment_settings();

/// Reads a flat JSON object of key/value pairs. Unknown keys are rejected.
Settings load_config_file(const std::filesystem::path& path);

/// Applies layers with precedence flags > environment > config file > defaults.
/// Throws PreconditionError on unknown keys or invalid values.
PipelineConfig resolve_config(const Settings& file, const Settings& environment, const Settings& flags);

}  // namespace leaflet
