#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "leaflet/ocr.hpp"

namespace leaflet::ocr {

/// Append-only JSON Lines store of ExtractedDocument records.
///
/// Header lines `{"type":"header","engine_version":...,"methods_version":...}`
/// mark the versions in effect for the lines that follow. Only documents whose
/// versions match the cache's own are visible; stale lines stay on disk but are
/// ignored. Appends from concurrent workers are serialized internally.
class ExtractionCache {
public:
    ExtractionCache(std::filesystem::path path, std::string engine_version,
                    std::string methods_version = std::string(kMethodsVersion));

    ExtractionCache(const ExtractionCache&) = delete;
    ExtractionCache& operator=(const ExtractionCache&) = delete;

    std::optional<ExtractedDocument> find(const std::string& image_id) const;
    void store(const ExtractedDocument& document);

    std::size_t size() const;
    const std::string& engine_version() const noexcept { return engine_version_; }
    const std::string& methods_version() const noexcept { return methods_version_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::string engine_version_;
    std::string methods_version_;
    mutable std::mutex mutex_;
    std::map<std::string, ExtractedDocument> entries_;
};

/// Reads the documents of a cache file for the versions named by its last header.
std::map<std::string, ExtractedDocument> read_cache_documents(const std::filesystem::path& path);

}  // namespace leaflet::ocr
