#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

namespace leaflet::corpus {

inline constexpr int kMinWidth = 92;
inline constexpr int kMinHeight = 138;
inline constexpr int kMaxLongEdge = 512;
inline constexpr int kDefaultTrainPerClass = 40;
inline constexpr int kDefaultTestPerClass = 10;

/// Retailer placeholder that switches off the split-disjointness rule for its class.
inline constexpr std::string_view kUnknownRetailer = "unknown";

enum class Split { train, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);  // throws PreconditionError

struct ImageRecord {
    std::string image_id;
    int class_id = 0;
    Split split = Split::train;
    std::string retailer_id;
    std::string path;  ///< relative to the manifest directory
    int width = 0;
    int height = 0;
};

struct CorpusManifest {
    std::string version = "1";
    std::vector<std::string> classes;  ///< index == class_id
    std::vector<ImageRecord> records;
    std::filesystem::path base_dir;    ///< directory relative paths resolve against

    std::filesystem::path resolve(const ImageRecord& record) const { return base_dir / record.path; }
    std::vector<const ImageRecord*> split(Split which) const;
};

struct Violation {
    std::string rule;      ///< e.g. "retailer_disjoint", "min_resolution"
    int class_id = -1;
    std::string image_id;  ///< empty for class-level violations
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    bool operator==(const ValidationReport&) const = default;
};

/// Parses a JSON Lines manifest. Records keep file order; no semantic checks.
CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Reports every broken structural rule, ordered by class_id then image_id.
ValidationReport validate_corpus(const CorpusManifest& manifest,
                                 int expected_train = kDefaultTrainPerClass,
                                 int expected_test = kDefaultTestPerClass);

/// Builds a manifest from a `<class>/<split>/<retailer>/<image>` tree. Classes sort by name.
CorpusManifest manifest_from_directory(const std::filesystem::path& root);

/// Decodes an image file as 8-bit BGR. Throws leaflet::Error when unreadable.
cv::Mat load_image(const std::filesystem::path& path);

/// Bilinear resize so that the longer edge equals `target`, aspect ratio kept.
cv::Mat resize_longest_edge(const cv::Mat& image, int target);

}  // namespace leaflet::corpus
