#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "leaflet/corpus.hpp"

namespace leaflet::synthetic {

/// Engine version written into caches filled by the OCR simulator.
inline constexpr std::string_view kSimulatedEngineVersion = "simulated-ocr/1";

/// Layout of a deterministic corpus of rendered promotion cards.
///
/// Classes come in chains of four (0-3, 4-7): classes 4c and 4c+1 look alike,
/// 4c+1 and 4c+2 share text, 4c+2 and 4c+3 look alike. Further look-alike
/// pairs follow, then text-sharing pairs with distinct visuals. With the
/// defaults: 8 look-alike pairs and 4 text-sharing pairs over 20 classes.
struct SyntheticOptions {
    int n_classes = 20;
    int chains = 2;                  ///< groups of four classes, see above
    int extra_look_alike_pairs = 4;
    int extra_text_pairs = 2;        ///< remaining classes are singletons
    int train_per_class = 30;
    int test_per_class = 10;
    int width = 144;
    int height = 216;
    std::uint64_t seed = 20230601;
};

struct ClassDesign {
    std::string name;
    int visual_id = 0;       ///< classes with equal visual_id render identical artwork
    std::string text;        ///< product text printed on the card
    std::string serving;     ///< serving size printed on the card
};

struct SyntheticCorpus {
    std::filesystem::path manifest_path;
    std::filesystem::path cache_path;  ///< simulated OCR output for every image
    corpus::CorpusManifest manifest;
    std::vector<ClassDesign> designs;
};

/// Class layout for `options`; pure and deterministic.
std::vector<ClassDesign> class_designs(const SyntheticOptions& options);

/// Pairs (a, b) of classes that render identical artwork.
std::vector<std::pair<int, int>> look_alike_pairs(const std::vector<ClassDesign>& designs);
/// Pairs (a, b) of classes that print identical text.
std::vector<std::pair<int, int>> shared_text_pairs(const std::vector<ClassDesign>& designs);

/// Renders all cards under `directory`, writes `manifest.jsonl` and a simulated
/// OCR cache `ocr_cache.jsonl` holding noisy per-method transcriptions.
SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& directory,
                                          const SyntheticOptions& options = {});

}  // namespace leaflet::synthetic
