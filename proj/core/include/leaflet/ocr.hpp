#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

namespace leaflet::ocr {

class ExtractionCache;

/// One OCR extraction method: image preprocessing followed by a single engine call.
struct ExtractionMethodSpec {
    int method_id = 1;
    bool grayscale = false;
    int upscale_factor = 1;  ///< 1 or 4
    bool otsu_binarize = false;
    int psm = 3;

    bool operator==(const ExtractionMethodSpec&) const = default;
};

/// Bumped whenever the method table or preprocessing changes; part of the cache key.
inline constexpr std::string_view kMethodsVersion = "methods-v1";

/// The eight extraction methods, ordered by method_id:
///   1-4 raw image with PSM 3, 6, 11, 12
///   5   grayscale, PSM 3
///   6-7 grayscale + 4x upscale, PSM 6 and 11
///   8   grayscale + 4x upscale + Otsu binarization, PSM 11
const std::array<ExtractionMethodSpec, 8>& canonical_methods();
const ExtractionMethodSpec& method_by_id(int method_id);

bool is_supported_psm(int psm);

/// Grayscale (BT.601 luma), then bilinear upscale, then Otsu binarization, each when enabled.
cv::Mat preprocess(const cv::Mat& image, const ExtractionMethodSpec& spec);

/// Collapses whitespace runs (including line breaks) to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Joins the non-empty method outputs with single spaces, keeping duplicates.
std::string join_method_texts(std::span<const std::string> texts);

struct ExtractedDocument {
    std::string image_id;
    std::vector<std::string> method_texts;  ///< one entry per method, in method_id order
    std::string document;
    std::string engine_version;
    std::string methods_version;

    bool operator==(const ExtractedDocument&) const = default;
};

/// Text recognizer behind `ocr_extract`. Implementations override `run`;
/// `recognize` validates the page segmentation mode first.
class OcrEngine {
public:
    virtual ~OcrEngine() = default;

    virtual std::string version() const = 0;

    /// Returns normalized text, "" when nothing was recognized or the engine failed
    /// recoverably. Throws PreconditionError for unsupported PSMs.
    std::string recognize(const cv::Mat& image, int psm) const;

protected:
    virtual std::string run(const cv::Mat& image, int psm) const = 0;
};

struct TesseractOptions {
    std::string binary = "tesseract";
    std::string languages = "deu+eng";
    std::chrono::milliseconds timeout{30'000};
};

/// Runs a tesseract-compatible CLI as a subprocess per call, capturing stdout.
class TesseractEngine final : public OcrEngine {
public:
    explicit TesseractEngine(TesseractOptions options = {});

    /// First line of `<binary> --version`. Throws EngineNotFound.
    std::string version() const override;

    const TesseractOptions& options() const noexcept { return options_; }

protected:
    std::string run(const cv::Mat& image, int psm) const override;

private:
    TesseractOptions options_;
    mutable std::mutex version_mutex_;
    mutable std::string version_;
};

/// Equivalent to `engine.recognize(image, psm)`.
std::string ocr_extract(const OcrEngine& engine, const cv::Mat& image, int psm);

/// Runs every method in `specs` over one image. A cache hit skips the engine entirely.
ExtractedDocument extract_document(const std::filesystem::path& image_path, const std::string& image_id,
                                   std::span<const ExtractionMethodSpec> specs, const OcrEngine& engine,
                                   ExtractionCache* cache = nullptr);

struct ExtractionJob {
    std::string image_id;
    std::filesystem::path path;
};

struct ExtractionFailure {
    std::string image_id;
    std::string message;
};

struct BatchResult {
    std::vector<ExtractedDocument> documents;  ///< sorted by image_id
    std::vector<ExtractionFailure> failures;   ///< sorted by image_id
};

/// Extracts many images on a bounded worker pool. Output order is independent of `workers`.
BatchResult extract_batch(std::span<const ExtractionJob> jobs, std::span<const ExtractionMethodSpec> specs,
                          const OcrEngine& engine, ExtractionCache* cache, std::size_t workers);

}  // namespace leaflet::ocr
