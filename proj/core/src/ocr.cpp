#include "leaflet/ocr.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "leaflet/corpus.hpp"
#include "leaflet/error.hpp"
#include "leaflet/extraction_cache.hpp"
#include "subprocess.hpp"

namespace leaflet::ocr {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kInstallHint =
    " (install a tesseract-compatible OCR engine, e.g. `apt install tesseract-ocr tesseract-ocr-deu`, "
    "or point --engine at the binary)";

/// Unique temp file that is removed when it goes out of scope.
class TempImage {
public:
    explicit TempImage(const cv::Mat& image) {
        static std::atomic<unsigned long> counter{0};
        path_ = fs::temp_directory_path() /
                ("leaflet-ocr-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".png");
        if (!cv::imwrite(path_.string(), image)) throw Error("cannot write temporary image " + path_.string());
    }
    ~TempImage() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    TempImage(const TempImage&) = delete;
    TempImage& operator=(const TempImage&) = delete;

    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

}  // namespace

const std::array<ExtractionMethodSpec, 8>& canonical_methods() {
    static const std::array<ExtractionMethodSpec, 8> table{{
        {1, false, 1, false, 3},
        {2, false, 1, false, 6},
        {3, false, 1, false, 11},
        {4, false, 1, false, 12},
        {5, true, 1, false, 3},
        {6, true, 4, false, 6},
        {7, true, 4, false, 11},
        {8, true, 4, true, 11},
    }};
    return table;
}

const ExtractionMethodSpec& method_by_id(int method_id) {
    if (method_id < 1 || method_id > 8) throw PreconditionError("method_id must be in 1..8");
    return canonical_methods()[static_cast<std::size_t>(method_id - 1)];
}

bool is_supported_psm(int psm) {
    return psm == 3 || psm == 6 || psm == 11 || psm == 12;
}

cv::Mat preprocess(const cv::Mat& image, const ExtractionMethodSpec& spec) {
    if (image.empty() || image.cols <= 0 || image.rows <= 0)
        throw PreconditionError("cannot preprocess a zero-dimension image");
    if (spec.otsu_binarize && !spec.grayscale) throw PreconditionError("Otsu binarization requires grayscale");
    if (spec.upscale_factor != 1 && spec.upscale_factor != 4)
        throw PreconditionError("upscale factor must be 1 or 4");

    cv::Mat out = image;
    if (spec.grayscale && out.channels() != 1) {
        cv::Mat gray;
        cv::cvtColor(out, gray, out.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
        out = gray;
    }
    if (spec.upscale_factor == 4) {
        cv::Mat big;
        cv::resize(out, big, cv::Size(out.cols * 4, out.rows * 4), 0, 0, cv::INTER_LINEAR);
        out = big;
    }
    if (spec.otsu_binarize) {
        cv::Mat binary;
        cv::threshold(out, binary, 0, 255, cv::THRESH_BINARY | cv::THRESH_OTSU);
        out = binary;
    }
    return out.data == image.data ? image.clone() : out;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (const char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch)) || ch == '\f') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

std::string join_method_texts(std::span<const std::string> texts) {
    std::string out;
    for (const auto& t : texts) {
        if (t.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

std::string OcrEngine::recognize(const cv::Mat& image, int psm) const {
    if (!is_supported_psm(psm))
        throw PreconditionError("unsupported page segmentation mode " + std::to_string(psm) +
                                " (expected 3, 6, 11 or 12)");
    return normalize_whitespace(run(image, psm));
}

TesseractEngine::TesseractEngine(TesseractOptions options) : options_(std::move(options)) {}

std::string TesseractEngine::version() const {
    std::lock_guard lock(version_mutex_);
    if (!version_.empty()) return version_;
    detail::ProcessResult result;
    try {
        result = detail::run_process({options_.binary, "--version"}, options_.timeout);
    } catch (const EngineNotFound& e) {
        throw EngineNotFound(e.what() + std::string(kInstallHint));
    }
    if (result.exit_code != 0)
        throw EngineNotFound("'" + options_.binary + " --version' failed" + std::string(kInstallHint));
    const std::string& text = result.out.empty() ? result.err : result.out;
    std::string first = text.substr(0, text.find('\n'));
    version_ = normalize_whitespace(first);
    if (version_.empty()) version_ = options_.binary;
    return version_;
}

std::string TesseractEngine::run(const cv::Mat& image, int psm) const {
    const TempImage input(image);
    std::vector<std::string> argv{options_.binary, input.path().string(), "stdout", "--psm", std::to_string(psm)};
    if (!options_.languages.empty()) {
        argv.emplace_back("-l");
        argv.push_back(options_.languages);
    }
    detail::ProcessResult result;
    try {
        result = detail::run_process(argv, options_.timeout);
    } catch (const EngineNotFound& e) {
        throw EngineNotFound(e.what() + std::string(kInstallHint));
    }
    if (result.timed_out) {
        spdlog::warn("OCR engine timed out after {} ms (psm {})", options_.timeout.count(), psm);
        return {};
    }
    if (result.exit_code != 0) {
        spdlog::warn("OCR engine exited with status {} (psm {}): {}", result.exit_code, psm,
                     normalize_whitespace(result.err));
        return {};
    }
    return result.out;
}

std::string ocr_extract(const OcrEngine& engine, const cv::Mat& image, int psm) {
    return engine.recognize(image, psm);
}

ExtractedDocument extract_document(const fs::path& image_path, const std::string& image_id,
                                   std::span<const ExtractionMethodSpec> specs, const OcrEngine& engine,
                                   ExtractionCache* cache) {
    if (cache) {
        if (auto hit = cache->find(image_id)) return *hit;
    }
    const cv::Mat image = corpus::load_image(image_path);

    std::vector<ExtractionMethodSpec> ordered(specs.begin(), specs.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.method_id < b.method_id; });

    ExtractedDocument doc;
    doc.image_id = image_id;
    doc.engine_version = cache ? cache->engine_version() : engine.version();
    doc.methods_version = cache ? cache->methods_version() : std::string(kMethodsVersion);
    for (const auto& spec : ordered) doc.method_texts.push_back(engine.recognize(preprocess(image, spec), spec.psm));
    doc.document = join_method_texts(doc.method_texts);

    if (cache) cache->store(doc);
    return doc;
}

BatchResult extract_batch(std::span<const ExtractionJob> jobs, std::span<const ExtractionMethodSpec> specs,
                          const OcrEngine& engine, ExtractionCache* cache, std::size_t workers) {
    if (workers == 0) throw PreconditionError("worker count must be at least 1");

    BatchResult result;
    std::mutex result_mutex;
    std::atomic<std::size_t> next{0};
    // A missing engine is fatal for the whole batch, not a per-image failure.
    std::exception_ptr fatal;

    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                auto doc = extract_document(jobs[i].path, jobs[i].image_id, specs, engine, cache);
                std::lock_guard lock(result_mutex);
                result.documents.push_back(std::move(doc));
            } catch (const EngineNotFound&) {
                std::lock_guard lock(result_mutex);
                if (!fatal) fatal = std::current_exception();
                next = jobs.size();
            } catch (const std::exception& e) {
                spdlog::warn("extraction failed for {}: {}", jobs[i].image_id, e.what());
                std::lock_guard lock(result_mutex);
                result.failures.push_back({jobs[i].image_id, e.what()});
            }
        }
    };

    const std::size_t width = std::min(workers, std::max<std::size_t>(jobs.size(), 1));
    if (width == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(width);
        for (std::size_t w = 0; w < width; ++w) pool.emplace_back(work);
    }
    if (fatal) std::rethrow_exception(fatal);

    std::sort(result.documents.begin(), result.documents.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    std::sort(result.failures.begin(), result.failures.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    return result;
}

}  // namespace leaflet::ocr
