#include "leaflet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "jsonl.hpp"
#include "leaflet/error.hpp"

namespace leaflet::corpus {

namespace fs = std::filesystem;
using detail::json;

std::string_view to_string(Split split) {
    return split == Split::train ? "train" : "test";
}

Split split_from_string(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    throw PreconditionError("unknown split '" + std::string(text) + "' (expected train or test)");
}

std::vector<const ImageRecord*> CorpusManifest::split(Split which) const {
    std::vector<const ImageRecord*> out;
    for (const auto& r : records)
        if (r.split == which) out.push_back(&r);
    return out;
}

CorpusManifest load_manifest(const fs::path& path) {
    CorpusManifest manifest;
    manifest.base_dir = path.parent_path();
    bool have_header = false;

    detail::read_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto type = detail::field<std::string>(obj, "type", path, line);
        if (type == "header") {
            if (have_header) throw ParseError(path.string(), line, "duplicate header record");
            manifest.version = detail::field<std::string>(obj, "version", path, line);
            manifest.classes = detail::field<std::vector<std::string>>(obj, "classes", path, line);
            have_header = true;
            return;
        }
        if (type != "image") throw ParseError(path.string(), line, "unknown record type '" + type + "'");
        if (!have_header) throw ParseError(path.string(), line, "image record before header");

        ImageRecord r;
        r.image_id = detail::field<std::string>(obj, "image_id", path, line);
        r.class_id = detail::field<int>(obj, "class_id", path, line);
        const auto split = detail::field<std::string>(obj, "split", path, line);
        try {
            r.split = split_from_string(split);
        } catch (const PreconditionError& e) {
            throw ParseError(path.string(), line, e.what());
        }
        r.retailer_id = detail::field<std::string>(obj, "retailer_id", path, line);
        r.path = detail::field<std::string>(obj, "path", path, line);
        r.width = detail::field<int>(obj, "width", path, line);
        r.height = detail::field<int>(obj, "height", path, line);
        manifest.records.push_back(std::move(r));
    });
    return manifest;
}

void save_manifest(const CorpusManifest& manifest, const fs::path& path) {
    std::string out = json{{"type", "header"}, {"version", manifest.version}, {"classes", manifest.classes}}.dump();
    out += '\n';
    for (const auto& r : manifest.records) {
        out += json{{"type", "image"},
                    {"image_id", r.image_id},
                    {"class_id", r.class_id},
                    {"split", to_string(r.split)},
                    {"retailer_id", r.retailer_id},
                    {"path", r.path},
                    {"width", r.width},
                    {"height", r.height}}
                   .dump();
        out += '\n';
    }
    detail::write_atomically(path, out);
}

ValidationReport validate_corpus(const CorpusManifest& manifest, int expected_train, int expected_test) {
    ValidationReport report;
    auto& v = report.violations;
    const int n_classes = static_cast<int>(manifest.classes.size());

    std::unordered_map<std::string, int> seen_ids;
    struct ClassTally {
        int train = 0;
        int test = 0;
        std::set<std::string> train_retailers;
        std::set<std::string> test_retailers;
        bool unknown_retailer = false;
    };
    std::vector<ClassTally> tally(n_classes);

    for (const auto& r : manifest.records) {
        if (++seen_ids[r.image_id] > 1)
            v.push_back({"duplicate_image_id", r.class_id, r.image_id, "image_id occurs more than once"});

        if (r.width < kMinWidth || r.height < kMinHeight)
            v.push_back({"min_resolution", r.class_id, r.image_id,
                         std::to_string(r.width) + "x" + std::to_string(r.height) + " is below the " +
                             std::to_string(kMinWidth) + "x" + std::to_string(kMinHeight) + " minimum"});
        if (std::max(r.width, r.height) > kMaxLongEdge)
            v.push_back({"max_resolution", r.class_id, r.image_id,
                         "longer edge exceeds " + std::to_string(kMaxLongEdge)});

        if (r.class_id < 0 || r.class_id >= n_classes) {
            v.push_back({"unknown_class", r.class_id, r.image_id,
                         "class_id " + std::to_string(r.class_id) + " is not in the class table"});
            continue;
        }
        auto& t = tally[r.class_id];
        if (r.retailer_id == kUnknownRetailer) t.unknown_retailer = true;
        if (r.split == Split::train) {
            ++t.train;
            t.train_retailers.insert(r.retailer_id);
        } else {
            ++t.test;
            t.test_retailers.insert(r.retailer_id);
        }
    }

    for (int c = 0; c < n_classes; ++c) {
        const auto& t = tally[c];
        if (t.train != expected_train)
            v.push_back({"train_count", c, "",
                         "expected " + std::to_string(expected_train) + " training images, found " +
                             std::to_string(t.train)});
        if (t.test != expected_test)
            v.push_back({"test_count", c, "",
                         "expected " + std::to_string(expected_test) + " test images, found " +
                             std::to_string(t.test)});
        if (t.unknown_retailer) continue;
        for (const auto& retailer : t.train_retailers)
            if (t.test_retailers.contains(retailer))
                v.push_back({"retailer_disjoint", c, "",
                             "retailer '" + retailer + "' appears in both train and test"});
    }

    std::stable_sort(v.begin(), v.end(), [](const Violation& a, const Violation& b) {
        return std::tie(a.class_id, a.image_id, a.rule, a.message) <
               std::tie(b.class_id, b.image_id, b.rule, b.message);
    });
    return report;
}

CorpusManifest manifest_from_directory(const fs::path& root) {
    CorpusManifest manifest;
    manifest.base_dir = root;

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());

    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        manifest.classes.push_back(class_dirs[c].filename().string());
        for (const Split split : {Split::train, Split::test}) {
            const auto split_dir = class_dirs[c] / std::string(to_string(split));
            if (!fs::is_directory(split_dir)) continue;
            std::vector<fs::path> files;
            for (const auto& entry : fs::recursive_directory_iterator(split_dir))
                if (entry.is_regular_file()) files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& file : files) {
                const auto rel = fs::relative(file, root);
                const auto retailer = fs::relative(file.parent_path(), split_dir);
                const cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
                if (img.empty()) continue;  // not an image
                ImageRecord r;
                r.image_id = rel.generic_string();
                r.class_id = static_cast<int>(c);
                r.split = split;
                r.retailer_id = retailer.empty() || retailer == "." ? std::string(kUnknownRetailer)
                                                                   : retailer.generic_string();
                r.path = rel.generic_string();
                r.width = img.cols;
                r.height = img.rows;
                manifest.records.push_back(std::move(r));
            }
        }
    }
    return manifest;
}

cv::Mat load_image(const fs::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw Error("cannot decode image " + path.string());
    return img;
}

cv::Mat resize_longest_edge(const cv::Mat& image, int target) {
    if (target <= 0) throw PreconditionError("resize target must be positive");
    if (image.empty() || image.cols <= 0 || image.rows <= 0)
        throw PreconditionError("cannot resize a zero-dimension image");

    const int longer = std::max(image.cols, image.rows);
    if (longer == target) return image.clone();

    const double scale = static_cast<double>(target) / longer;
    int width = target;
    int height = target;
    if (image.cols >= image.rows)
        height = std::max(1, static_cast<int>(std::lround(image.rows * scale)));
    else
        width = std::max(1, static_cast<int>(std::lround(image.cols * scale)));

    cv::Mat out;
    cv::resize(image, out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    return out;
}

}  // namespace leaflet::corpus
