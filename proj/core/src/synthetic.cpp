#include "leaflet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "leaflet/error.hpp"
#include "leaflet/extraction_cache.hpp"
#include "leaflet/ocr.hpp"

namespace leaflet::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr std::array kBrands = {"MILKANA", "KAFFEO",   "NUSSLI",  "BIOHOF",  "SONNTAG",   "CRUNCHY", "FRISCHLI",
                                "ALPENKUH", "GOLDKORN", "MEERBLAU", "WALDHOF", "TEEHAUS", "BERGQUELL", "OFENGOLD"};
constexpr std::array kProducts = {"Vollmilch", "Espresso", "Haselnuss", "Joghurt", "Muesli",  "Paprika", "Gouda",
                                  "Butter",    "Spaghetti", "Lachs",    "Erdbeer", "Kraeuter", "Wasser",  "Toast"};
constexpr std::array kSizes = {"250g", "290g", "400g", "500g", "125g", "750g", "1kg", "200g", "330ml", "150g"};
constexpr std::array kPromos = {"AKTION", "ANGEBOT", "SPAR", "NUR", "KNALLER"};
constexpr std::array kJunk = {"|", "~", "ii", "=", "Ee", "::", "1l"};

// Retailer tag colours (BGR); train retailers R01..R06, test retailers R07..R08.
constexpr std::array<std::array<int, 3>, 8> kRetailerColors = {{{30, 30, 200},
                                                                 {40, 140, 230},
                                                                 {30, 160, 30},
                                                                 {160, 40, 40},
                                                                 {130, 30, 130},
                                                                 {20, 180, 180},
                                                                 {90, 90, 90},
                                                                 {200, 120, 40}}};
constexpr int kTrainRetailers = 6;
constexpr int kTestRetailers = 2;

struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
    double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(engine); }
    bool chance(double p) { return uniform() < p; }
};

cv::Scalar hsv_color(double hue_deg, double s, double v) {
    cv::Mat hsv(1, 1, CV_32FC3, cv::Scalar(hue_deg, s, v));
    cv::Mat bgr;
    cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
    const auto px = bgr.at<cv::Vec3f>(0, 0);
    return {px[0] * 255.0, px[1] * 255.0, px[2] * 255.0};
}

struct Artwork {
    cv::Scalar background;
    cv::Scalar shape;
    int kind = 0;  // 0 rectangle, 1 circle, 2 triangle
};

Artwork artwork_for(int visual_id) {
    const double hue = std::fmod(visual_id * 0.6180339887 * 360.0, 360.0);
    Artwork a;
    a.background = hsv_color(hue, 0.30 + 0.05 * (visual_id % 3), 0.95);
    a.shape = hsv_color(std::fmod(hue + 150.0, 360.0), 0.85, 0.70 - 0.08 * (visual_id % 2));
    a.kind = visual_id % 3;
    return a;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

cv::Mat render_card(const SyntheticOptions& o, const ClassDesign& d, const std::string& promo,
                    const std::string& price, int retailer, Rng& rng) {
    const Artwork art = artwork_for(d.visual_id);
    cv::Scalar bg = art.background;
    for (int c = 0; c < 3; ++c) bg[c] = std::clamp(bg[c] + rng.uniform(-10, 10), 0.0, 255.0);
    cv::Mat card(o.height, o.width, CV_8UC3, bg);

    const int cx = o.width / 2 + rng.integer(-6, 6);
    const int cy = static_cast<int>(o.height * 0.40) + rng.integer(-6, 6);
    const int r = static_cast<int>(o.width * 0.28 * rng.uniform(0.9, 1.1));
    switch (art.kind) {
        case 0:
            cv::rectangle(card, {cx - r, cy - r * 3 / 4}, {cx + r, cy + r * 3 / 4}, art.shape, cv::FILLED);
            break;
        case 1:
            cv::circle(card, {cx, cy}, r, art.shape, cv::FILLED, cv::LINE_AA);
            break;
        default: {
            std::vector<cv::Point> tri{{cx, cy - r}, {cx - r, cy + r * 3 / 4}, {cx + r, cy + r * 3 / 4}};
            cv::fillConvexPoly(card, tri, art.shape, cv::LINE_AA);
            break;
        }
    }

    const auto& rc = kRetailerColors[static_cast<std::size_t>(retailer)];
    const cv::Scalar tag(rc[0], rc[1], rc[2]);
    cv::rectangle(card, {4, 4}, {64, 24}, tag, cv::FILLED);
    cv::putText(card, promo, {7, 19}, cv::FONT_HERSHEY_SIMPLEX, 0.32, {255, 255, 255}, 1, cv::LINE_AA);
    cv::putText(card, price, {o.width - 44, 19}, cv::FONT_HERSHEY_SIMPLEX, 0.4, tag, 1, cv::LINE_AA);

    const cv::Scalar ink(25, 25, 25);
    const int dx = rng.integer(-3, 3);
    const int dy = rng.integer(-3, 3);
    const auto space = d.text.find(' ');
    const std::string brand = d.text.substr(0, space);
    const std::string product = space == std::string::npos ? "" : d.text.substr(space + 1);
    cv::putText(card, brand, {8 + dx, o.height - 52 + dy}, cv::FONT_HERSHEY_SIMPLEX, 0.42, ink, 1, cv::LINE_AA);
    cv::putText(card, product, {8 + dx, o.height - 34 + dy}, cv::FONT_HERSHEY_SIMPLEX, 0.38, ink, 1, cv::LINE_AA);
    cv::putText(card, d.serving, {8 + dx, o.height - 14 + dy}, cv::FONT_HERSHEY_SIMPLEX, 0.36, ink, 1, cv::LINE_AA);

    for (int y = 0; y < card.rows; ++y) {
        auto* row = card.ptr<cv::Vec3b>(y);
        for (int x = 0; x < card.cols; ++x)
            for (int c = 0; c < 3; ++c)
                row[x][c] = cv::saturate_cast<uchar>(row[x][c] + rng.normal(5.0));
    }
    return card;
}

/// Noisy transcription of `tokens`, as one OCR method might produce it.
std::string simulate_method(const std::vector<std::string>& tokens, int method_id, Rng& rng) {
    // Preprocessed methods (5..8) read more reliably than the raw ones.
    const double p_empty = method_id <= 4 ? 0.20 : 0.10;
    const double p_drop = method_id <= 4 ? 0.25 : (method_id == 5 ? 0.18 : 0.10);
    const double p_char = method_id <= 4 ? 0.05 : (method_id == 5 ? 0.04 : 0.02);
    static const std::map<char, std::string> confusions{{'0', "O"}, {'o', "0"}, {'1', "l"}, {'l', "1"}, {'5', "S"},
                                                        {'s', "5"}, {'g', "9"}, {'9', "g"}, {'e', "c"}, {'a', "o"},
                                                        {'i', "l"}, {'m', "rn"}, {'B', "8"}, {'O', "0"}};
    if (rng.chance(p_empty)) return {};
    std::vector<std::string> out;
    for (const auto& token : tokens) {
        if (rng.chance(p_drop)) continue;
        std::string noisy;
        for (const char c : token) {
            auto it = confusions.find(c);
            if (it != confusions.end() && rng.chance(p_char))
                noisy += it->second;
            else
                noisy.push_back(c);
        }
        out.push_back(noisy);
        if (rng.chance(0.08)) out.emplace_back(kJunk[static_cast<std::size_t>(rng.integer(0, kJunk.size() - 1))]);
    }
    std::string text;
    for (const auto& t : out) {
        if (!text.empty()) text.push_back(' ');
        text += t;
    }
    return ocr::normalize_whitespace(text);
}

}  // namespace

std::vector<ClassDesign> class_designs(const SyntheticOptions& o) {
    const int structured = 4 * o.chains + 2 * o.extra_look_alike_pairs + 2 * o.extra_text_pairs;
    if (o.n_classes < 2 || structured > o.n_classes || o.chains < 0 || o.extra_look_alike_pairs < 0 ||
        o.extra_text_pairs < 0)
        throw PreconditionError("synthetic class layout does not fit the class count");

    std::vector<ClassDesign> designs;
    int visual = 0;
    int group = 0;
    auto text_of = [](int g) {
        return std::string(kBrands[static_cast<std::size_t>(g) % kBrands.size()]) + " " +
               kProducts[static_cast<std::size_t>(g * 5 + g / static_cast<int>(kProducts.size())) % kProducts.size()];
    };
    auto size_of = [](int g, int k) { return std::string(kSizes[static_cast<std::size_t>(g + 3 * k) % kSizes.size()]); };
    auto add = [&](int v, const std::string& text, const std::string& serving) {
        designs.push_back({"", v, text, serving});
    };

    for (int c = 0; c < o.chains; ++c, ++group, visual += 2) {
        const auto text = text_of(group);
        add(visual, text, size_of(group, 0));
        add(visual, text, size_of(group, 1));
        add(visual + 1, text, size_of(group, 1));
        add(visual + 1, text, size_of(group, 2));
    }
    for (int p = 0; p < o.extra_look_alike_pairs; ++p, ++group, ++visual) {
        add(visual, text_of(group), size_of(group, 0));
        add(visual, text_of(group), size_of(group, 1));
    }
    for (int p = 0; p < o.extra_text_pairs; ++p, ++group, visual += 2) {
        add(visual, text_of(group), size_of(group, 0));
        add(visual + 1, text_of(group), size_of(group, 0));
    }
    while (static_cast<int>(designs.size()) < o.n_classes) {
        add(visual++, text_of(group), size_of(group, 0));
        ++group;
    }

    for (std::size_t i = 0; i < designs.size(); ++i) {
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "c%02zu_", i);
        auto& d = designs[i];
        std::string name = prefix + lower(d.text) + "_" + d.serving;
        std::replace(name.begin(), name.end(), ' ', '_');
        d.name = name;
    }
    return designs;
}

std::vector<std::pair<int, int>> look_alike_pairs(const std::vector<ClassDesign>& designs) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t a = 0; a < designs.size(); ++a)
        for (std::size_t b = a + 1; b < designs.size(); ++b)
            if (designs[a].visual_id == designs[b].visual_id) out.emplace_back(a, b);
    return out;
}

std::vector<std::pair<int, int>> shared_text_pairs(const std::vector<ClassDesign>& designs) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t a = 0; a < designs.size(); ++a)
        for (std::size_t b = a + 1; b < designs.size(); ++b)
            if (designs[a].text == designs[b].text && designs[a].serving == designs[b].serving) out.emplace_back(a, b);
    return out;
}

SyntheticCorpus generate_synthetic_corpus(const fs::path& directory, const SyntheticOptions& o) {
    if (o.train_per_class < 1 || o.test_per_class < 1) throw PreconditionError("need train and test images per class");
    SyntheticCorpus out;
    out.designs = class_designs(o);
    out.manifest.base_dir = directory;
    out.manifest_path = directory / "manifest.jsonl";
    out.cache_path = directory / "ocr_cache.jsonl";
    for (const auto& d : out.designs) out.manifest.classes.push_back(d.name);

    fs::create_directories(directory);
    if (fs::exists(out.cache_path)) fs::remove(out.cache_path);
    ocr::ExtractionCache cache(out.cache_path, std::string(kSimulatedEngineVersion));

    Rng rng(o.seed);
    for (std::size_t c = 0; c < out.designs.size(); ++c) {
        const auto& design = out.designs[c];
        for (const auto split : {corpus::Split::train, corpus::Split::test}) {
            const bool train = split == corpus::Split::train;
            const int count = train ? o.train_per_class : o.test_per_class;
            for (int i = 0; i < count; ++i) {
                const int retailer = train ? i % kTrainRetailers : kTrainRetailers + i % kTestRetailers;
                char retailer_id[8];
                std::snprintf(retailer_id, sizeof retailer_id, "R%02d", retailer + 1);
                char image_id[48];
                std::snprintf(image_id, sizeof image_id, "c%02zu-%s-%03d", c, train ? "tr" : "te", i);

                const std::string promo(kPromos[static_cast<std::size_t>(rng.integer(0, kPromos.size() - 1))]);
                char price[16];
                std::snprintf(price, sizeof price, "%d.%02d", rng.integer(0, 4), rng.integer(0, 9) * 10 + 9);

                const cv::Mat card = render_card(o, design, promo, price, retailer, rng);
                const fs::path rel = fs::path("images") / design.name / std::string(corpus::to_string(split)) /
                                     retailer_id / (std::string(image_id) + ".png");
                fs::create_directories((directory / rel).parent_path());
                if (!cv::imwrite((directory / rel).string(), card))
                    throw Error("cannot write " + (directory / rel).string());

                corpus::ImageRecord record;
                record.image_id = image_id;
                record.class_id = static_cast<int>(c);
                record.split = split;
                record.retailer_id = retailer_id;
                record.path = rel.generic_string();
                record.width = card.cols;
                record.height = card.rows;
                out.manifest.records.push_back(record);

                const auto space = design.text.find(' ');
                std::vector<std::string> tokens{promo, design.text.substr(0, space), design.text.substr(space + 1),
                                                design.serving, price};
                ocr::ExtractedDocument doc;
                doc.image_id = image_id;
                doc.engine_version = std::string(kSimulatedEngineVersion);
                doc.methods_version = std::string(ocr::kMethodsVersion);
                for (const auto& method : ocr::canonical_methods())
                    doc.method_texts.push_back(simulate_method(tokens, method.method_id, rng));
                doc.document = ocr::join_method_texts(doc.method_texts);
                cache.store(doc);
            }
        }
    }
    corpus::save_manifest(out.manifest, out.manifest_path);
    return out;
}

}  // namespace leaflet::synthetic
