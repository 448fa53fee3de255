#include "leaflet/image_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <opencv2/imgproc.hpp>

#include "jsonl.hpp"
#include "leaflet/corpus.hpp"
#include "leaflet/error.hpp"
#include "leaflet/fusion.hpp"

namespace leaflet::image {

using detail::json;

namespace {

constexpr std::string_view kFormat = "leaflet-image-model";
constexpr int kFormatVersion = 1;

cv::Mat as_bgr8(const cv::Mat& image) {
    if (image.empty() || image.cols <= 0 || image.rows <= 0) throw PreconditionError("empty image");
    if (image.depth() != CV_8U) throw PreconditionError("expected an 8-bit image");
    switch (image.channels()) {
        case 1: {
            cv::Mat out;
            cv::cvtColor(image, out, cv::COLOR_GRAY2BGR);
            return out;
        }
        case 3:
            return image;
        case 4: {
            cv::Mat out;
            cv::cvtColor(image, out, cv::COLOR_BGRA2BGR);
            return out;
        }
        default:
            throw PreconditionError("unsupported channel count " + std::to_string(image.channels()));
    }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double max = std::max({r, g, b});
    const double min = std::min({r, g, b});
    const double chroma = max - min;
    v = max;
    s = max > 0.0 ? chroma / max : 0.0;
    if (chroma == 0.0) {
        h = 0.0;
    } else if (max == r) {
        h = std::fmod((g - b) / chroma, 6.0);
        if (h < 0.0) h += 6.0;
    } else if (max == g) {
        h = (b - r) / chroma + 2.0;
    } else {
        h = (r - g) / chroma + 4.0;
    }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double chroma = v * s;
    const double x = chroma * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    const double m = v - chroma;
    double r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(h) % 6) {
        case 0: r1 = chroma; g1 = x; break;
        case 1: r1 = x; g1 = chroma; break;
        case 2: g1 = chroma; b1 = x; break;
        case 3: g1 = x; b1 = chroma; break;
        case 4: r1 = x; b1 = chroma; break;
        default: r1 = chroma; b1 = x; break;
    }
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

std::uint8_t to_byte(double unit) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageFeatureVector image_features(const cv::Mat& image) {
    const cv::Mat bgr = as_bgr8(image);
    ImageFeatureVector out;
    out.values.reserve(kFeatureLength);

    cv::Mat thumb;
    cv::resize(bgr, thumb, cv::Size(kThumbnailSide, kThumbnailSide), 0, 0, cv::INTER_LINEAR);
    for (int y = 0; y < thumb.rows; ++y) {
        const auto* row = thumb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < thumb.cols; ++x) {
            out.values.push_back(row[x][2] / 255.0);
            out.values.push_back(row[x][1] / 255.0);
            out.values.push_back(row[x][0] / 255.0);
        }
    }

    std::array<std::array<double, kHistogramBins>, 3> hist{};  // R, G, B
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            hist[0][row[x][2] >> 4] += 1.0;
            hist[1][row[x][1] >> 4] += 1.0;
            hist[2][row[x][0] >> 4] += 1.0;
        }
    }
    const double pixels = static_cast<double>(bgr.rows) * bgr.cols;
    for (const auto& channel : hist)
        for (const double count : channel) out.values.push_back(count / pixels);
    return out;
}

cv::Mat scale_saturation(const cv::Mat& image, double factor) {
    if (factor < 0.0) throw PreconditionError("saturation factor must be non-negative");
    const cv::Mat bgr = as_bgr8(image);
    cv::Mat out(bgr.size(), CV_8UC3);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* src = bgr.ptr<cv::Vec3b>(y);
        auto* dst = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            double h, s, v;
            rgb_to_hsv(src[x][2] / 255.0, src[x][1] / 255.0, src[x][0] / 255.0, h, s, v);
            s = std::clamp(s * factor, 0.0, 1.0);
            double r, g, b;
            hsv_to_rgb(h, s, v, r, g, b);
            dst[x] = cv::Vec3b(to_byte(b), to_byte(g), to_byte(r));
        }
    }
    return out;
}

cv::Mat jitter_saturation(const cv::Mat& image, SaturationRange range, std::mt19937_64& rng) {
    if (range.lo < 0.0 || range.hi < range.lo) throw PreconditionError("invalid saturation range");
    std::uniform_real_distribution<double> dist(range.lo, range.hi);
    const double factor = range.lo == range.hi ? range.lo : dist(rng);
    return scale_saturation(image, factor);
}

ImageModel train_image_model(std::span<const ImageFeatureVector> features, std::span<const int> labels,
                             std::vector<int> classes, const ImageHyperparams& hp) {
    if (features.size() != labels.size()) throw PreconditionError("feature and label counts differ");
    if (features.empty()) throw PreconditionError("no training samples");
    if (hp.batch_size < 1 || hp.epochs < 1 || hp.learning_rate <= 0.0 || hp.momentum < 0.0 || hp.momentum >= 1.0)
        throw PreconditionError("invalid image model hyperparameters");

    std::vector<int> row_of_class;
    {
        std::set<int> unique(classes.begin(), classes.end());
        if (unique.size() != classes.size()) throw PreconditionError("duplicate class ids");
        if (classes.empty()) throw PreconditionError("empty class table");
        const int max_id = *unique.rbegin();
        if (*unique.begin() < 0) throw PreconditionError("negative class id");
        row_of_class.assign(static_cast<std::size_t>(max_id) + 1, -1);
        for (std::size_t r = 0; r < classes.size(); ++r) row_of_class[classes[r]] = static_cast<int>(r);
    }
    std::vector<int> targets(labels.size());
    std::set<int> seen;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(row_of_class.size()) || row_of_class[y] < 0)
            throw PreconditionError("label " + std::to_string(y) + " is not in the class table");
        targets[i] = row_of_class[y];
        seen.insert(y);
    }
    if (seen.size() < 2) throw PreconditionError("training data must contain at least two distinct classes");
    for (const auto& f : features)
        if (f.values.size() != kFeatureLength)
            throw PreconditionError("feature vector length " + std::to_string(f.values.size()) + ", expected " +
                                    std::to_string(kFeatureLength));

    const std::size_t n = features.size();
    const std::size_t d = kFeatureLength;
    const std::size_t c = classes.size();

    ImageModel model;
    model.classes = std::move(classes);
    model.hyperparams = hp;
    model.feature_mean.assign(d, 0.0);
    model.feature_scale.assign(d, 1.0);
    for (const auto& f : features)
        for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += f.values[j];
    for (auto& m : model.feature_mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (const auto& f : features)
        for (std::size_t j = 0; j < d; ++j) {
            const double delta = f.values[j] - model.feature_mean[j];
            var[j] += delta * delta;
        }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        model.feature_scale[j] = sd > 1e-8 ? sd : 1.0;
    }

    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x[i * d + j] = (features[i].values[j] - model.feature_mean[j]) / model.feature_scale[j];

    model.weights.assign(c * d, 0.0);
    model.bias.assign(c, 0.0);
    std::vector<double> vel_w(c * d, 0.0), vel_b(c, 0.0);
    std::vector<double> grad_w(c * d), grad_b(c);
    std::vector<double> logits(c);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(hp.seed);
    const std::size_t batch = static_cast<std::size_t>(hp.batch_size);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            for (std::size_t s = start; s < end; ++s) {
                const double* xi = &x[order[s] * d];
                for (std::size_t k = 0; k < c; ++k) {
                    const double* wk = &model.weights[k * d];
                    double z = model.bias[k];
                    for (std::size_t j = 0; j < d; ++j) z += wk[j] * xi[j];
                    logits[k] = z;
                }
                auto p = fusion::softmax(logits);
                p[static_cast<std::size_t>(targets[order[s]])] -= 1.0;
                for (std::size_t k = 0; k < c; ++k) {
                    if (p[k] == 0.0) continue;
                    double* gk = &grad_w[k * d];
                    for (std::size_t j = 0; j < d; ++j) gk[j] += p[k] * xi[j];
                    grad_b[k] += p[k];
                }
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = 0; i < c * d; ++i) {
                vel_w[i] = hp.momentum * vel_w[i] - hp.learning_rate * grad_w[i] * scale;
                model.weights[i] += vel_w[i];
            }
            for (std::size_t k = 0; k < c; ++k) {
                vel_b[k] = hp.momentum * vel_b[k] - hp.learning_rate * grad_b[k] * scale;
                model.bias[k] += vel_b[k];
            }
        }
    }
    return model;
}

ImageModel train_image_model_on_images(std::span<const cv::Mat> images, std::span<const int> labels,
                                       std::vector<int> classes, const ImageHyperparams& hp) {
    if (images.size() != labels.size()) throw PreconditionError("image and label counts differ");
    std::vector<ImageFeatureVector> features;
    std::vector<int> y;
    std::mt19937_64 rng(hp.seed ^ 0x5A7u);
    for (std::size_t i = 0; i < images.size(); ++i) {
        features.push_back(image_features(images[i]));
        y.push_back(labels[i]);
        if (!hp.saturation_jitter) continue;
        for (int copy = 0; copy < hp.jitter_copies; ++copy) {
            features.push_back(image_features(jitter_saturation(images[i], hp.saturation, rng)));
            y.push_back(labels[i]);
        }
    }
    return train_image_model(features, y, std::move(classes), hp);
}

std::vector<double> image_logits(const ImageModel& model, const ImageFeatureVector& features) {
    if (features.values.size() != kFeatureLength) throw PreconditionError("feature vector has the wrong length");
    std::vector<double> standardized(kFeatureLength);
    for (std::size_t j = 0; j < kFeatureLength; ++j)
        standardized[j] = (features.values[j] - model.feature_mean[j]) / model.feature_scale[j];
    std::vector<double> logits(model.n_classes());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double* wk = &model.weights[k * kFeatureLength];
        double z = model.bias[k];
        for (std::size_t j = 0; j < kFeatureLength; ++j) z += wk[j] * standardized[j];
        logits[k] = z;
    }
    return logits;
}

std::vector<double> predict_image_scores(const ImageModel& model, const cv::Mat& image) {
    return fusion::softmax(image_logits(model, image_features(image)));
}

void save_image_model(const ImageModel& model, const std::filesystem::path& path) {
    const auto& hp = model.hyperparams;
    json out{{"format", kFormat},
             {"version", kFormatVersion},
             {"feature_length", kFeatureLength},
             {"classes", model.classes},
             {"weights", model.weights},
             {"bias", model.bias},
             {"feature_mean", model.feature_mean},
             {"feature_scale", model.feature_scale},
             {"hyperparams",
              {{"learning_rate", hp.learning_rate},
               {"momentum", hp.momentum},
               {"batch_size", hp.batch_size},
               {"epochs", hp.epochs},
               {"seed", hp.seed},
               {"saturation_jitter", hp.saturation_jitter},
               {"saturation_lo", hp.saturation.lo},
               {"saturation_hi", hp.saturation.hi},
               {"jitter_copies", hp.jitter_copies}}}};
    detail::write_atomically(path, out.dump());
}

ImageModel load_image_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (j.value("format", "") != kFormat) throw ParseError(path.string(), 0, "not an image model file");
    if (j.value("version", 0) != kFormatVersion) throw ParseError(path.string(), 0, "unsupported image model version");
    if (j.value("feature_length", std::size_t{0}) != kFeatureLength)
        throw ParseError(path.string(), 0, "feature length differs from this build");

    ImageModel model;
    try {
        model.classes = j.at("classes").get<std::vector<int>>();
        model.weights = j.at("weights").get<std::vector<double>>();
        model.bias = j.at("bias").get<std::vector<double>>();
        model.feature_mean = j.at("feature_mean").get<std::vector<double>>();
        model.feature_scale = j.at("feature_scale").get<std::vector<double>>();
        const auto& h = j.at("hyperparams");
        auto& hp = model.hyperparams;
        hp.learning_rate = h.at("learning_rate").get<double>();
        hp.momentum = h.at("momentum").get<double>();
        hp.batch_size = h.at("batch_size").get<int>();
        hp.epochs = h.at("epochs").get<int>();
        hp.seed = h.at("seed").get<std::uint64_t>();
        hp.saturation_jitter = h.at("saturation_jitter").get<bool>();
        hp.saturation.lo = h.at("saturation_lo").get<double>();
        hp.saturation.hi = h.at("saturation_hi").get<double>();
        hp.jitter_copies = h.at("jitter_copies").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (model.weights.size() != model.n_classes() * kFeatureLength || model.bias.size() != model.n_classes() ||
        model.feature_mean.size() != kFeatureLength || model.feature_scale.size() != kFeatureLength)
        throw ParseError(path.string(), 0, "inconsistent model dimensions");
    return model;
}

ExternalScores load_external_scores(const std::filesystem::path& path,
                                    const std::vector<std::string>& expected_classes) {
    ExternalScores out;
    bool have_header = false;
    detail::read_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto type = detail::field<std::string>(obj, "type", path, line);
        if (type == "header") {
            if (have_header) throw ParseError(path.string(), line, "duplicate header");
            out.classes = detail::field<std::vector<std::string>>(obj, "classes", path, line);
            out.source = obj.value("source", "");
            have_header = true;
            const std::size_t common = std::min(out.classes.size(), expected_classes.size());
            for (std::size_t i = 0; i < common; ++i)
                if (out.classes[i] != expected_classes[i])
                    throw ClassTableMismatch(path.string() + ": class table diverges at index " + std::to_string(i) +
                                             " ('" + out.classes[i] + "' vs corpus '" + expected_classes[i] + "')");
            if (out.classes.size() != expected_classes.size())
                throw ClassTableMismatch(path.string() + ": class table diverges at index " + std::to_string(common) +
                                         " (" + std::to_string(out.classes.size()) + " classes vs corpus " +
                                         std::to_string(expected_classes.size()) + ")");
            return;
        }
        if (type != "scores") throw ParseError(path.string(), line, "unknown record type '" + type + "'");
        if (!have_header) throw ParseError(path.string(), line, "scores before header");
        auto image_id = detail::field<std::string>(obj, "image_id", path, line);
        auto scores = detail::field<std::vector<double>>(obj, "scores", path, line);
        if (scores.size() != out.classes.size())
            throw ParseError(path.string(), line,
                             "image '" + image_id + "' has " + std::to_string(scores.size()) + " scores, expected " +
                                 std::to_string(out.classes.size()));
        for (const double s : scores)
            if (!std::isfinite(s)) throw ParseError(path.string(), line, "image '" + image_id + "' has a non-finite score");
        if (!out.scores.emplace(image_id, std::move(scores)).second)
            throw ParseError(path.string(), line, "duplicate image_id '" + image_id + "'");
    });
    if (!have_header) throw ParseError(path.string(), 0, "missing header");
    return out;
}

void save_external_scores(const ExternalScores& scores, const std::filesystem::path& path) {
    std::string out = json{{"type", "header"}, {"classes", scores.classes}, {"source", scores.source}}.dump();
    out += '\n';
    for (const auto& [id, s] : scores.scores) {
        out += json{{"type", "scores"}, {"image_id", id}, {"scores", s}}.dump();
        out += '\n';
    }
    detail::write_atomically(path, out);
}

std::vector<double> NativeScoreProvider::raw_scores(const std::string&, const std::filesystem::path& image_path) const {
    return predict_image_scores(model_, corpus::load_image(image_path));
}

std::vector<double> ExternalScoreProvider::raw_scores(const std::string& image_id, const std::filesystem::path&) const {
    auto it = scores_.scores.find(image_id);
    if (it == scores_.scores.end()) throw NotFound("external scores have no entry for image '" + image_id + "'");
    return it->second;
}

}  // namespace leaflet::image
