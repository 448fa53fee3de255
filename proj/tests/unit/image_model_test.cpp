#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <opencv2/imgcodecs.hpp>

#include "leaflet/error.hpp"
#include "leaflet/image_model.hpp"
#include "test_support.hpp"

namespace leaflet::image {
namespace {

using leaflet::testing::TempDir;
using leaflet::testing::write_file;

constexpr std::size_t kPixels = 3 * kThumbnailSide * kThumbnailSide;

cv::Mat solid(int b, int g, int r, int w = 60, int h = 90) { return {h, w, CV_8UC3, cv::Scalar(b, g, r)}; }

TEST(Features, UniformBlack) {
    const auto f = image_features(solid(0, 0, 0)).values;
    ASSERT_EQ(f.size(), kFeatureLength);
    for (std::size_t i = 0; i < kPixels; ++i) ASSERT_EQ(f[i], 0.0);
    for (int ch = 0; ch < 3; ++ch)
        for (int b = 0; b < kHistogramBins; ++b)
            EXPECT_EQ(f[kPixels + ch * kHistogramBins + b], b == 0 ? 1.0 : 0.0);
}

TEST(Features, UniformWhite) {
    const auto f = image_features(solid(255, 255, 255)).values;
    for (std::size_t i = 0; i < kPixels; ++i) ASSERT_EQ(f[i], 1.0);
    for (int ch = 0; ch < 3; ++ch)
        for (int b = 0; b < kHistogramBins; ++b)
            EXPECT_EQ(f[kPixels + ch * kHistogramBins + b], b == kHistogramBins - 1 ? 1.0 : 0.0);
}

TEST(Features, RgbOrderAndRange) {
    // BGR (10, 20, 200): red channel first in the thumbnail, then green, then blue.
    const auto f = image_features(solid(10, 20, 200)).values;
    EXPECT_DOUBLE_EQ(f[0], 200.0 / 255.0);
    EXPECT_DOUBLE_EQ(f[1], 20.0 / 255.0);
    EXPECT_DOUBLE_EQ(f[2], 10.0 / 255.0);
    EXPECT_EQ(f[kPixels + (200 >> 4)], 1.0);

    cv::Mat noise(77, 41, CV_8UC3);
    cv::randu(noise, 0, 256);
    for (const double v : image_features(noise).values) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(Features, IndependentOfEncoding) {
    TempDir dir;
    cv::Mat img(120, 95, CV_8UC3);
    cv::randu(img, 0, 256);
    cv::imwrite((dir / "a.png").string(), img);
    cv::imwrite((dir / "a.bmp").string(), img);
    const auto png = image_features(cv::imread((dir / "a.png").string(), cv::IMREAD_COLOR));
    const auto bmp = image_features(cv::imread((dir / "a.bmp").string(), cv::IMREAD_COLOR));
    EXPECT_EQ(png.values, bmp.values);
}

TEST(Features, GrayAndAlphaInputs) {
    const cv::Mat gray(40, 40, CV_8UC1, cv::Scalar(128));
    const cv::Mat bgra(40, 40, CV_8UC4, cv::Scalar(128, 128, 128, 7));
    EXPECT_EQ(image_features(gray).values, image_features(solid(128, 128, 128, 40, 40)).values);
    EXPECT_EQ(image_features(bgra).values, image_features(solid(128, 128, 128, 40, 40)).values);
    EXPECT_THROW(image_features(cv::Mat()), Error);
}

TEST(Saturation, UnitFactorIsIdentityWithinOneLevel) {
    cv::Mat img(30, 30, CV_8UC3);
    cv::randu(img, 0, 256);
    std::mt19937_64 rng(1);
    const auto out = jitter_saturation(img, {1.0, 1.0}, rng);
    EXPECT_LE(cv::norm(out, img, cv::NORM_INF), 1.0);
}

TEST(Saturation, GrayIsFixedPoint) {
    const auto img = solid(90, 90, 90);
    for (const double f : {0.0, 0.5, 1.5, 3.0}) EXPECT_EQ(cv::norm(scale_saturation(img, f), img, cv::NORM_INF), 0.0);
}

TEST(Saturation, ZeroFactorOnPureRedKeepsValue) {
    // HSV of pure red is (0, 1, 1); with S = 0 the colour becomes (V, V, V) = white.
    const auto out = scale_saturation(solid(0, 0, 255), 0.0);
    EXPECT_EQ(out.at<cv::Vec3b>(0, 0), cv::Vec3b(255, 255, 255));
    // Dark red (0, 0, 128): V = 128/255 so the result is (128, 128, 128).
    EXPECT_EQ(scale_saturation(solid(0, 0, 128), 0.0).at<cv::Vec3b>(3, 3), cv::Vec3b(128, 128, 128));
}

TEST(Saturation, HalfFactorOnHandComputedColour) {
    // RGB (200, 100, 50): V = 200/255, S = 0.75, H = 20 degrees. S -> 0.375 gives
    // min = V(1 - S) = 125, and G = min + (max - min) * H / 60 = 125 + 75 / 3 = 150.
    const auto out = scale_saturation(solid(50, 100, 200), 0.5).at<cv::Vec3b>(0, 0);
    EXPECT_EQ(out, cv::Vec3b(125, 150, 200));
}

TEST(Saturation, JitterIsSeeded) {
    cv::Mat img(30, 30, CV_8UC3);
    cv::randu(img, 0, 256);
    std::mt19937_64 a(5), b(5);
    EXPECT_EQ(cv::norm(jitter_saturation(img, {}, a), jitter_saturation(img, {}, b), cv::NORM_INF), 0.0);
    std::mt19937_64 c(5);
    EXPECT_THROW(jitter_saturation(img, {-0.1, 1.0}, c), PreconditionError);
}

std::vector<cv::Mat> rgb_cards(std::vector<int>& labels) {
    std::vector<cv::Mat> out;
    cv::RNG rng(9);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 10; ++i) {
            cv::Scalar colour(0, 0, 0);
            colour[2 - c] = 160 + rng.uniform(0, 90);  // c = 0 red, 1 green, 2 blue
            out.push_back(solid(colour[0] + rng.uniform(0, 40), colour[1] + rng.uniform(0, 40),
                                colour[2] + rng.uniform(0, 40)));
            labels.push_back(c);
        }
    return out;
}

TEST(Train, UniformColourCardsAreSeparated) {
    std::vector<int> labels;
    const auto images = rgb_cards(labels);
    const auto model = train_image_model_on_images(images, labels, {0, 1, 2});
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto p = predict_image_scores(model, images[i]);
        EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), labels[i]) << "image " << i;
    }
}

TEST(Train, SameSeedSameWeights) {
    std::vector<int> labels;
    const auto images = rgb_cards(labels);
    ImageHyperparams hp;
    hp.epochs = 3;
    hp.saturation_jitter = true;
    const auto a = train_image_model_on_images(images, labels, {0, 1, 2}, hp);
    const auto b = train_image_model_on_images(images, labels, {0, 1, 2}, hp);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.bias, b.bias);
}

TEST(Train, Errors) {
    std::vector<int> labels;
    const auto images = rgb_cards(labels);
    std::vector<int> one_class(labels.size(), 0);
    EXPECT_THROW(train_image_model_on_images(images, one_class, {0, 1, 2}), PreconditionError);
    std::vector<ImageFeatureVector> bad(2);
    bad[0].values.assign(10, 0.0);
    bad[1].values.assign(10, 0.0);
    const std::vector<int> y{0, 1};
    EXPECT_THROW(train_image_model(bad, y, {0, 1}), PreconditionError);
}

ImageModel constant_model(std::vector<double> bias) {
    ImageModel m;
    m.classes.resize(bias.size());
    std::iota(m.classes.begin(), m.classes.end(), 0);
    m.weights.assign(bias.size() * kFeatureLength, 0.0);
    m.bias = std::move(bias);
    m.feature_mean.assign(kFeatureLength, 0.0);
    m.feature_scale.assign(kFeatureLength, 1.0);
    return m;
}

TEST(Predict, ZeroModelIsUniform) {
    const auto p = predict_image_scores(constant_model({0, 0, 0, 0}), solid(1, 2, 3));
    for (const double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Predict, ClosedFormSoftmax) {
    const auto p = predict_image_scores(constant_model({std::log(2.0), 0.0}), solid(1, 2, 3));
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Model, RoundTripIsBitIdentical) {
    TempDir dir;
    std::vector<int> labels;
    const auto images = rgb_cards(labels);
    ImageHyperparams hp;
    hp.epochs = 5;
    const auto model = train_image_model_on_images(images, labels, {0, 1, 2}, hp);
    save_image_model(model, dir / "img.json");
    const auto back = load_image_model(dir / "img.json");
    EXPECT_EQ(back.weights, model.weights);
    EXPECT_EQ(back.feature_mean, model.feature_mean);
    EXPECT_EQ(back.feature_scale, model.feature_scale);
    EXPECT_EQ(back.hyperparams, model.hyperparams);
    for (const auto& img : images) EXPECT_EQ(predict_image_scores(back, img), predict_image_scores(model, img));
}

class ExternalScoresFile : public ::testing::Test {
protected:
    TempDir dir;
    std::vector<std::string> classes{"milk", "tea", "coffee"};

    std::filesystem::path write(const std::string& header_classes, const std::string& rows) {
        const auto p = dir / "scores.jsonl";
        write_file(p, "{\"type\":\"header\",\"classes\":" + header_classes + ",\"source\":\"resnet50\"}\n" + rows);
        return p;
    }
};

TEST_F(ExternalScoresFile, LoadsAndServesRawScores) {
    const auto p = write(R"(["milk","tea","coffee"])", "{\"type\":\"scores\",\"image_id\":\"a\",\"scores\":[1,2,3]}\n");
    const auto s = load_external_scores(p, classes);
    EXPECT_EQ(s.source, "resnet50");
    const ExternalScoreProvider provider(s);
    EXPECT_EQ(provider.raw_scores("a", {}), (std::vector<double>{1, 2, 3}));
    EXPECT_THROW(provider.raw_scores("b", {}), NotFound);
}

TEST_F(ExternalScoresFile, PermutedClassTableNamesFirstDivergence) {
    const auto p = write(R"(["milk","coffee","tea"])", "");
    try {
        load_external_scores(p, classes);
        FAIL() << "expected ClassTableMismatch";
    } catch (const ClassTableMismatch& e) {
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
    }
}

TEST_F(ExternalScoresFile, ShortScoreArrayNamesImage) {
    const auto p = write(R"(["milk","tea","coffee"])", "{\"type\":\"scores\",\"image_id\":\"img7\",\"scores\":[1,2]}\n");
    try {
        load_external_scores(p, classes);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("img7"), std::string::npos);
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST_F(ExternalScoresFile, DuplicateAndNonFinite) {
    EXPECT_THROW(load_external_scores(write(R"(["milk","tea","coffee"])",
                                            "{\"type\":\"scores\",\"image_id\":\"a\",\"scores\":[1,2,3]}\n"
                                            "{\"type\":\"scores\",\"image_id\":\"a\",\"scores\":[1,2,3]}\n"),
                                      classes),
                 ParseError);
    EXPECT_THROW(load_external_scores(
                     write(R"(["milk","tea","coffee"])", "{\"type\":\"scores\",\"image_id\":\"a\",\"scores\":[1,1e999,3]}\n"),
                     classes),
                 ParseError);
}

TEST_F(ExternalScoresFile, RoundTrip) {
    ExternalScores s{classes, "vit", {{"a", {0.1, -2.5, 1e-300}}, {"b", {3, 2, 1}}}};
    save_external_scores(s, dir / "out.jsonl");
    const auto back = load_external_scores(dir / "out.jsonl", classes);
    EXPECT_EQ(back.scores, s.scores);
    EXPECT_EQ(back.source, "vit");
}

}  // namespace
}  // namespace leaflet::image
