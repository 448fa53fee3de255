#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "leaflet/predictions.hpp"
#include "leaflet/review_queue.hpp"
#include "leaflet_cli/cli.hpp"
#include "test_support.hpp"

namespace leaflet::cli {
namespace {

using leaflet::testing::read_file;
using leaflet::testing::TempDir;
using leaflet::testing::write_file;

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run leaflet(std::vector<std::string> args) {
    args.insert(args.begin(), "leaflet");
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    static inline std::unique_ptr<TempDir> dir;
    static inline std::string manifest, cache;

    static void SetUpTestSuite() {
        dir = std::make_unique<TempDir>();
        const auto r = leaflet({"generate-synthetic", "--out", (dir->path() / "corpus").string(), "--train-per-class",
                                "6", "--test-per-class", "2"});
        ASSERT_EQ(r.code, kExitOk) << r.err;
        manifest = (dir->path() / "corpus" / "manifest.jsonl").string();
        cache = (dir->path() / "corpus" / "ocr_cache.jsonl").string();
    }
    static void TearDownTestSuite() { dir.reset(); }

    std::string path(const std::string& name) const { return (dir->path() / name).string(); }

    void train() {
        auto r = leaflet({"train-text", "--manifest", manifest, "--cache", cache, "--text-model", path("text.json")});
        ASSERT_EQ(r.code, kExitOk) << r.err;
        r = leaflet({"train-image", "--manifest", manifest, "--image-model", path("image.json"), "--epochs", "10"});
        ASSERT_EQ(r.code, kExitOk) << r.err;
    }
};

TEST_F(Cli, ValidateUsesExpectedCounts) {
    auto r = leaflet({"validate", "--manifest", manifest, "--train-per-class", "6", "--test-per-class", "2"});
    EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
    EXPECT_NE(r.out.find("ok: 160 images, 20 classes"), std::string::npos) << r.out;

    r = leaflet({"validate", "--manifest", manifest});
    EXPECT_EQ(r.code, kExitValidation);
    EXPECT_NE(r.out.find("train_count"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainPredictEvaluate) {
    train();
    auto r = leaflet({"predict", "--manifest", manifest, "--cache", cache, "--text-model", path("text.json"),
                      "--image-model", path("image.json"), "--predictions", path("pred.jsonl"), "--top-k", "5"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto predictions = fusion::load_predictions(path("pred.jsonl"));
    EXPECT_EQ(predictions.records.size(), 40u);
    EXPECT_EQ(predictions.text_weight, 2.0);

    r = leaflet({"evaluate", "--manifest", manifest, "--predictions", path("pred.jsonl"), "--format", "json"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto report = nlohmann::json::parse(r.out);
    EXPECT_EQ(report["n"], 40);
    EXPECT_LE(report["accuracy"].get<double>(), report["top3"].get<double>());
    EXPECT_LE(report["top3"].get<double>(), report["top5"].get<double>());
    EXPECT_GE(report["oracle_union"].get<double>(), report["image_accuracy"].get<double>());
    EXPECT_GE(report["oracle_union"].get<double>(), report["text_accuracy"].get<double>());

    r = leaflet({"evaluate", "--manifest", manifest, "--predictions", path("pred.jsonl"), "--format", "csv",
                 "--output", path("confusion.csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(read_file(path("confusion.csv")).rfind("true_class", 0), 0u);

    // queue is idempotent across reruns
    r = leaflet({"queue", "--manifest", manifest, "--predictions", path("pred.jsonl"), "--cache", cache,
                 "--queue-dir", path("queue")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::size_t low = 0;
    for (const auto& rec : predictions.records) low += rec.confidence == fusion::Confidence::low;
    EXPECT_NE(r.out.find("enqueued " + std::to_string(low) + " new"), std::string::npos) << r.out;
    r = leaflet({"queue", "--manifest", manifest, "--predictions", path("pred.jsonl"), "--queue-dir", path("queue")});
    EXPECT_NE(r.out.find("enqueued 0 new"), std::string::npos) << r.out;
    EXPECT_EQ(review::ReviewQueue(path("queue")).stats().pending, low);
}

TEST_F(Cli, PredictRejectsForeignClassTable) {
    train();
    TempDir other;
    auto r = leaflet({"generate-synthetic", "--out", (other / "c").string(), "--train-per-class", "1",
                      "--test-per-class", "1", "--corpus-seed", "3"});
    ASSERT_EQ(r.code, kExitOk);
    auto m = corpus::load_manifest(other / "c" / "manifest.jsonl");
    m.classes.pop_back();
    std::erase_if(m.records, [&](const auto& rec) { return rec.class_id >= static_cast<int>(m.classes.size()); });
    corpus::save_manifest(m, other / "c" / "manifest.jsonl");
    r = leaflet({"predict", "--manifest", (other / "c" / "manifest.jsonl").string(), "--cache",
                 (other / "c" / "ocr_cache.jsonl").string(), "--text-model", path("text.json"), "--image-model",
                 path("image.json"), "--predictions", (other / "p.jsonl").string()});
    EXPECT_EQ(r.code, kExitFatal);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, SweepWeightPrintsTable) {
    const auto r = leaflet({"sweep-weight", "--manifest", manifest, "--cache", cache, "--weights", "1,2", "--epochs",
                            "5", "--holdout", "0.34"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("weight\taccuracy\n1\t"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\n2\t"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("selected weight: "), std::string::npos) << r.out;
}

TEST_F(Cli, UsageAndInputErrors) {
    EXPECT_EQ(leaflet({"validate", "--bogus"}).code, kExitFatal);
    EXPECT_EQ(leaflet({}).code, kExitFatal);
    EXPECT_EQ(leaflet({"--help"}).code, kExitOk);
    EXPECT_EQ(leaflet({"validate", "--manifest", path("missing.jsonl")}).code, kExitFatal);
    const auto r = leaflet({"train-text", "--manifest", manifest});
    EXPECT_EQ(r.code, kExitFatal);
    EXPECT_NE(r.err.find("LEAFLET_CACHE"), std::string::npos) << r.err;
    EXPECT_EQ(leaflet({"predict", "--manifest", manifest, "--text-weight", "0"}).code, kExitFatal);
}

TEST_F(Cli, ConfigFileEnvironmentAndFlagPrecedence) {
    write_file(path("config.json"), nlohmann::json{{"manifest", path("nowhere.jsonl")}}.dump());
    // file only: points at a missing manifest
    EXPECT_EQ(leaflet({"--config", path("config.json"), "validate"}).code, kExitFatal);
    // environment beats the file
    ::setenv("LEAFLET_MANIFEST", manifest.c_str(), 1);
    auto r = leaflet({"--config", path("config.json"), "validate", "--train-per-class", "6", "--test-per-class", "2"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    // the flag beats the environment
    r = leaflet({"--config", path("config.json"), "validate", "--manifest", path("nowhere.jsonl")});
    ::unsetenv("LEAFLET_MANIFEST");
    EXPECT_EQ(r.code, kExitFatal);
    EXPECT_NE(r.err.find("nowhere.jsonl"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace leaflet::cli
