#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <random>

#include <nlohmann/json.hpp>

#include "leaflet/error.hpp"
#include "leaflet/review_queue.hpp"
#include "test_support.hpp"

namespace leaflet::review {
namespace {

using leaflet::testing::read_file;
using leaflet::testing::TempDir;
using leaflet::testing::write_file;

ReviewItem item(const std::string& image_id) {
    ReviewItem i;
    i.image_id = image_id;
    i.image_path = "/data/" + image_id + ".png";
    i.top3 = {{4, "milk 250g", 0.48}, {5, "milk 290g", 0.45}, {9, "tea", 0.04}};
    i.document = "MILCH 250g + 40g";
    i.image_argmax = 5;
    i.text_argmax = 4;
    return i;
}

TEST(Queue, EnqueueIsIdempotentPerImage) {
    TempDir dir;
    ReviewQueue q(dir.path());
    EXPECT_EQ(q.enqueue(item("a")), std::optional<std::string>("1"));
    EXPECT_EQ(q.enqueue(item("b")), std::optional<std::string>("2"));
    EXPECT_FALSE(q.enqueue(item("a")).has_value());
    EXPECT_EQ(q.stats().pending, 2u);
    EXPECT_EQ(q.get("1")->image_id, "a");
    EXPECT_EQ(q.get("1")->status, Status::pending);
    EXPECT_FALSE(q.get("3").has_value());
}

TEST(Queue, ResolveStateMachine) {
    TempDir dir;
    ReviewQueue q(dir.path());
    q.enqueue(item("a"));
    q.enqueue(item("b"));
    q.enqueue(item("c"));

    const auto resolved = q.resolve("1", 4, "ana", "2024-01-01T00:00:00Z");
    EXPECT_EQ(resolved.status, Status::resolved);
    ASSERT_TRUE(resolved.resolution.has_value());
    EXPECT_EQ(resolved.resolution->chosen_class_id, 4);
    EXPECT_THROW(q.resolve("1", 5, "bo", "t"), Conflict);
    EXPECT_THROW(q.resolve("99", 5, "bo", "t"), NotFound);

    q.resolve("2", std::nullopt, "bo", "t");
    EXPECT_TRUE(q.get("2")->resolution->rejected_all());

    const auto s = q.stats();
    EXPECT_EQ(s.pending, 1u);
    EXPECT_EQ(s.resolved, 2u);
    EXPECT_EQ(s.rejected, 1u);
    EXPECT_DOUBLE_EQ(*s.agreement_rate, 0.5);

    EXPECT_EQ(q.list(Status::pending).size(), 1u);
    EXPECT_EQ(q.list(Status::resolved).size(), 2u);
    EXPECT_EQ(q.list(std::nullopt, 2).size(), 2u);
}

TEST(Queue, ListIsInNumericIdOrder) {
    TempDir dir;
    ReviewQueue q(dir.path());
    for (int i = 0; i < 12; ++i) q.enqueue(item("img" + std::to_string(i)));
    const auto all = q.list(std::nullopt);
    ASSERT_EQ(all.size(), 12u);
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].item_id, std::to_string(i + 1));
}

TEST(Queue, NoStatsAgreementWhenNothingResolved) {
    TempDir dir;
    ReviewQueue q(dir.path());
    q.enqueue(item("a"));
    EXPECT_FALSE(q.stats().agreement_rate.has_value());
}

TEST(Queue, ReopenReplaysToSameState) {
    TempDir dir;
    QueueState live;
    {
        ReviewQueue q(dir.path());
        q.enqueue(item("a"));
        q.enqueue(item("b"));
        q.resolve("2", 5, "ana", "t1");
        live = q.state();
    }
    ReviewQueue again(dir.path());
    EXPECT_EQ(again.state(), live);
    EXPECT_EQ(replay_log(again.log_path()), live);
}

TEST(Queue, LogIsAppendOnly) {
    TempDir dir;
    ReviewQueue q(dir.path());
    q.enqueue(item("a"));
    const auto before = read_file(q.log_path());
    q.resolve("1", 9, "ana", "t");
    const auto after = read_file(q.log_path());
    EXPECT_EQ(after.substr(0, before.size()), before);
    EXPECT_GT(after.size(), before.size());
}

TEST(Queue, SnapshotOneEventBehindIsRepaired) {
    TempDir dir;
    std::string stale_snapshot;
    {
        ReviewQueue q(dir.path());
        q.enqueue(item("a"));
        stale_snapshot = read_file(q.snapshot_path());
        q.resolve("1", 4, "ana", "t");
    }
    write_file(dir / "snapshot.json", stale_snapshot);
    ReviewQueue q(dir.path());
    EXPECT_EQ(q.get("1")->status, Status::resolved);
    EXPECT_EQ(q.state(), replay_log(q.log_path()));
}

TEST(Queue, DivergentSnapshotIsCorrupt) {
    TempDir dir;
    {
        ReviewQueue q(dir.path());
        q.enqueue(item("a"));
    }
    auto snap = read_file(dir / "snapshot.json");
    const auto pos = snap.find("MILCH");
    ASSERT_NE(pos, std::string::npos);
    snap.replace(pos, 5, "KAFFE");
    write_file(dir / "snapshot.json", snap);
    try {
        ReviewQueue q(dir.path());
        FAIL() << "expected CorruptStore";
    } catch (const CorruptStore& e) {
        EXPECT_NE(std::string(e.what()).find("events.jsonl"), std::string::npos) << e.what();
    }
}

TEST(Queue, TruncatedLogIsCorrupt) {
    TempDir dir;
    {
        ReviewQueue q(dir.path());
        q.enqueue(item("a"));
    }
    auto log = read_file(dir / "events.jsonl");
    write_file(dir / "events.jsonl", log + "{\"type\":\"resolved\",\"item_");
    EXPECT_THROW(ReviewQueue{dir.path()}, CorruptStore);
}

TEST(Queue, ItemJsonRoundTrip) {
    auto i = item("a");
    i.item_id = "7";
    i.status = Status::resolved;
    i.resolution = Resolution{std::nullopt, "ana", "t"};
    EXPECT_EQ(item_from_json(to_json(i)), i);
}

TEST(Lock, SecondHolderConflictsAndStaleLockIsReclaimed) {
    TempDir dir;
    {
        StoreLock lock(dir / "service.lock");
        EXPECT_THROW(StoreLock(dir / "service.lock"), Conflict);
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "service.lock"));

    const pid_t child = fork();
    if (child == 0) _exit(0);
    waitpid(child, nullptr, 0);
    write_file(dir / "service.lock", std::to_string(child) + "\n");
    EXPECT_NO_THROW(StoreLock(dir / "service.lock"));
}

fusion::PredictionFile predictions(int n, int n_low) {
    fusion::PredictionFile f;
    f.classes = {"a", "b", "c", "d"};
    f.top_k = 3;
    for (int i = 0; i < n; ++i) {
        fusion::PredictionRecord r;
        r.image_id = "img" + std::to_string(i);
        r.top_k = {{1, 0.5}, {0, 0.3}, {2, 0.1}};
        r.predicted_class = 1;
        r.image_argmax = 1;
        r.text_argmax = i < n_low ? 0 : 1;
        r.confidence = i < n_low ? fusion::Confidence::low : fusion::Confidence::high;
        f.records.push_back(r);
    }
    return f;
}

TEST(QueueLowConfidence, CountsAndIdempotence) {
    TempDir dir;
    corpus::CorpusManifest manifest;
    manifest.classes = {"a", "b", "c", "d"};
    manifest.base_dir = "/corpus";
    corpus::ImageRecord rec;
    rec.image_id = "img0";
    rec.path = "x/img0.png";
    manifest.records.push_back(rec);
    std::map<std::string, ocr::ExtractedDocument> docs;
    docs["img0"].document = "MILCH 250g";

    ReviewQueue q(dir.path());
    EXPECT_EQ(queue_low_confidence(predictions(100, 0), manifest, docs, q), 0u);
    EXPECT_EQ(queue_low_confidence(predictions(100, 10), manifest, docs, q), 10u);
    EXPECT_EQ(q.stats().pending, 10u);
    EXPECT_EQ(queue_low_confidence(predictions(100, 10), manifest, docs, q), 0u);

    const auto first = q.get("1");
    EXPECT_EQ(first->image_path, "/corpus/x/img0.png");
    EXPECT_EQ(first->document, "MILCH 250g");
    ASSERT_EQ(first->top3.size(), 3u);
    EXPECT_EQ(first->top3[0].class_name, "b");
    EXPECT_EQ(first->text_argmax, 0);

    auto short_k = predictions(3, 3);
    short_k.top_k = 2;
    EXPECT_THROW(queue_low_confidence(short_k, manifest, docs, q), PreconditionError);
}

}  // namespace
}  // namespace leaflet::review
