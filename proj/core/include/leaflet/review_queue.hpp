#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "leaflet/corpus.hpp"
#include "leaflet/extraction_cache.hpp"
#include "leaflet/predictions.hpp"

namespace leaflet::review {

enum class Status { pending, resolved };

struct Candidate {
    int class_id = 0;
    std::string class_name;
    double probability = 0.0;

    bool operator==(const Candidate&) const = default;
};

struct Resolution {
    std::optional<int> chosen_class_id;  ///< empty when the reviewer rejected all candidates
    std::string reviewer;
    std::string timestamp;

    bool rejected_all() const noexcept { return !chosen_class_id.has_value(); }
    bool operator==(const Resolution&) const = default;
};

struct ReviewItem {
    std::string item_id;
    std::string image_id;
    std::string image_path;
    std::vector<Candidate> top3;  ///< descending probability
    std::string document;         ///< extracted OCR text, may be empty
    int image_argmax = 0;
    int text_argmax = 0;
    Status status = Status::pending;
    std::optional<Resolution> resolution;  ///< present iff status == resolved

    bool operator==(const ReviewItem&) const = default;
};

struct QueueState {
    std::map<std::string, ReviewItem> items;     ///< by item_id
    std::map<std::string, std::string> by_image;  ///< image_id -> item_id
    std::uint64_t next_id = 1;
    std::size_t events = 0;

    bool operator==(const QueueState&) const = default;
};

struct QueueStats {
    std::size_t pending = 0;
    std::size_t resolved = 0;
    std::size_t rejected = 0;
    /// Share of resolved items where the reviewer confirmed the top candidate.
    std::optional<double> agreement_rate;
};

nlohmann::json to_json(const ReviewItem& item);
ReviewItem item_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QueueStats& stats);

/// Rebuilds queue state from an event log. Reads at most `max_events` events.
QueueState replay_log(const std::filesystem::path& log_path, std::size_t max_events = SIZE_MAX);

/// Persistent review queue: an append-only event log plus a derived snapshot.
///
/// Layout of the store directory:
///   events.jsonl   authoritative append-only log
///   snapshot.json  state after the last event, rewritten after every mutation
///   service.lock   held by the single writer while it runs
///
/// Thread-safe: mutations serialize on one writer lock, readers see a consistent snapshot.
class ReviewQueue {
public:
    /// Opens or creates the store. Throws CorruptStore when the log is unreadable
    /// or the snapshot disagrees with it.
    explicit ReviewQueue(std::filesystem::path directory);

    ReviewQueue(const ReviewQueue&) = delete;
    ReviewQueue& operator=(const ReviewQueue&) = delete;

    /// Adds a pending item keyed by image_id. Returns the new item_id, or nothing
    /// when the image is already queued.
    std::optional<std::string> enqueue(ReviewItem item);

    /// `chosen_class_id` empty means "rejected all". Throws NotFound or Conflict.
    ReviewItem resolve(const std::string& item_id, std::optional<int> chosen_class_id, const std::string& reviewer,
                       const std::string& timestamp);

    std::optional<ReviewItem> get(const std::string& item_id) const;
    std::vector<ReviewItem> list(std::optional<Status> status, std::size_t limit = SIZE_MAX) const;
    QueueStats stats() const;
    QueueState state() const;

    const std::filesystem::path& directory() const noexcept { return directory_; }
    std::filesystem::path log_path() const { return directory_ / "events.jsonl"; }
    std::filesystem::path snapshot_path() const { return directory_ / "snapshot.json"; }
    std::filesystem::path lock_path() const { return directory_ / "service.lock"; }

private:
    void append_event(const nlohmann::json& event);
    void write_snapshot() const;

    std::filesystem::path directory_;
    mutable std::shared_mutex mutex_;
    QueueState state_;
};

/// Exclusive writer lock on a queue store, released on destruction.
/// Throws Conflict when another live process holds it; stale locks are reclaimed.
class StoreLock {
public:
    explicit StoreLock(std::filesystem::path lock_path);
    ~StoreLock();
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    std::filesystem::path path_;
};

/// Enqueues one pending item per low-confidence prediction. Returns the number of
/// newly enqueued items; already queued images are skipped.
std::size_t queue_low_confidence(const fusion::PredictionFile& predictions, const corpus::CorpusManifest& manifest,
                                 const std::map<std::string, ocr::ExtractedDocument>& documents, ReviewQueue& queue);

/// Current UTC time as ISO-8601 with second precision.
std::string utc_timestamp();

}  // namespace leaflet::review
