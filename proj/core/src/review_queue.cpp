#include "leaflet/review_queue.hpp"

#include <cerrno>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "jsonl.hpp"
#include "leaflet/error.hpp"

namespace leaflet::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSnapshotVersion = 1;

std::string recovery_hint(const fs::path& log) {
    return " (the store refuses writes; remove snapshot.json to rebuild it from " + log.string() +
           ", or repair the damaged log line)";
}

json resolution_json(const std::optional<Resolution>& r) {
    if (!r) return nullptr;
    return {{"chosen_class_id", r->chosen_class_id ? json(*r->chosen_class_id) : json(nullptr)},
            {"rejected_all", r->rejected_all()},
            {"reviewer", r->reviewer},
            {"timestamp", r->timestamp}};
}

void apply_event(QueueState& state, const json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "enqueued") {
        ReviewItem item = item_from_json(event.at("item"));
        if (state.items.contains(item.item_id) || state.by_image.contains(item.image_id))
            throw CorruptStore("duplicate enqueue of image '" + item.image_id + "'");
        if (item.status != Status::pending) throw CorruptStore("enqueued item is not pending");
        state.by_image[item.image_id] = item.item_id;
        state.next_id = std::max<std::uint64_t>(state.next_id, std::stoull(item.item_id) + 1);
        state.items.emplace(item.item_id, std::move(item));
    } else if (type == "resolved") {
        const auto id = event.at("item_id").get<std::string>();
        auto it = state.items.find(id);
        if (it == state.items.end()) throw CorruptStore("resolution of unknown item '" + id + "'");
        if (it->second.status == Status::resolved) throw CorruptStore("item '" + id + "' resolved twice");
        Resolution r;
        if (!event.at("chosen_class_id").is_null()) r.chosen_class_id = event.at("chosen_class_id").get<int>();
        r.reviewer = event.at("reviewer").get<std::string>();
        r.timestamp = event.at("timestamp").get<std::string>();
        it->second.status = Status::resolved;
        it->second.resolution = std::move(r);
    } else {
        throw CorruptStore("unknown event type '" + type + "'");
    }
    ++state.events;
}

json snapshot_json(const QueueState& state) {
    json items = json::array();
    for (const auto& [id, item] : state.items) items.push_back(to_json(item));
    return {{"version", kSnapshotVersion}, {"events", state.events}, {"next_id", state.next_id}, {"items", items}};
}

QueueState state_from_snapshot(const json& j) {
    if (j.at("version").get<int>() != kSnapshotVersion) throw CorruptStore("unsupported snapshot version");
    QueueState state;
    state.events = j.at("events").get<std::size_t>();
    state.next_id = j.at("next_id").get<std::uint64_t>();
    for (const auto& entry : j.at("items")) {
        ReviewItem item = item_from_json(entry);
        state.by_image[item.image_id] = item.item_id;
        state.items.emplace(item.item_id, std::move(item));
    }
    return state;
}

}  // namespace

json to_json(const ReviewItem& item) {
    json top = json::array();
    for (const auto& c : item.top3)
        top.push_back({{"class_id", c.class_id}, {"class_name", c.class_name}, {"probability", c.probability}});
    return {{"item_id", item.item_id},
            {"image_id", item.image_id},
            {"image_path", item.image_path},
            {"top3", top},
            {"document", item.document},
            {"image_argmax", item.image_argmax},
            {"text_argmax", item.text_argmax},
            {"status", item.status == Status::pending ? "pending" : "resolved"},
            {"resolution", resolution_json(item.resolution)}};
}

ReviewItem item_from_json(const json& j) {
    ReviewItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.image_id = j.at("image_id").get<std::string>();
    item.image_path = j.at("image_path").get<std::string>();
    for (const auto& c : j.at("top3"))
        item.top3.push_back({c.at("class_id").get<int>(), c.at("class_name").get<std::string>(),
                             c.at("probability").get<double>()});
    item.document = j.at("document").get<std::string>();
    item.image_argmax = j.at("image_argmax").get<int>();
    item.text_argmax = j.at("text_argmax").get<int>();
    const auto status = j.at("status").get<std::string>();
    if (status != "pending" && status != "resolved") throw CorruptStore("unknown item status '" + status + "'");
    item.status = status == "pending" ? Status::pending : Status::resolved;
    const auto& res = j.at("resolution");
    if (!res.is_null()) {
        Resolution r;
        if (!res.at("chosen_class_id").is_null()) r.chosen_class_id = res.at("chosen_class_id").get<int>();
        r.reviewer = res.at("reviewer").get<std::string>();
        r.timestamp = res.at("timestamp").get<std::string>();
        item.resolution = std::move(r);
    }
    if ((item.status == Status::resolved) != item.resolution.has_value())
        throw CorruptStore("item '" + item.item_id + "' status and resolution disagree");
    return item;
}

json to_json(const QueueStats& s) {
    return {{"pending", s.pending},
            {"resolved", s.resolved},
            {"rejected", s.rejected},
            {"agreement_rate", s.agreement_rate ? json(*s.agreement_rate) : json(nullptr)}};
}

QueueState replay_log(const fs::path& log_path, std::size_t max_events) {
    QueueState state;
    if (!fs::exists(log_path)) return state;
    std::ifstream in(log_path, std::ios::binary);
    if (!in) throw CorruptStore("cannot read " + log_path.string());
    std::string line;
    std::size_t number = 0;
    while (state.events < max_events && std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            apply_event(state, json::parse(line));
        } catch (const CorruptStore& e) {
            throw CorruptStore(log_path.string() + ":" + std::to_string(number) + ": " + e.what() +
                               recovery_hint(log_path));
        } catch (const std::exception& e) {
            throw CorruptStore(log_path.string() + ":" + std::to_string(number) + ": unreadable event: " + e.what() +
                               recovery_hint(log_path));
        }
    }
    return state;
}

ReviewQueue::ReviewQueue(fs::path directory) : directory_(std::move(directory)) {
    fs::create_directories(directory_);
    state_ = replay_log(log_path());

    if (fs::exists(snapshot_path())) {
        QueueState snap;
        try {
            std::ifstream in(snapshot_path());
            snap = state_from_snapshot(json::parse(in));
        } catch (const std::exception& e) {
            throw CorruptStore("unreadable snapshot " + snapshot_path().string() + ": " + e.what() +
                               recovery_hint(log_path()));
        }
        if (snap == state_) return;
        // A crash between appending an event and rewriting the snapshot leaves the
        // snapshot one step behind a consistent log; anything else is corruption.
        if (snap.events < state_.events && snap == replay_log(log_path(), snap.events)) {
            write_snapshot();
            return;
        }
        throw CorruptStore("snapshot " + snapshot_path().string() + " does not match the event log" +
                           recovery_hint(log_path()));
    }
    write_snapshot();
}

void ReviewQueue::append_event(const json& event) {
    std::ofstream out(log_path(), std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + log_path().string());
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw Error("short write to " + log_path().string());
}

void ReviewQueue::write_snapshot() const {
    detail::write_atomically(snapshot_path(), snapshot_json(state_).dump());
}

std::optional<std::string> ReviewQueue::enqueue(ReviewItem item) {
    std::unique_lock lock(mutex_);
    if (state_.by_image.contains(item.image_id)) return std::nullopt;
    item.item_id = std::to_string(state_.next_id);
    item.status = Status::pending;
    item.resolution.reset();
    const json event{{"type", "enqueued"}, {"item", to_json(item)}};
    append_event(event);
    apply_event(state_, event);
    write_snapshot();
    return item.item_id;
}

ReviewItem ReviewQueue::resolve(const std::string& item_id, std::optional<int> chosen_class_id,
                                const std::string& reviewer, const std::string& timestamp) {
    std::unique_lock lock(mutex_);
    auto it = state_.items.find(item_id);
    if (it == state_.items.end()) throw NotFound("no review item '" + item_id + "'");
    if (it->second.status == Status::resolved) throw Conflict("item '" + item_id + "' is already resolved");
    const json event{{"type", "resolved"},
                     {"item_id", item_id},
                     {"chosen_class_id", chosen_class_id ? json(*chosen_class_id) : json(nullptr)},
                     {"rejected_all", !chosen_class_id.has_value()},
                     {"reviewer", reviewer},
                     {"timestamp", timestamp}};
    append_event(event);
    apply_event(state_, event);
    write_snapshot();
    return state_.items.at(item_id);
}

std::optional<ReviewItem> ReviewQueue::get(const std::string& item_id) const {
    std::shared_lock lock(mutex_);
    auto it = state_.items.find(item_id);
    if (it == state_.items.end()) return std::nullopt;
    return it->second;
}

std::vector<ReviewItem> ReviewQueue::list(std::optional<Status> status, std::size_t limit) const {
    std::shared_lock lock(mutex_);
    std::vector<const ReviewItem*> matching;
    for (const auto& [id, item] : state_.items)
        if (!status || item.status == *status) matching.push_back(&item);
    // Numeric item order is enqueue order.
    std::sort(matching.begin(), matching.end(), [](const ReviewItem* a, const ReviewItem* b) {
        return std::stoull(a->item_id) < std::stoull(b->item_id);
    });
    std::vector<ReviewItem> out;
    for (const auto* item : matching) {
        if (out.size() >= limit) break;
        out.push_back(*item);
    }
    return out;
}

QueueStats ReviewQueue::stats() const {
    std::shared_lock lock(mutex_);
    QueueStats s;
    std::size_t agreed = 0;
    for (const auto& [id, item] : state_.items) {
        if (item.status == Status::pending) {
            ++s.pending;
            continue;
        }
        ++s.resolved;
        if (item.resolution->rejected_all()) {
            ++s.rejected;
        } else if (!item.top3.empty() && *item.resolution->chosen_class_id == item.top3.front().class_id) {
            ++agreed;
        }
    }
    if (s.resolved > 0) s.agreement_rate = static_cast<double>(agreed) / static_cast<double>(s.resolved);
    return s;
}

QueueState ReviewQueue::state() const {
    std::shared_lock lock(mutex_);
    return state_;
}

StoreLock::StoreLock(fs::path lock_path) : path_(std::move(lock_path)) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw Error("cannot create lock file " + path_.string());

        long owner = 0;
        {
            std::ifstream in(path_);
            in >> owner;
        }
        if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM))
            throw Conflict("queue store is locked by running process " + std::to_string(owner) + " (" +
                           path_.string() + ")");
        std::error_code ec;
        fs::remove(path_, ec);  // stale lock from a dead process
    }
    throw Conflict("could not acquire " + path_.string());
}

StoreLock::~StoreLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

std::size_t queue_low_confidence(const fusion::PredictionFile& predictions, const corpus::CorpusManifest& manifest,
                                 const std::map<std::string, ocr::ExtractedDocument>& documents, ReviewQueue& queue) {
    if (predictions.top_k < 3) throw PreconditionError("review items need top_k >= 3 predictions");
    std::map<std::string, const corpus::ImageRecord*> records;
    for (const auto& r : manifest.records) records[r.image_id] = &r;

    std::size_t added = 0;
    for (const auto& p : predictions.records) {
        if (p.confidence != fusion::Confidence::low) continue;
        if (p.top_k.size() < 3) throw PreconditionError("prediction for '" + p.image_id + "' has fewer than 3 candidates");
        ReviewItem item;
        item.image_id = p.image_id;
        if (auto it = records.find(p.image_id); it != records.end())
            item.image_path = manifest.resolve(*it->second).string();
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& c = p.top_k[i];
            const std::string name = c.class_id >= 0 && static_cast<std::size_t>(c.class_id) < manifest.classes.size()
                                         ? manifest.classes[c.class_id]
                                         : std::to_string(c.class_id);
            item.top3.push_back({c.class_id, name, c.probability});
        }
        if (auto it = documents.find(p.image_id); it != documents.end()) item.document = it->second.document;
        item.image_argmax = p.image_argmax;
        item.text_argmax = p.text_argmax;
        if (queue.enqueue(std::move(item))) ++added;
    }
    return added;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    ::gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace leaflet::review
