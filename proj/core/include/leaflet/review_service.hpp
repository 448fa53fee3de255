#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "leaflet/corpus.hpp"
#include "leaflet/review_queue.hpp"

namespace leaflet::review {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;                ///< 0 picks a free port
    std::filesystem::path ui_dir;   ///< static review UI bundle, optional
    std::function<std::string()> clock = utc_timestamp;
};

/// HTTP/JSON front end of a ReviewQueue.
///
///   GET  /api/queue?status=pending|resolved|all&limit=N
///   GET  /api/items/{id}
///   POST /api/items/{id}/resolution   {"chosen_class_id": <id> | "rejected_all", "reviewer": "..."}
///   GET  /api/stats
///   GET  /images/{image_id}
///   GET  /*                            files of ui_dir
class ReviewService {
public:
    ReviewService(ReviewQueue& queue, const corpus::CorpusManifest* manifest, ServiceOptions options = {});
    ~ReviewService();

    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    /// Binds the socket and returns the bound port.
    int bind();
    /// Serves until stop() is called. Requires bind().
    void run();
    /// bind() + run() on a background thread; returns the bound port.
    int start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace leaflet::review
