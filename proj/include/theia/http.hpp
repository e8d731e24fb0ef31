#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include "theia/server.hpp"

namespace theia {

/// HTTP+JSON front of a Coordinator:
///
///   POST /queries                     {"query_xml", "budget", "seed"} -> {"session_id", ...}
///   GET  /queries/{s}                 session detail (device order, shares, status)
///   GET  /queries/{s}/results?cursor= newline-delimited records, then a completion or status line
///   POST /queries/{s}/feedback        {"photo_id", "device_id", "relevant"}
///   GET  /devices/{id}/inbox          long-poll for assignments; 204 when none arrive
///   POST /devices/{id}/report         {"session_id", "results": [...], "summary": {...}}
///   POST /partition/evaluate          multipart: "spec" (JSON) and "photo" (PPM)
///
/// With a fleet attached, submitted sessions are also run on the in-process devices.
class HttpServer {
public:
    explicit HttpServer(Coordinator& server, Fleet* fleet = nullptr);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves on a background thread.
    void start();
    /// Serves on the calling thread until stop().
    void serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Offload channel speaking POST /partition/evaluate.
class HttpOffloadChannel : public OffloadChannel {
public:
    HttpOffloadChannel(const std::string& host, int port);
    ~HttpOffloadChannel() override;
    OffloadReply evaluate(const OffloadRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct RemoteDeviceOptions {
    std::chrono::milliseconds poll_wait{1000};
    /// Stop after this many consecutive empty polls; 0 polls forever.
    std::size_t max_idle_polls = 0;
    std::atomic<bool>* stop = nullptr;
};

/// A device process: long-polls its inbox, runs each assignment, streams every
/// result as soon as it is found and reports the task summary. Returns the
/// number of tasks run.
std::size_t run_remote_device(const std::string& host, int port, DeviceState& device,
                              const PredicateRegistry& registry, const RemoteDeviceOptions& options);

}  // namespace theia
