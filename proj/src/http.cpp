#include "theia/http.hpp"

#include <httplib.h>

#include <condition_variable>
#include <mutex>
#include <thread>

#include "theia/error.hpp"
#include "theia/wire.hpp"

namespace theia {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& what) {
    send_json(res, status, {{"error", what}});
}

std::size_t query_number(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw ParameterError(std::string("bad ") + key + ": " + v);
    }
    if (used != v.size()) throw ParameterError(std::string("bad ") + key + ": " + v);
    return static_cast<std::size_t>(n);
}

/// Maps the library's errors onto status codes.
template <typename F>
void guarded(httplib::Response& res, F&& handler) {
    try {
        handler();
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const BudgetError& e) {
        send_json(res, 422, {{"error", e.what()}, {"required_minimum", e.required_minimum()}});
    } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
    } catch (const ParseError& e) {
        send_json(res, 400, {{"error", e.what()}, {"line", e.line()}, {"column", e.column()}});
    } catch (const ParameterError& e) {
        send_error(res, 400, e.what());
    } catch (const Json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const Error& e) {
        send_error(res, 400, e.what());
    }
}

}  // namespace

struct HttpServer::Impl {
    Coordinator& server;
    Fleet* fleet;
    httplib::Server http;
    std::thread listener;

    std::mutex work_mutex;
    std::condition_variable work_cv;
    bool work = false;
    bool quitting = false;
    std::thread worker;

    Impl(Coordinator& s, Fleet* f) : server(s), fleet(f) {
        routes();
        if (fleet) worker = std::thread([this] { run_fleet(); });
    }

    void run_fleet() {
        std::unique_lock lock(work_mutex);
        while (true) {
            work_cv.wait(lock, [&] { return work || quitting; });
            if (quitting) return;
            work = false;
            lock.unlock();
            fleet->run_pending();
            lock.lock();
        }
    }

    void routes() {
        http.Post("/queries", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const Json body = Json::parse(req.body);
                const QuerySpec query = parse_query(body.at("query_xml").get<std::string>(), server.registry());
                const long budget = body.at("budget").get<long>();
                const std::uint64_t seed = body.value("seed", std::uint64_t{0});
                const std::string id = server.submit(query, budget, seed);
                if (fleet) {
                    std::lock_guard lock(work_mutex);
                    work = true;
                    work_cv.notify_all();
                }
                send_json(res, 201, session_json(server.session(id)));
            });
        });
        http.Get(R"(/queries/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, session_json(server.session(req.matches[1]))); });
        });
        http.Get(R"(/queries/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                const std::size_t cursor = query_number(req, "cursor", 0);
                const std::size_t wait = query_number(req, "wait_ms", 0);
                const ResultPage page = wait > 0 ? server.wait_results(id, cursor, std::chrono::milliseconds(wait))
                                                 : server.results(id, cursor);
                std::string out;
                for (const auto& r : page.records) out += Json(r).dump() + "\n";
                if (page.completion) {
                    Json done = *page.completion;
                    done["next_cursor"] = page.next_cursor;
                    out += done.dump() + "\n";
                } else {
                    out += Json{{"type", "status"},
                                {"status", page.complete ? "complete" : "running"},
                                {"next_cursor", page.next_cursor}}
                               .dump() +
                           "\n";
                }
                res.status = 200;
                res.set_content(out, "application/x-ndjson");
            });
        });
        http.Post(R"(/queries/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const Json body = Json::parse(req.body);
                server.mark_feedback(req.matches[1], body.at("device_id").get<std::string>(),
                                     body.at("photo_id").get<std::string>(), body.at("relevant").get<bool>());
                send_json(res, 200, {{"ok", true}});
            });
        });
        http.Get(R"(/devices/([^/]+)/inbox)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                std::optional<std::size_t> photos;
                if (req.has_param("photos")) photos = query_number(req, "photos", 0);
                server.register_device(id, photos);
                const auto wait = std::chrono::milliseconds(query_number(req, "wait_ms", 0));
                const auto assignments = server.take_assignments(id, wait);
                if (assignments.empty()) {
                    res.status = 204;
                    return;
                }
                send_json(res, 200, Json(assignments));
            });
        });
        http.Post(R"(/devices/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string device = req.matches[1];
                const Json body = Json::parse(req.body);
                const std::string session = body.at("session_id").get<std::string>();
                for (const auto& r : body.value("results", Json::array())) {
                    DeviceResult result = r.get<DeviceResult>();
                    if (result.device_id != device) throw ValidationError("result from another device");
                    server.accept_result(session, result);
                }
                if (body.contains("summary")) {
                    TaskSummary summary = body.at("summary").get<TaskSummary>();
                    if (summary.device_id != device) throw ValidationError("summary from another device");
                    server.accept_summary(session, summary);
                }
                send_json(res, 200, {{"ok", true}});
            });
        });
        http.Post("/partition/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!req.has_file("spec") || !req.has_file("photo"))
                    throw ParameterError("multipart parts \"spec\" and \"photo\" are required");
                const Json spec = Json::parse(req.get_file_value("spec").content);
                const Photo photo =
                    decode_ppm(spec.at("photo_id").get<std::string>(), req.get_file_value("photo").content);
                OffloadRequest request;
                request.query_id = QueryId{spec.at("query_id").get<std::uint64_t>()};
                request.query_xml = spec.at("query_xml").get<std::string>();
                request.device_id = spec.at("device_id").get<std::string>();
                for (const auto& p : spec.at("predicates"))
                    request.predicates.emplace_back(p.at("index").get<std::size_t>(), p.at("name").get<std::string>());
                request.photo = &photo;
                send_json(res, 200, Json(server.partition_evaluate(request)));
            });
        });
    }

    static Json session_json(const SearchSession& s) {
        Json shares = Json::object();
        for (const auto& [d, v] : s.shares) shares[d] = v;
        return {{"session_id", s.id},
                {"query_id", s.query.id.value},
                {"budget", s.budget},
                {"seed", s.seed},
                {"devices", s.devices},
                {"shares", shares},
                {"status", s.complete ? "complete" : "running"},
                {"results", s.results.size()},
                {"charges", s.charges()}};
    }
};

HttpServer::HttpServer(Coordinator& server, Fleet* fleet) : impl_(std::make_unique<Impl>(server, fleet)) {}

HttpServer::~HttpServer() {
    stop();
    {
        std::lock_guard lock(impl_->work_mutex);
        impl_->quitting = true;
        impl_->work_cv.notify_all();
    }
    if (impl_->worker.joinable()) impl_->worker.join();
}

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->http.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!impl_->http.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::start() {
    impl_->listener = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

void HttpServer::serve() { impl_->http.listen_after_bind(); }

void HttpServer::stop() {
    impl_->http.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

struct HttpOffloadChannel::Impl {
    httplib::Client client;
    Impl(const std::string& host, int port) : client(host, port) {}
};

HttpOffloadChannel::HttpOffloadChannel(const std::string& host, int port)
    : impl_(std::make_unique<Impl>(host, port)) {}

HttpOffloadChannel::~HttpOffloadChannel() = default;

OffloadReply HttpOffloadChannel::evaluate(const OffloadRequest& request) {
    if (!request.photo) throw ParameterError("offload request carries no photo");
    httplib::MultipartFormDataItems items = {
        {"spec", offload_spec_json(request).dump(), "", "application/json"},
        {"photo", encode_ppm(*request.photo), request.photo->id() + ".ppm", "image/x-portable-pixmap"},
    };
    auto res = impl_->client.Post("/partition/evaluate", items);
    if (!res) throw TransportError("partition agent unreachable: " + httplib::to_string(res.error()));
    if (res->status == 422) throw ValidationError("partition agent rejected the request: " + res->body);
    if (res->status != 200) throw TransportError("partition agent answered " + std::to_string(res->status));
    return Json::parse(res->body).get<OffloadReply>();
}

std::size_t run_remote_device(const std::string& host, int port, DeviceState& device,
                              const PredicateRegistry& registry, const RemoteDeviceOptions& options) {
    httplib::Client client(host, port);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(options.poll_wait) +
                            std::chrono::seconds(5));
    HttpOffloadChannel channel(host, port);
    const std::string inbox = "/devices/" + device.device_id + "/inbox?photos=" +
                              std::to_string(device.corpus.size()) +
                              "&wait_ms=" + std::to_string(options.poll_wait.count());
    const std::string report = "/devices/" + device.device_id + "/report";

    auto post = [&](const Json& body) {
        auto res = client.Post(report, body.dump(), "application/json");
        if (!res) throw TransportError("server unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200) throw TransportError("report rejected: " + res->body);
    };

    std::size_t tasks = 0, idle = 0;
    while (!(options.stop && options.stop->load())) {
        auto res = client.Get(inbox);
        if (!res) throw TransportError("server unreachable: " + httplib::to_string(res.error()));
        if (res->status == 204) {
            if (options.max_idle_polls && ++idle >= options.max_idle_polls) break;
            continue;
        }
        if (res->status != 200) throw TransportError("inbox answered " + std::to_string(res->status));
        idle = 0;
        for (const auto& item : Json::parse(res->body)) {
            Assignment a = assignment_from_json(item, registry);
            SearchRun run(std::move(a.task), device, registry, &channel);
            while (!run.done())
                run.step([&](const DeviceResult& r) { post({{"session_id", a.session_id}, {"results", {r}}}); });
            post({{"session_id", a.session_id}, {"summary", run.summary()}});
            ++tasks;
        }
    }
    return tasks;
}

}  // namespace theia
