#include <doctest.h>
#include <httplib.h>

#include <thread>

#include "theia/error.hpp"
#include "theia/gate.hpp"
#include "theia/http.hpp"

using namespace theia;

namespace {

const PredicateRegistry& reg() { return PredicateRegistry::builtin(); }

std::vector<Json> lines(const std::string& body) {
    std::vector<Json> out;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(Json::parse(line));
    return out;
}

}  // namespace

TEST_CASE("remote device session over http") {
    Coordinator server(reg());
    HttpServer http(server);
    const int port = http.bind("127.0.0.1", 0);
    http.start();

    std::atomic<bool> stop{false};
    DeviceState device = make_device("remote", device_corpus("r", 12, 3), EnergySettings{});
    std::size_t tasks = 0;
    std::thread worker([&] {
        RemoteDeviceOptions o;
        o.poll_wait = std::chrono::milliseconds(100);
        o.stop = &stop;
        tasks = run_remote_device("127.0.0.1", port, device, reg(), o);
    });

    httplib::Client client("127.0.0.1", port);
    // Wait for the device to register through its first poll.
    for (int i = 0; i < 100 && server.registered().empty(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    REQUIRE(server.registered().size() == 1);

    const Json body = {{"query_xml", serialize_query(all_accept_query())}, {"budget", 1 + 5 * 11}, {"seed", 2}};
    auto res = client.Post("/queries", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    const std::string session = Json::parse(res->body).at("session_id");

    std::vector<Json> records;
    std::size_t cursor = 0;
    bool done = false;
    for (int i = 0; i < 50 && !done; ++i) {
        auto page = client.Get("/queries/" + session + "/results?cursor=" + std::to_string(cursor) + "&wait_ms=200");
        REQUIRE(page);
        for (const auto& j : lines(page->body)) {
            if (j.at("type") == "result") records.push_back(j);
            if (j.at("type") == "complete") {
                done = true;
                CHECK(j.at("charges").at("total") == 56);
                CHECK(j.at("photos_searched") == 5);
            }
            cursor = j.value("next_cursor", cursor);
        }
    }
    stop = true;
    worker.join();
    CHECK(done);
    CHECK(records.size() == 5);
    CHECK(tasks == 1);
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].at("index") == i);

    auto mark = client.Post("/queries/" + session + "/feedback",
                            Json{{"device_id", "remote"}, {"photo_id", records[0].at("photo_id")}, {"relevant", true}}.dump(),
                            "application/json");
    REQUIRE(mark);
    CHECK(mark->status == 200);

    auto detail = client.Get("/queries/" + session);
    REQUIRE(detail);
    CHECK(detail->status == 200);
    http.stop();
}

TEST_CASE("http errors") {
    Coordinator server(reg());
    server.register_device("a");
    HttpServer http(server);
    const int port = http.bind("127.0.0.1", 0);
    http.start();
    httplib::Client client("127.0.0.1", port);

    auto missing = client.Get("/queries/s42/results?cursor=0");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto low = client.Post("/queries", Json{{"query_xml", serialize_query(query_3())}, {"budget", 3}}.dump(),
                           "application/json");
    REQUIRE(low);
    CHECK(low->status == 422);
    CHECK(Json::parse(low->body).at("required_minimum") == 12);

    auto bad = client.Post("/queries", Json{{"query_xml", "<query"}, {"budget", 30}}.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto feedback = client.Post("/queries/s42/feedback", Json{{"device_id", "a"}, {"photo_id", "x"}, {"relevant", true}}.dump(),
                                "application/json");
    REQUIRE(feedback);
    CHECK(feedback->status == 404);

    auto idle = client.Get("/devices/a/inbox?wait_ms=10");
    REQUIRE(idle);
    CHECK(idle->status == 204);
    http.stop();
}

TEST_CASE("partition agent over http") {
    Coordinator server(reg());
    HttpServer http(server);
    const int port = http.bind("127.0.0.1", 0);
    http.start();
    HttpOffloadChannel channel("127.0.0.1", port);
    const Photo blue = Photo::uniform("blue", 8, 8, {0, 0, 255});
    const QuerySpec q = cloudy_sky_query();
    OffloadRequest req{q.id, serialize_query(q), {{0, "RGB Threshold"}}, "dev", &blue};
    const OffloadReply r = channel.evaluate(req);
    CHECK(r.accepted);
    CHECK(r.evaluated.size() == 1);
    CHECK(server.cache().size() == 1);

    req.predicates = {{0, "Bogus"}};
    CHECK_THROWS(channel.evaluate(req));
    http.stop();

    HttpOffloadChannel dead("127.0.0.1", port);
    CHECK_THROWS_AS(dead.evaluate(OffloadRequest{q.id, serialize_query(q), {}, "dev", &blue}), TransportError);
}
