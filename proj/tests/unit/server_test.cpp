#include <doctest.h>

#include <set>

#include "theia/error.hpp"
#include "theia/gate.hpp"

using namespace theia;

namespace {

const PredicateRegistry& reg() { return PredicateRegistry::builtin(); }

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("d" + std::to_string(100 + i));
    return out;
}

std::pair<std::unique_ptr<Coordinator>, std::unique_ptr<Fleet>> blue_fleet(std::size_t devices, std::size_t photos) {
    auto server = std::make_unique<Coordinator>(reg());
    auto fleet = std::make_unique<Fleet>(*server);
    for (std::size_t i = 0; i < devices; ++i) {
        const std::string id = "d" + std::to_string(i);
        fleet->add_device(make_device(id, device_corpus(id + "_", photos, i + 1), EnergySettings{}));
        server->register_device(id, photos);
    }
    return {std::move(server), std::move(fleet)};
}

}  // namespace

TEST_CASE("allocate budget") {
    const CostModel c;
    CHECK(allocate_budget(200, 500, c, 0.1) == BudgetAllocation{20, 10});
    CHECK(allocate_budget(200, 5, c, 0.1) == BudgetAllocation{5, 40});
    CHECK(allocate_budget(12, 5, c, 0.1) == BudgetAllocation{1, 12});
    CHECK(allocate_budget(400, 500, c) == BudgetAllocation{20, 20});
    try {
        allocate_budget(11, 5, c);
        FAIL("expected BudgetError");
    } catch (const BudgetError& e) {
        CHECK(e.required_minimum() == 12);
    }
    CHECK_THROWS_AS(allocate_budget(100, 0, c), NotFoundError);
}

TEST_CASE("select devices") {
    const auto all = ids(20);
    const auto a = select_devices(5, all, {}, 7);
    CHECK(a == select_devices(5, all, {}, 7));
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 5);

    const std::map<std::string, std::size_t> marks = {{"d105", 1}, {"d110", 3}, {"d101", 1}};
    const auto b = select_devices(5, all, marks, 7);
    REQUIRE(b.size() == 5);
    CHECK(b[0] == "d110");
    CHECK(b[1] == "d101");
    CHECK(b[2] == "d105");
    CHECK(select_devices(5, all, {}, 7) == a);

    const auto c = select_devices(5, all, {}, 7, {a.begin(), a.end()});
    for (const auto& d : c) CHECK(std::find(a.begin(), a.end(), d) == a.end());
}

TEST_CASE("ledger for 21 devices, 177 photos, 7 results") {
    const CostModel c;
    const Charges charges{21 * c.flat_per_device, 177 * c.per_photo, 7 * c.per_result};
    CHECK(charges.total() == 268);
}

TEST_CASE("session ledger identity and budget") {
    auto [server, fleet] = blue_fleet(6, 20);
    for (long budget : {12L, 60L, 150L, 700L}) {
        const std::string id = fleet->search(all_accept_query(), budget, 1);
        const Completion c = server->session(id).completion();
        const CostModel& k = server->options().costs;
        CHECK(c.charges.total() == static_cast<long>(c.devices_charged) * k.flat_per_device +
                                       static_cast<long>(c.photos_searched - c.cache_photos) * k.per_photo +
                                       static_cast<long>(c.results) * k.per_result);
        CHECK(c.charges.total() <= budget);
    }
}

TEST_CASE("invalid submissions") {
    Coordinator server(reg());
    server.register_device("a");
    QuerySpec bad = query_3();
    bad.root.predicate.name = "NoSuchPredicate";
    CHECK_THROWS_AS(server.submit(bad, 100, 1), ValidationError);
    CHECK_THROWS_AS(server.submit(query_3(), 5, 1), BudgetError);
    CHECK_THROWS_AS(server.session("s999"), NotFoundError);
}

TEST_CASE("partition agent") {
    Coordinator server(reg());
    const Photo blue = Photo::uniform("blue", 8, 8, {0, 0, 255});
    const QuerySpec q = cloudy_sky_query();
    OffloadRequest req{q.id, serialize_query(q), {{0, "RGB Threshold"}}, "dev", &blue};
    CHECK(server.partition_evaluate(req).accepted);
    CHECK(server.cache().size() == 1);

    req.predicates.clear();
    CHECK(server.partition_evaluate(req).accepted);

    const Photo red = Photo::uniform("red", 8, 8, {255, 0, 0});
    req.photo = &red;
    req.predicates = {{0, "RGB Threshold"}, {1, "Texture"}};
    const OffloadReply r = server.partition_evaluate(req);
    CHECK_FALSE(r.accepted);
    CHECK(r.evaluated.size() == 1);
    CHECK(server.cache().size() == 2);
}

TEST_CASE("cache is searched first and charged per result only") {
    Coordinator server(reg());
    Fleet fleet(server);
    Corpus corpus;
    for (const auto* id : {"c1", "c2", "c3"}) corpus[id] = std::make_shared<const Photo>(Photo::uniform(id, 8, 8, {9, 9, 9}));
    fleet.add_device(make_device("dev", corpus, EnergySettings{}));
    server.register_device("dev");

    QuerySpec q = all_accept_query(QueryId{55});
    q.root.predicate = PredicateSpec{"RGB Threshold", {"B"}, 128.0, {}, {}, {}};
    const Photo blue = Photo::uniform("c2", 8, 8, {0, 0, 255});
    // c2 is cached as blue so that only it matches from the cache.
    for (const auto* id : {"c1", "c3"}) {
        OffloadRequest req{q.id, serialize_query(q), {}, "dev", corpus[id].get()};
        server.partition_evaluate(req);
    }
    OffloadRequest req{q.id, serialize_query(q), {}, "dev", &blue};
    server.partition_evaluate(req);

    std::size_t device_evaluations = 0;
    fleet.on_step = [&](const FleetEvent&) { ++device_evaluations; };
    const std::string id = fleet.search(q, 100, 1);
    const SearchSession s = server.session(id);
    CHECK(s.cache_photos == 3);
    CHECK(s.results.size() == 1);
    CHECK(s.results[0].from_cache);
    CHECK(device_evaluations == 0);
    CHECK(s.charges() == Charges{1, 0, 10});

    const std::string again = fleet.search(q, 100, 2);
    CHECK(server.session(again).cache_photos == 0);
}

TEST_CASE("result stream resumes from any cursor") {
    auto [server, fleet] = blue_fleet(3, 10);
    const std::string id = fleet->search(all_accept_query(), 200, 4);
    const ResultPage all = server->results(id, 0);
    REQUIRE(all.records.size() > 3);
    CHECK(all.complete);
    CHECK(all.completion.has_value());
    const ResultPage tail = server->results(id, 2);
    REQUIRE(tail.records.size() == all.records.size() - 2);
    for (std::size_t i = 0; i < tail.records.size(); ++i)
        CHECK(tail.records[i].photo_id == all.records[i + 2].photo_id);
    const ResultPage end = server->results(id, all.next_cursor);
    CHECK(end.records.empty());
    CHECK(end.complete);
    for (std::size_t i = 0; i < all.records.size(); ++i) CHECK(all.records[i].index == i);
}

TEST_CASE("feedback marks") {
    auto [server, fleet] = blue_fleet(4, 10);
    const QuerySpec q = all_accept_query();
    const std::string id = fleet->search(q, 100, 1);
    const ResultRecord r = server->results(id, 0).records.at(0);
    server->mark_feedback(id, r.device_id, r.photo_id, true);
    server->mark_feedback(id, r.device_id, r.photo_id, true);
    CHECK(server->relevant_marks(q.id).at(r.device_id) == 1);
    CHECK_THROWS_AS(server->mark_feedback(id, r.device_id, "nope", true), NotFoundError);
    CHECK_THROWS_AS(server->mark_feedback("s999", r.device_id, r.photo_id, true), NotFoundError);

    const std::string next = fleet->search(q, 30, 9);
    CHECK(server->session(next).devices.front() == r.device_id);
}

TEST_CASE("no photo is evaluated twice for one query") {
    auto [server, fleet] = blue_fleet(4, 15);
    const QuerySpec q = all_accept_query();
    for (std::uint64_t k = 0; k < 6; ++k) fleet->search(q, 120, k);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : server->evaluations(q.id)) CHECK(seen.insert({e.device_id, e.photo_id}).second);
    CHECK(seen.size() > 20);
}

TEST_CASE("fleet network controls") {
    auto [server, fleet] = blue_fleet(1, 1);
    fleet->inject_delay("d0", 1000.0);
    CHECK(fleet->device("d0").effective_network().rtt_ms == 1066.0);
    CHECK_THROWS_AS(fleet->inject_delay("nope", 1.0), NotFoundError);
    CHECK_THROWS_AS(fleet->set_network_profile("nope", g3_profile()), NotFoundError);
}
