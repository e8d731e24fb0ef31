#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>

#include "theia/error.hpp"
#include "theia/gate.hpp"

using namespace theia;

namespace {

const PredicateRegistry& reg() { return PredicateRegistry::builtin(); }

SearchTask task_for(const QuerySpec& q, long share, Strategy strategy = Strategy::Local) {
    SearchTask t;
    t.query = q;
    t.budget_share = share;
    t.seed = 3;
    t.options.strategy = strategy;
    return t;
}

QuerySpec never_query() {
    return synthetic_query({{"never", 0.0, 1.0, 9}}, QueryId{77});
}

DeviceState phone(std::size_t photos) { return make_device("phone", device_corpus("p", photos, 5), EnergySettings{}); }

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("theia-unit-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("all-accept share of 23 buys two photos") {
    DeviceState d = phone(20);
    std::vector<DeviceResult> results;
    const TaskSummary s = run_search_task(task_for(all_accept_query(), 23), d, reg(), nullptr,
                                          [&](const DeviceResult& r) { results.push_back(r); });
    CHECK(s.photos_searched == 2);
    CHECK(s.results == 2);
    CHECK(results.size() == 2);
    CHECK(s.charges == Charges{1, 2, 20});
    CHECK(s.charges.total() == 23);
}

TEST_CASE("zero-selectivity share of 52 searches 41 photos") {
    DeviceState d = phone(100);
    const TaskSummary s = run_search_task(task_for(never_query(), 52), d, reg(), nullptr, {});
    CHECK(s.photos_searched == 41);
    CHECK(s.results == 0);
    CHECK(s.charges.total() == 42);
}

TEST_CASE("empty corpus and insufficient share") {
    DeviceState d = make_device("empty", {}, EnergySettings{});
    const TaskSummary s = run_search_task(task_for(all_accept_query(), 50), d, reg(), nullptr, {});
    CHECK(s.photos_searched == 0);
    CHECK(s.charges == Charges{1, 0, 0});
    DeviceState e = phone(3);
    CHECK_THROWS_AS(run_search_task(task_for(all_accept_query(), 0), e, reg(), nullptr, {}), BudgetError);
}

TEST_CASE("training phase") {
    DeviceState d = phone(40);
    SearchTask t = task_for(query_1_analog(), 10000, Strategy::Partitioned);
    SearchRun run(t, d, reg());
    const Partition p = run_training_phase(run);
    REQUIRE(run.phase() == Phase::Evaluation);
    std::size_t evaluations = 0;
    for (const auto& rec : run.log())
        if (rec.phase == Phase::Training) evaluations += rec.local.size();
    CHECK(evaluations >= 15);
    for (const auto& st : run.planner().stats) CHECK_FALSE(has_enough_samples(st));
    CHECK(p.order == std::vector<std::size_t>{0, 1, 2});

    DeviceState small = phone(3);
    SearchRun r3(task_for(query_1_analog(), 10000), small, reg());
    run_training_phase(r3);
    std::size_t photos = 0;
    for (const auto& rec : r3.log()) photos += rec.phase == Phase::Training;
    CHECK(photos == 3);
}

TEST_CASE("select next photo") {
    StateStore store;
    Rng rng(1);
    std::vector<std::string> candidates = {"a", "b", "c"};
    store.insert(QueryId{1}, "a");
    store.insert(QueryId{1}, "b");
    CHECK(select_next_photo(candidates, store, QueryId{1}, rng) == std::optional<std::string>("c"));
    CHECK_FALSE(select_next_photo(candidates, store, QueryId{1}, rng).has_value());
}

TEST_CASE("resubmission continues with unsearched photos") {
    DeviceState d = phone(100);
    const QuerySpec q = all_accept_query();
    const TaskSummary first = run_search_task(task_for(q, 1 + 50 * 11), d, reg(), nullptr, {});
    REQUIRE(first.photos_searched == 50);
    SearchTask again = task_for(q, 1 + 50 * 11);
    again.seed = 99;
    const TaskSummary second = run_search_task(again, d, reg(), nullptr, {});
    CHECK(second.photos_searched == 50);
    std::set<std::string> all(first.searched.begin(), first.searched.end());
    for (const auto& id : second.searched) CHECK(all.insert(id).second);
    CHECK(all.size() == 100);
}

TEST_CASE("state store persists") {
    const auto dir = scratch("store");
    {
        StateStore s(dir);
        CHECK(s.insert(QueryId{5}, "x"));
        CHECK_FALSE(s.insert(QueryId{5}, "x"));
        s.insert(QueryId{5}, "y");
    }
    StateStore again(dir);
    CHECK(again.contains(QueryId{5}, "x"));
    CHECK(again.ids(QueryId{5}).size() == 2);
    CHECK_FALSE(again.contains(QueryId{6}, "x"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("short-circuit and offload extremes") {
    Coordinator server(reg());
    InProcessChannel channel(server);
    DeviceState d = phone(60);
    SearchTask t = task_for(query_1_analog(), 100000, Strategy::FullOffload);
    SearchRun run(t, d, reg(), &channel);
    while (!run.done()) run.step();
    std::size_t offloaded = 0, evaluated = 0;
    for (const auto& rec : run.log()) {
        if (rec.phase != Phase::Evaluation) continue;
        ++evaluated;
        CHECK(rec.offload_index == 0);
        CHECK(rec.local.empty());
        offloaded += rec.offloaded;
    }
    CHECK(evaluated > 0);
    CHECK(offloaded == evaluated);

    DeviceState l = phone(60);
    SearchRun local(task_for(query_1_analog(), 100000, Strategy::Local), l, reg(), &channel);
    while (!local.done()) local.step();
    for (const auto& rec : local.log()) {
        CHECK_FALSE(rec.offloaded);
        if (rec.phase == Phase::Training) continue;
        CHECK(rec.tx_ms == 0.0);
        // A rejection stops the pipeline.
        for (std::size_t i = 0; i + 1 < rec.local.size(); ++i) CHECK(rec.local[i].verdict.accepted);
    }
}

TEST_CASE("failed offload falls back to local evaluation") {
    Coordinator server(reg());
    InProcessChannel inner(server);
    FaultyChannel faulty(inner, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    DeviceState d = phone(40);
    SearchRun run(task_for(query_1_analog(), 100000, Strategy::FullOffload), d, reg(), &faulty);
    while (!run.done()) run.step();
    bool fell_back = false;
    for (const auto& rec : run.log())
        if (rec.offload_failed) {
            fell_back = true;
            CHECK_FALSE(rec.local.empty());
        }
    CHECK(fell_back);
    CHECK(run.summary().photos_searched == 40);
}

TEST_CASE("energy ledger is additive") {
    Coordinator server(reg());
    InProcessChannel channel(server);
    DeviceState d = phone(50);
    const EnergyLedger start = d.ledger;
    SearchRun run(task_for(query_1_analog(), 100000, Strategy::Partitioned), d, reg(), &channel);
    EnergyLedger sum;
    EnergyLedger last = d.ledger;
    while (!run.done())
        if (auto rec = run.step()) {
            sum += rec->energy;
            CHECK(d.ledger.compute_mj >= last.compute_mj);
            CHECK(d.ledger.transmit_mj >= last.transmit_mj);
            CHECK(d.ledger.idle_mj >= last.idle_mj);
            last = d.ledger;
        }
    const EnergyLedger spent = d.ledger - start;
    CHECK(sum.total_mj() <= spent.total_mj() * (1 + 1e-9));
    CHECK(run.summary().energy.total_mj() == doctest::Approx(spent.total_mj()).epsilon(1e-9));
}

TEST_CASE("network profile changes") {
    DeviceState d = phone(1);
    inject_delay(d, 1000.0);
    CHECK(d.effective_network().rtt_ms == 1066.0);
    const auto v = d.network_version;
    inject_delay(d, 0.0);
    CHECK(d.effective_network() == wifi_profile());
    set_network_profile(d, g3_profile());
    CHECK(d.network_version > v);
    CHECK(d.effective_network().tx_power_mw == 571.0);
}

TEST_CASE("task options from config") {
    const TaskOptions o = task_options_from(Config::parse("device.training_photos=7\ndevice.offload_probes=1\n"));
    CHECK(o.training_photos == 7);
    CHECK(o.offload_probes == 1);
}
