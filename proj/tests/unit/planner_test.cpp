#include <doctest.h>

#include <limits>

#include "theia/error.hpp"
#include "theia/planner.hpp"

using namespace theia;

namespace {

// Slots 0, 1, 2 are A, B, C.
PlannerState cba_state(double wireless) {
    PlannerState s({"A", "B", "C"}, wireless);
    const double cost[3] = {10.0, 1.0, 5.0};
    const std::uint64_t accepts[3] = {50, 90, 10};
    for (int i = 0; i < 3; ++i) {
        s.stats[i].samples = 100;
        s.stats[i].accepts = accepts[i];
        s.stats[i].cost_ema = cost[i];
        s.stats[i].cost_observations = 100;
    }
    return s;
}

const std::vector<double> kCosts = {10.0, 1.0, 5.0};
const std::vector<double> kSel = {0.5, 0.9, 0.1};
const SelectivityOracle kOracle = [](std::size_t p, std::span<const std::size_t>) { return kSel[p]; };
const std::vector<std::size_t> kCba = {2, 1, 0};

}  // namespace

TEST_CASE("expected pipeline cost") {
    const std::vector<double> one = {5.0};
    CHECK(expected_pipeline_cost(one, std::vector<double>{}) == 5.0);
    const std::vector<double> c = {5.0, 1.0, 10.0}, s = {0.1, 0.9};
    CHECK(expected_pipeline_cost(c, s) == doctest::Approx(6.0));
    const std::vector<double> all = {1.0, 1.0, 1.0};
    CHECK(expected_pipeline_cost(c, all) == doctest::Approx(16.0));
}

TEST_CASE("order by rank") {
    PlannerState s = cba_state(8.0);
    const std::vector<std::size_t> abc = {0, 1, 2};
    CHECK(order_by_rank(s, abc) == kCba);
    // A and C moved, B stayed in the middle.
    CHECK(s.stats[0].position_epoch == 1);
    CHECK(s.stats[1].position_epoch == 0);
    CHECK(s.stats[2].position_epoch == 1);
    CHECK(s.stats[0].samples == 0);

    const OptimalPlan opt = brute_force_optimal(kCosts, kOracle, std::numeric_limits<double>::infinity());
    CHECK(opt.order == kCba);
    CHECK(opt.device_cost == doctest::Approx(6.0));
}

TEST_CASE("unsampled slots keep their positions") {
    PlannerState s({"A", "B", "C"});
    const std::vector<std::size_t> order = {1, 2, 0};
    CHECK(order_by_rank(s, order) == order);

    std::vector<RankInput> in = {{"A", 10.0, 0.5}, {"B", 3.0, std::nullopt}, {"C", 5.0, 0.1}};
    const std::vector<std::size_t> cur = {0, 1, 2};
    CHECK(rank_order(in, cur) == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("equal ranks order by name") {
    std::vector<RankInput> in = {{"zeta", 2.0, 0.5}, {"alpha", 2.0, 0.5}};
    const std::vector<std::size_t> cur = {0, 1};
    CHECK(rank_order(in, cur) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("place pw") {
    CHECK(place_pw(kCba, cba_state(8.0)).offload_index == 1);
    CHECK(plan_device_cost(kCba, 1, kCosts, kOracle, 8.0) == doctest::Approx(5.8));
    CHECK(plan_device_cost(kCba, 3, kCosts, kOracle, 8.0) == doctest::Approx(6.0));
    CHECK(plan_device_cost(kCba, 0, kCosts, kOracle, 8.0) == doctest::Approx(8.0));
    CHECK(place_pw(kCba, cba_state(0.5)).offload_index == 0);
    CHECK(place_pw(kCba, cba_state(100.0)).fully_local());

    const OptimalPlan opt = brute_force_optimal(kCosts, kOracle, 8.0);
    CHECK(opt.order == kCba);
    CHECK(opt.offload_index == 1);
    CHECK(opt.device_cost == doctest::Approx(5.8));
}

TEST_CASE("pw stays local when transmitting after the last slot cannot pay off") {
    // Rank of the last slot exceeds the wireless cost but its cost does not.
    std::vector<RankInput> in = {{"A", 1.0, 0.5}, {"B", 3.0, 0.5}};
    const std::vector<std::size_t> order = {0, 1};
    CHECK(pw_position(in, order, 4.0) == 2);
    // All_Accept never rejects: infinite rank, but keeping it local is cheaper.
    std::vector<RankInput> aa = {{"All_Accept", 0.01, 1.0}};
    const std::vector<std::size_t> one = {0};
    CHECK(pw_position(aa, one, 5.0) == 1);
}

TEST_CASE("replan cadence") {
    PlannerState s = cba_state(8.0);
    const Partition current{{0, 1, 2}, 3};
    s.photos_since_replan = 4;
    CHECK(replan(s, current) == current);
    s.photos_since_replan = 5;
    const Partition next = replan(s, current);
    CHECK(next.order == kCba);
    CHECK(next.offload_index == 1);
    CHECK(s.photos_since_replan == 0);
}

TEST_CASE("replan with no rank change is identical") {
    PlannerState s = cba_state(8.0);
    const Partition current{kCba, 1};
    s.photos_since_replan = 5;
    CHECK(replan(s, current) == current);
}

TEST_CASE("texture moves local once its measured cost drops below the wireless cost") {
    PlannerState s({"face", "texture"}, 20.0);
    s.stats[0] = {100, 25, 3.0, 100, 0};
    s.stats[1] = {100, 40, 30.0, 100, 0};
    const Partition before = place_pw(std::vector<std::size_t>{0, 1}, s);
    CHECK(before.offload_index == 1);
    s.stats[1].cost_ema = 6.0;
    s.photos_since_replan = 5;
    const Partition after = replan(s, before);
    CHECK(after.offload_index == 2);
}

TEST_CASE("network change moves pw only") {
    PlannerState s = cba_state(8.0);
    const Partition p{kCba, 1};
    CHECK(replan_on_network_change(s, 30.0, p) == Partition{kCba, 3});
    CHECK(replan_on_network_change(s, 8.0, p) == p);
    CHECK(replan_on_network_change(s, 0.0, p) == Partition{kCba, 0});
    CHECK_THROWS_AS(replan_on_network_change(s, -1.0, p), ParameterError);
}

TEST_CASE("brute force edges") {
    const std::vector<double> none;
    CHECK(brute_force_optimal(none, kOracle, 5.0).device_cost == 0.0);
    const std::vector<double> one = {2.0};
    const auto sel = [](std::size_t, std::span<const std::size_t>) { return 0.5; };
    CHECK(brute_force_optimal(one, sel, 5.0).offload_index == 1);
    const std::vector<double> eleven(11, 1.0);
    CHECK_THROWS_AS(brute_force_optimal(eleven, sel, 5.0), SizeError);
}

TEST_CASE("greedy order conditions on the prefix") {
    // B passes exactly the photos A passes, so after A it filters nothing.
    const std::vector<double> costs = {1.0, 1.0, 2.0};
    const SelectivityOracle oracle = [](std::size_t p, std::span<const std::size_t> prefix) {
        const bool after_a = std::find(prefix.begin(), prefix.end(), 0) != prefix.end();
        if (p == 1 && after_a) return 1.0;
        if (p == 0 && std::find(prefix.begin(), prefix.end(), 1) != prefix.end()) return 1.0;
        return p == 2 ? 0.5 : 0.2;
    };
    const auto order = greedy_rank_order(costs, oracle);
    CHECK(order.front() == 0);
    CHECK(order[1] == 2);
}
