#include "theia/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "theia/error.hpp"

namespace theia {

PlannerState::PlannerState(std::vector<std::string> slot_names, double wireless)
    : names(std::move(slot_names)), stats(names.size()), wireless_cost(wireless) {}

std::vector<RankInput> PlannerState::rank_inputs() const {
    std::vector<RankInput> out;
    out.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        RankInput in{names[i], stats[i].cost_ema, std::nullopt};
        if (has_enough_samples(stats[i])) in.selectivity = selectivity_estimate(stats[i]);
        out.push_back(std::move(in));
    }
    return out;
}

double expected_pipeline_cost(std::span<const double> costs, std::span<const double> selectivities) {
    double total = 0.0, pass = 1.0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        total += costs[i] * pass;
        if (i < selectivities.size()) pass *= selectivities[i];
    }
    return total;
}

std::vector<std::size_t> rank_order(std::span<const RankInput> inputs, std::span<const std::size_t> current_order) {
    struct Keyed {
        std::size_t slot;
        std::size_t position;
        double rank;
    };
    std::vector<Keyed> sampled;
    std::vector<std::size_t> sampled_positions;
    for (std::size_t pos = 0; pos < current_order.size(); ++pos) {
        const std::size_t slot = current_order[pos];
        const RankInput& in = inputs[slot];
        if (in.selectivity) {
            sampled.push_back({slot, pos, conditional_rank(in.cost, *in.selectivity)});
            sampled_positions.push_back(pos);
        }
    }
    std::sort(sampled.begin(), sampled.end(), [&](const Keyed& a, const Keyed& b) {
        if (a.rank != b.rank) return a.rank < b.rank;
        const auto& na = inputs[a.slot].name;
        const auto& nb = inputs[b.slot].name;
        if (na != nb) return na < nb;
        return a.position < b.position;
    });
    std::vector<std::size_t> order(current_order.begin(), current_order.end());
    for (std::size_t i = 0; i < sampled.size(); ++i) order[sampled_positions[i]] = sampled[i].slot;
    return order;
}

std::vector<std::size_t> order_by_rank(PlannerState& state, std::span<const std::size_t> current_order) {
    const auto inputs = state.rank_inputs();
    std::vector<std::size_t> next = rank_order(inputs, current_order);
    for (std::size_t pos = 0; pos < next.size(); ++pos)
        if (next[pos] != current_order[pos]) state.stats[next[pos]].new_epoch();
    return next;
}

std::size_t pw_position(std::span<const RankInput> inputs, std::span<const std::size_t> order, double wireless_cost) {
    std::size_t idx = order.size();
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const RankInput& in = inputs[order[pos]];
        const double rank = in.selectivity ? conditional_rank(in.cost, *in.selectivity) : in.cost;
        // Ties keep the predicate on the device.
        if (rank > wireless_cost) {
            idx = pos;
            break;
        }
    }
    if (idx == order.size()) return idx;
    // Past the last slot nothing is transmitted, so fully local can still beat pw.
    double offload = 0.0, local = 0.0, pass = 1.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        if (pos == idx) offload = local + pass * wireless_cost;
        const RankInput& in = inputs[order[pos]];
        local += pass * in.cost;
        pass *= in.selectivity.value_or(1.0);
    }
    return local <= offload ? order.size() : idx;
}

Partition place_pw(std::span<const std::size_t> order, const PlannerState& state) {
    const auto inputs = state.rank_inputs();
    return {std::vector<std::size_t>(order.begin(), order.end()), pw_position(inputs, order, state.wireless_cost)};
}

Partition replan(PlannerState& state, const Partition& current) {
    if (state.photos_since_replan < kReplanCadence) return current;
    state.photos_since_replan = 0;
    const auto order = order_by_rank(state, current.order);
    return place_pw(order, state);
}

Partition replan_on_network_change(PlannerState& state, double new_wireless_cost, const Partition& current) {
    if (!(new_wireless_cost >= 0.0)) throw ParameterError("wireless cost must be >= 0");
    state.wireless_cost = new_wireless_cost;
    return place_pw(current.order, state);
}

double plan_device_cost(std::span<const std::size_t> order, std::size_t offload_index, std::span<const double> costs,
                        const SelectivityOracle& selectivity, double wireless_cost) {
    double total = 0.0, pass = 1.0;
    const std::size_t local = std::min(offload_index, order.size());
    for (std::size_t pos = 0; pos < local; ++pos) {
        total += pass * costs[order[pos]];
        pass *= selectivity(order[pos], order.subspan(0, pos));
    }
    if (local < order.size()) total += pass * wireless_cost;
    return total;
}

std::vector<std::size_t> greedy_rank_order(std::span<const double> costs, const SelectivityOracle& selectivity) {
    std::vector<std::size_t> order;
    std::vector<bool> used(costs.size(), false);
    while (order.size() < costs.size()) {
        std::size_t best = costs.size();
        double best_rank = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < costs.size(); ++p) {
            if (used[p]) continue;
            const double r = conditional_rank(costs[p], selectivity(p, order));
            if (best == costs.size() || r < best_rank) {
                best = p;
                best_rank = r;
            }
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

namespace {

bool less_within(double a, double b) {
    const double tol = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    return a < b - tol;
}

struct Search {
    std::span<const double> costs;
    const SelectivityOracle& selectivity;
    double wireless;
    std::size_t n;

    std::vector<std::size_t> order;
    std::vector<bool> used;
    std::vector<double> prefix_cost;  // local cost of the first k slots
    std::vector<double> prefix_pass;  // probability a photo passes the first k slots

    OptimalPlan best;
    double best_full = std::numeric_limits<double>::infinity();
    bool have = false;

    void consider(std::size_t k, double full) {
        double cost = prefix_cost[k];
        if (k < n) {
            if (std::isinf(wireless)) return;
            cost += prefix_pass[k] * wireless;
        }
        const bool better = !have || less_within(cost, best.device_cost) ||
                            (!less_within(best.device_cost, cost) && less_within(full, best_full));
        if (better) {
            have = true;
            best = {order, k, cost};
            best_full = full;
        }
    }

    void dfs() {
        const std::size_t k = order.size();
        if (k == n) {
            const double full = prefix_cost[n];
            for (std::size_t split = 0; split <= n; ++split) consider(split, full);
            return;
        }
        for (std::size_t p = 0; p < n; ++p) {
            if (used[p]) continue;
            const double s = selectivity(p, order);
            used[p] = true;
            order.push_back(p);
            prefix_cost[k + 1] = prefix_cost[k] + prefix_pass[k] * costs[p];
            prefix_pass[k + 1] = prefix_pass[k] * s;
            dfs();
            order.pop_back();
            used[p] = false;
        }
    }
};

}  // namespace

OptimalPlan brute_force_optimal(std::span<const double> costs, const SelectivityOracle& selectivity,
                                double wireless_cost) {
    const std::size_t n = costs.size();
    if (n > kBruteForceLimit)
        throw SizeError("exhaustive search supports at most " + std::to_string(kBruteForceLimit) + " predicates");
    if (n == 0) return {{}, 0, 0.0};
    Search s{costs, selectivity, wireless_cost, n, {}, std::vector<bool>(n, false),
             std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 1.0), {}, 0.0, false};
    s.order.reserve(n);
    s.dfs();
    return s.best;
}

}  // namespace theia
