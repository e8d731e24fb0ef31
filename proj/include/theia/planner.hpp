#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "theia/estimator.hpp"

namespace theia {

/// Photos evaluated between two replans.
inline constexpr std::size_t kReplanCadence = 5;
/// Largest pipeline the exhaustive optimizer accepts.
inline constexpr std::size_t kBruteForceLimit = 10;

/// Evaluation order over pipeline slots (document-order leaf indices) and the
/// position of the wireless pseudo-predicate: slots at positions below
/// `offload_index` run on the device, the rest on the server.
struct Partition {
    std::vector<std::size_t> order;
    std::size_t offload_index = 0;

    std::size_t size() const noexcept { return order.size(); }
    bool fully_local() const noexcept { return offload_index >= order.size(); }

    bool operator==(const Partition&) const = default;
};

/// What the planner knows about one pipeline slot.
struct RankInput {
    std::string name;
    double cost = 0.0;
    std::optional<double> selectivity;  // nullopt: not enough samples yet
};

struct PlannerState {
    std::vector<std::string> names;      // by slot
    std::vector<PredicateStats> stats;   // by slot
    double wireless_cost = 0.0;          // offload cost of one photo, compute-ms equivalents
    std::size_t photos_since_replan = 0;

    PlannerState() = default;
    explicit PlannerState(std::vector<std::string> slot_names, double wireless = 0.0);

    std::vector<RankInput> rank_inputs() const;
};

/// Σ cost_i · Π_{j<i} selectivity_j over lists already arranged in evaluation order.
double expected_pipeline_cost(std::span<const double> costs, std::span<const double> selectivities);

/// Rank sort: sampled slots are arranged ascending by conditional rank (ties by
/// name, then current position) over the positions sampled slots occupy now.
/// Unsampled slots keep their positions.
std::vector<std::size_t> rank_order(std::span<const RankInput> inputs, std::span<const std::size_t> current_order);

/// rank_order over the state's statistics; every slot that changes position
/// starts a new estimation epoch.
std::vector<std::size_t> order_by_rank(PlannerState& state, std::span<const std::size_t> current_order);

/// Position of pw in `order`: the first slot whose rank exceeds the wireless
/// cost. An unsampled slot is ranked by its cost alone, a lower bound on its
/// true rank, so it is offloaded only when that bound already exceeds the
/// wireless cost. Fully local wins instead when its modeled cost is no higher
/// (unsampled slots pass every photo).
std::size_t pw_position(std::span<const RankInput> inputs, std::span<const std::size_t> order, double wireless_cost);

Partition place_pw(std::span<const std::size_t> order, const PlannerState& state);

/// Reorders and re-places pw once `photos_since_replan` reaches the cadence.
Partition replan(PlannerState& state, const Partition& current);

/// Moves pw only; the order is kept. Throws ParameterError for a negative cost.
Partition replan_on_network_change(PlannerState& state, double new_wireless_cost, const Partition& current);

/// s(predicate | every predicate in prefix accepted). Must return a value in
/// [0, 1]; callers pass an empty prefix for the unconditional selectivity.
using SelectivityOracle = std::function<double(std::size_t predicate, std::span<const std::size_t> prefix)>;

/// Expected per-photo device cost of running `order` locally up to
/// `offload_index` and transmitting survivors at `wireless_cost`.
double plan_device_cost(std::span<const std::size_t> order, std::size_t offload_index, std::span<const double> costs,
                        const SelectivityOracle& selectivity, double wireless_cost);

/// Order built by repeatedly taking the slot with the lowest rank conditioned
/// on the slots already placed: the fixed point of the online rank rule.
std::vector<std::size_t> greedy_rank_order(std::span<const double> costs, const SelectivityOracle& selectivity);

struct OptimalPlan {
    std::vector<std::size_t> order;
    std::size_t offload_index = 0;
    double device_cost = 0.0;
};

/// Exhaustive search over every (order, offload index). Among equal device
/// costs the order with the cheaper fully-local cost wins. Throws SizeError for
/// more than kBruteForceLimit predicates.
OptimalPlan brute_force_optimal(std::span<const double> costs, const SelectivityOracle& selectivity,
                                double wireless_cost);

}  // namespace theia
