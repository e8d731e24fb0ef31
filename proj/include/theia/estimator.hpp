#pragma once

#include <cstdint>
#include <optional>
#include <set>

#include "theia/predicates.hpp"

namespace theia {

/// Smoothing weight of the newest cost observation.
inline constexpr double kCostSmoothing = 0.2;
/// Samples needed at a pipeline position before its selectivity is trusted.
inline constexpr std::uint64_t kEnoughSamples = 10;

/// Running cost and selectivity estimate of one predicate, conditioned on the
/// predicates placed before it. Moving the predicate starts a new epoch.
struct PredicateStats {
    std::uint64_t samples = 0;
    std::uint64_t accepts = 0;
    double cost_ema = 0.0;
    std::uint64_t cost_observations = 0;  // survives epoch changes; cost is not conditional
    std::uint64_t position_epoch = 0;

    /// Drops the conditioned counts after a reorder.
    void new_epoch() noexcept {
        ++position_epoch;
        samples = 0;
        accepts = 0;
    }

    bool operator==(const PredicateStats&) const = default;
};

/// |a1 ∩ a2| / |a2|. Throws UndefinedInputError when a2 is empty.
double conditional_selectivity(const std::set<std::uint64_t>& a1, const std::set<std::uint64_t>& a2);

PredicateStats record_evaluation(PredicateStats stats, const PredicateVerdict& verdict);

/// accepts / samples, or nullopt while no sample exists in this epoch.
std::optional<double> selectivity_estimate(const PredicateStats& stats);

bool has_enough_samples(const PredicateStats& stats);

/// cost / (1 - selectivity); +infinity for a predicate that never rejects.
double conditional_rank(double cost, double selectivity);

}  // namespace theia
