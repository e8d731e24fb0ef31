#include "theia/estimator.hpp"

#include <algorithm>
#include <iterator>
#include <limits>

#include "theia/error.hpp"

namespace theia {

double conditional_selectivity(const std::set<std::uint64_t>& a1, const std::set<std::uint64_t>& a2) {
    if (a2.empty()) throw UndefinedInputError("conditional selectivity is undefined for an empty conditioning set");
    std::size_t common = 0;
    for (auto x : a2) common += a1.count(x);
    return static_cast<double>(common) / static_cast<double>(a2.size());
}

PredicateStats record_evaluation(PredicateStats stats, const PredicateVerdict& verdict) {
    ++stats.samples;
    if (verdict.accepted) ++stats.accepts;
    const double observed = std::max(0.0, verdict.cpu_time_ms);
    stats.cost_ema = stats.cost_observations == 0
                         ? observed
                         : (1.0 - kCostSmoothing) * stats.cost_ema + kCostSmoothing * observed;
    ++stats.cost_observations;
    return stats;
}

std::optional<double> selectivity_estimate(const PredicateStats& stats) {
    if (stats.samples == 0) return std::nullopt;
    return static_cast<double>(stats.accepts) / static_cast<double>(stats.samples);
}

bool has_enough_samples(const PredicateStats& stats) { return stats.samples >= kEnoughSamples; }

double conditional_rank(double cost, double selectivity) {
    if (selectivity >= 1.0) return std::numeric_limits<double>::infinity();
    return cost / (1.0 - selectivity);
}

}  // namespace theia
