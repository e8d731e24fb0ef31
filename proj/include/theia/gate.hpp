#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "theia/server.hpp"
#include "theia/wire.hpp"

namespace theia {

// Standard queries. The "analog" variants use Synthetic predicates with fixed
// selectivity and cost, for the energy experiments.

/// Face (front) AND Texture (cloudy sky) AND RGB Threshold (blue), in that order.
QuerySpec query_1(QueryId id = {1});
/// Query_1 without the texture predicate.
QuerySpec query_2(QueryId id = {2});
/// Face detection only.
QuerySpec query_3(QueryId id = {3});
QuerySpec all_accept_query(QueryId id = {0});
/// RGB Threshold (blue) AND Texture (cloudy sky): the incremental search task.
QuerySpec cloudy_sky_query(QueryId id = {4242});

struct SyntheticPredicate {
    std::string role;  // "face", "texture", "rgb"
    double selectivity = 0.0;
    double cost_ms = 0.0;
    std::uint64_t salt = 0;
};
/// face (0.25, 30 ms), texture (0.4, 1.5 ms), rgb (0.3, 0.2 ms): decreasing cost.
std::vector<SyntheticPredicate> query_1_analog_predicates();
QuerySpec synthetic_query(const std::vector<SyntheticPredicate>& predicates, QueryId id);
QuerySpec query_1_analog(QueryId id = {101});
QuerySpec query_2_analog(QueryId id = {102});
QuerySpec query_3_analog(QueryId id = {103});

struct PlantedDevice {
    std::string device_id;
    Corpus corpus;
};

/// Analog of a crowd of phones: most photos are clutter, a few are cloudy skies
/// (relevant) and a few are blue, smooth non-sky photos (decoys) that the search
/// query cannot tell from skies.
struct PlantedCorpus {
    std::vector<PlantedDevice> devices;
    std::set<std::string> relevant;  // photo ids
    std::set<std::string> decoys;
    std::set<std::string> hot_devices;
    std::uint64_t seed = 0;
    double locality = 0.0;

    std::size_t photo_count() const;
};

struct CorpusParams {
    std::size_t devices = 85;
    std::size_t photos_per_device = 36;
    std::optional<std::size_t> total_photos;  // overrides photos_per_device, spread evenly
    double locality = 0.8;
    double relevant_fraction = 0.01;
    double decoy_fraction = 0.02;
    int width = 32;
    int height = 24;
    std::uint64_t seed = 1;

    static CorpusParams from_config(const Config& config);
};

/// Builds the corpus in memory. A fraction `locality` of the relevant photos goes
/// to ceil(0.1 * devices) hot devices, the rest uniformly over all devices.
PlantedCorpus generate_corpus(const CorpusParams& params);

/// `<dir>/<device>/<photo>.ppm|.meta` plus `ground_truth.txt`. Throws IoError.
void save_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir);
/// Reads a directory written by save_corpus. Without ground_truth.txt every
/// photo is treated as not relevant.
PlantedCorpus load_planted_corpus(const std::filesystem::path& dir);

/// `count` plain photos for a single device (ids `<prefix>NNN`), sized like
/// handset photos for transfer purposes.
Corpus device_corpus(const std::string& prefix, std::size_t count, std::uint64_t seed);

DeviceState make_device(const std::string& id, Corpus corpus, const EnergySettings& energy,
                        const std::string& profile = "wifi");

enum class PolicyKind { OracleFeedback, MarkNone, ThresholdMarker };

struct UserPolicy {
    PolicyKind kind = PolicyKind::OracleFeedback;
    std::vector<long> budgets = {100};  // last entry repeats
    std::size_t target_relevant = 20;
    std::size_t max_submissions = 100;
    double marker_threshold = 0.9;

    /// Reads `policy.kind`, `policy.budgets` (comma list), `policy.target`,
    /// `policy.max_submissions`, `policy.threshold`.
    static UserPolicy from_config(const Config& config);

    long budget_for(std::size_t submission) const;
    /// Throws BudgetError if a budget is below the cost model's minimum.
    void check(const CostModel& costs) const;
};

const char* to_string(PolicyKind kind) noexcept;
PolicyKind parse_policy(const std::string& s);

struct SubmissionReport {
    std::size_t index = 0;
    std::string session;
    long budget = 0;
    std::vector<std::string> devices;
    std::size_t marked_devices = 0;  // devices chosen because of earlier marks
    std::size_t photos_searched = 0;
    std::size_t results = 0;
    std::size_t relevant = 0;
    std::size_t marked_results = 0;  // results from devices marked before this submission
    std::size_t marked_relevant = 0;
    long cost = 0;
};

struct IncrementalReport {
    PolicyKind policy = PolicyKind::OracleFeedback;
    std::uint64_t seed = 0;
    std::vector<SubmissionReport> submissions;
    long total_cost = 0;
    std::size_t relevant_found = 0;
    std::size_t results = 0;
    bool reached_target = false;
    double cost_per_relevant = 0.0;  // infinity when nothing relevant was found
    /// Relevant over results, for submissions after the first.
    std::optional<double> resubmission_success_rate;
    /// Same, split by whether the device had been marked relevant before.
    std::optional<double> marked_success_rate;
    std::optional<double> unmarked_success_rate;
    double single_pass_cost_per_relevant = 0.0;
    double lower_bound_cost_per_relevant = 0.0;
};

/// Single Pass: every photo on every device searched with a perfect query that
/// returns `target` relevant photos (fewer if the corpus holds fewer).
double single_pass_cost_per_relevant(const PlantedCorpus& corpus, std::size_t target, const CostModel& costs);
/// Lower Bound: `target` relevant photos from one device, `target` photos searched.
double lower_bound_cost_per_relevant(std::size_t target, const CostModel& costs);

IncrementalReport run_incremental_experiment(const PlantedCorpus& corpus, const UserPolicy& policy,
                                             const ServerOptions& options, std::uint64_t seed,
                                             const QuerySpec& query = cloudy_sky_query());

/// Seeded trials of one policy on one corpus. Each trial is paired with a
/// mark-none run over the same session seeds and the same number of submissions.
struct IncrementalTrials {
    std::vector<IncrementalReport> feedback;
    std::vector<IncrementalReport> no_feedback;
    std::size_t payoff_wins = 0;    // cost per relevant below Single Pass
    std::size_t locality_wins = 0;  // marked-device success rate above unmarked
    std::size_t paired_wins = 0;    // resubmission success rate above the paired mark-none run
    /// Wins needed out of the trial count: 19 of 20, scaled.
    std::size_t required() const;
};

IncrementalTrials run_incremental_trials(const PlantedCorpus& corpus, const UserPolicy& policy,
                                         const ServerOptions& options, std::uint64_t seed, std::size_t trials);

struct PartitionCell {
    std::string query;
    std::string profile;
    Strategy strategy = Strategy::Partitioned;
    std::size_t photos = 0;
    EnergyLedger energy;         // whole run
    EnergyLedger window_energy;  // photos from the convergence window on
    double time_s = 0.0;
    std::size_t offloaded = 0;
};

struct PartitionConfig {
    std::size_t photos = 100;
    std::size_t window_start = 50;
    std::size_t training_photos = 10;
    std::uint64_t seed = 1;
    EnergySettings energy;

    /// `partition.photos`, `partition.window_start`, `experiment.training_photos`, energy keys.
    static PartitionConfig from_config(const Config& config);
};

struct PartitionReport {
    PartitionConfig config;
    std::vector<PartitionCell> cells;
    /// Partitioned window energy <= local and <= full offload in every (query, profile).
    bool dominance = false;
};

PartitionReport run_partition_experiment(const PartitionConfig& config);

struct TracePoint {
    std::size_t photo = 0;
    std::size_t offload_index = 0;
    double wireless_cost = 0.0;
    std::vector<std::size_t> order;
};

struct DynamicConfig {
    std::size_t photos = 100;
    std::size_t delay_at = 50;
    double extra_rtt_ms = 1000.0;
    std::optional<std::size_t> remove_at = 75;
    std::size_t window = 10;
    std::size_t training_photos = 10;
    std::uint64_t seed = 1;
    EnergySettings energy;

    /// `dynamic.photos`, `dynamic.delay_at`, `dynamic.extra_rtt_ms`, `dynamic.remove_at`
    /// (negative: never), `dynamic.window`, `experiment.training_photos`, energy keys.
    static DynamicConfig from_config(const Config& config);
};

struct DynamicReport {
    DynamicConfig config;
    std::vector<TracePoint> trace;
    std::size_t index_before = 0;
    std::optional<std::size_t> shifted_at;   // first photo with a more local partition
    std::optional<std::size_t> restored_at;  // first photo back at index_before after removal
    bool passed = false;
};

DynamicReport run_dynamic_experiment(const DynamicConfig& config, const QuerySpec& query = query_1_analog());

struct Quartiles {
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    std::size_t samples = 0;
};
Quartiles quartiles(std::vector<double> values);

struct LatencyRow {
    std::string query;
    std::size_t fleet = 0;
    Quartiles first_result_s;
    Quartiles interval_s;
};

struct LatencyConfig {
    std::vector<std::size_t> fleets = {1, 6};
    std::size_t trials = 15;
    std::size_t photos_per_device = 36;
    long budget = 4000;
    double push_delay_ms = 4000.0;
    double push_jitter_ms = 2000.0;
    bool wall_clock = false;
    double pace = 0.0005;  // wall ms per virtual ms with wall_clock
    std::uint64_t seed = 1;
    EnergySettings energy;

    /// `latency.trials`, `latency.photos_per_device`, `latency.budget`,
    /// `latency.push_delay_ms`, `latency.push_jitter_ms`, `latency.pace`, energy keys.
    static LatencyConfig from_config(const Config& config);
};

struct LatencyReport {
    LatencyConfig config;
    std::vector<LatencyRow> rows;
    bool more_devices_faster = false;  // median first-result latency, every query
    bool all_accept_fastest = false;   // median interval, every fleet size
};

LatencyReport run_latency_experiment(const LatencyConfig& config);

// Report serialization: newline-delimited records followed by a summary object.
Json report_json(const IncrementalReport& r);
Json report_json(const IncrementalTrials& t, const PlantedCorpus& corpus, const UserPolicy& policy,
                 const ServerOptions& options);
Json report_json(const PartitionReport& r);
Json report_json(const DynamicReport& r);
Json report_json(const LatencyReport& r);
/// Tab-separated, one row per record, header first.
std::string table(const PartitionReport& r);
std::string table(const DynamicReport& r);
std::string table(const LatencyReport& r);
std::string table(const IncrementalTrials& t);

}  // namespace theia
