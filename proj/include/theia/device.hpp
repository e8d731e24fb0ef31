#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "theia/energy.hpp"
#include "theia/photo.hpp"
#include "theia/planner.hpp"
#include "theia/predicates.hpp"
#include "theia/query.hpp"
#include "theia/random.hpp"

namespace theia {

/// Charge units: per device per submission, per photo searched, per result.
struct CostModel {
    long flat_per_device = 1;
    long per_photo = 1;
    long per_result = 10;

    long minimum_budget() const noexcept { return flat_per_device + per_photo + per_result; }
    bool operator==(const CostModel&) const = default;
};

struct Charges {
    long flat = 0;
    long photos = 0;
    long results = 0;

    long total() const noexcept { return flat + photos + results; }
    Charges& operator+=(const Charges& o) noexcept {
        flat += o.flat;
        photos += o.photos;
        results += o.results;
        return *this;
    }
    bool operator==(const Charges&) const = default;
};

/// Per-query sets of photo ids a device has searched or must skip. With a
/// directory, each query's set lives in `<dir>/<query id>.searched` (sorted ids,
/// one per line) and every insertion is written through.
class StateStore {
public:
    StateStore() = default;
    explicit StateStore(std::filesystem::path dir);

    bool contains(QueryId query, const std::string& photo_id);
    /// False if the id was already present.
    bool insert(QueryId query, const std::string& photo_id);
    const std::set<std::string>& ids(QueryId query);
    bool persistent() const noexcept { return !dir_.empty(); }

private:
    std::set<std::string>& load(QueryId query);
    void write(QueryId query) const;

    std::filesystem::path dir_;
    std::map<QueryId, std::set<std::string>> sets_;
};

struct DeviceState {
    std::string device_id;
    Corpus corpus;
    StateStore store;
    NetworkProfile network = wifi_profile();
    double extra_rtt_ms = 0.0;
    std::uint64_t network_version = 0;  // bumped on every profile change
    EnergyModel hardware;               // what the simulated power meter reports
    EnergyModel model;                  // the device's fitted estimate
    EnergyLedger ledger;
    double clock_ms = 0.0;              // virtual time
    std::uint64_t rng_seed = 0;

    NetworkProfile effective_network() const { return with_extra_rtt(network, extra_rtt_ms); }
    std::uint64_t mean_photo_bytes() const;
};

void set_network_profile(DeviceState& device, NetworkProfile profile);
/// Extra round-trip delay on top of the current profile (0 removes it).
void inject_delay(DeviceState& device, double extra_rtt_ms);

/// Offload request for the partition agent: the remaining pipeline slots, by
/// document-order leaf index and name, in evaluation order.
struct OffloadRequest {
    QueryId query_id;
    std::string query_xml;
    std::vector<std::pair<std::size_t, std::string>> predicates;
    std::string device_id;
    const Photo* photo = nullptr;
};

struct OffloadReply {
    bool accepted = true;
    std::vector<LeafOutcome> evaluated;
    double remote_ms = 0.0;  // server compute time
};

class OffloadChannel {
public:
    virtual ~OffloadChannel() = default;
    /// Throws TransportError when the photo cannot be delivered.
    virtual OffloadReply evaluate(const OffloadRequest& request) = 0;
};

enum class Strategy { Partitioned, Local, FullOffload };

struct TaskOptions {
    std::size_t training_photos = 5;
    std::size_t offload_probes = 2;
    double idle_probe_ms = 100.0;
    Strategy strategy = Strategy::Partitioned;
};

/// Reads `device.training_photos`, `device.offload_probes`, `device.idle_probe_ms`.
TaskOptions task_options_from(const Config& config);

struct SearchTask {
    QuerySpec query;
    std::string query_xml;  // serialized query if empty
    long budget_share = 0;
    CostModel costs;
    std::vector<std::string> excluded;  // already searched through the server cache
    std::uint64_t seed = 0;
    TaskOptions options;
};

enum class Phase { Training, Evaluation };

struct DeviceResult {
    std::string device_id;
    std::string photo_id;
    double score = 0.0;
    std::vector<std::pair<std::size_t, double>> leaf_scores;
    double time_ms = 0.0;
};

/// One evaluated photo.
struct StepRecord {
    std::string photo_id;
    Phase phase = Phase::Evaluation;
    std::vector<std::size_t> order;
    std::size_t offload_index = 0;  // partition in force for this photo
    bool offloaded = false;
    bool offload_failed = false;
    bool accepted = false;
    double score = 0.0;
    double tx_ms = 0.0;
    std::vector<LeafOutcome> local;
    std::vector<LeafOutcome> remote;
    double start_ms = 0.0;
    double end_ms = 0.0;
    EnergyLedger energy;  // spent on this photo
    double wireless_cost = 0.0;
};

struct LeafCounts {
    std::string name;
    std::uint64_t evaluated = 0;
    std::uint64_t accepted = 0;
};

struct TaskSummary {
    std::string device_id;
    QueryId query_id;
    std::size_t photos_searched = 0;
    std::size_t results = 0;
    Charges charges;
    EnergyLedger energy;
    std::vector<std::string> searched;  // in evaluation order
    std::vector<LeafCounts> leaves;
    double started_ms = 0.0;
    double finished_ms = 0.0;
};

using ResultSink = std::function<void(const DeviceResult&)>;

/// A search task on one device, advanced one photo at a time so a scheduler can
/// interleave devices in virtual time.
class SearchRun {
public:
    /// Charges the flat cost. Throws BudgetError if the share cannot cover it.
    SearchRun(SearchTask task, DeviceState& device, const PredicateRegistry& registry,
              OffloadChannel* channel = nullptr);

    bool done() const noexcept { return done_; }
    /// Evaluates the next photo, or finishes the run when nothing eligible or
    /// affordable is left. Returns the record of the photo, if one was evaluated.
    std::optional<StepRecord> step(const ResultSink& sink = {});
    /// Virtual time at which the next step would start.
    double now_ms() const noexcept { return device_.clock_ms; }

    Phase phase() const noexcept { return phase_; }
    const Partition& partition() const noexcept { return partition_; }
    const PlannerState& planner() const noexcept { return planner_; }
    bool conjunctive() const noexcept { return pipeline_.has_value(); }
    const std::vector<StepRecord>& log() const noexcept { return log_; }
    TaskSummary summary() const;

private:
    bool affordable() const noexcept;
    bool training_complete() const noexcept;
    std::optional<std::string> next_photo();
    StepRecord evaluate_training(const Photo& photo, bool probe);
    StepRecord evaluate_pipeline(const Photo& photo);
    StepRecord evaluate_tree(const Photo& photo);
    bool run_locally(const Photo& photo, std::size_t begin, std::size_t end, const std::vector<std::size_t>& order,
                     StepRecord& rec, bool short_circuit);
    /// Remote verdict, or nullopt when the photo could not be delivered.
    std::optional<bool> offload(const Photo& photo, std::size_t from, const std::vector<std::size_t>& order,
                                StepRecord& rec);
    void finish_training();
    void refresh_wireless_cost();
    void apply_strategy();
    void record(const LeafOutcome& o);
    void spend_compute(double ms);
    void spend_transmit(double ms, double power_mw);
    void spend_wait(double ms);

    SearchTask task_;
    DeviceState& device_;
    const PredicateRegistry& registry_;
    OffloadChannel* channel_;
    std::optional<std::vector<PredicateSpec>> pipeline_;
    PlannerState planner_;
    Partition partition_;
    Phase phase_ = Phase::Training;
    std::size_t training_done_ = 0;
    std::size_t probes_done_ = 0;
    std::vector<EnergySample> energy_samples_;
    std::uint64_t network_seen_ = 0;
    bool offload_broken_ = false;
    Rng rng_;
    std::vector<std::string> candidates_;
    Charges charges_;
    std::size_t results_ = 0;
    std::vector<StepRecord> log_;
    std::vector<LeafCounts> leaf_counts_;
    EnergyLedger energy_at_start_;
    double started_ms_ = 0.0;
    bool done_ = false;
};

/// Uniform (seeded) choice among `candidates` not yet in the query's state
/// store; the chosen id is removed from `candidates` and added to the store.
std::optional<std::string> select_next_photo(std::vector<std::string>& candidates, StateStore& store, QueryId query,
                                             Rng& rng);

/// Steps `run` through its training phase and returns the partition it produced.
Partition run_training_phase(SearchRun& run, const ResultSink& sink = {});

TaskSummary run_search_task(SearchTask task, DeviceState& device, const PredicateRegistry& registry,
                            OffloadChannel* channel, const ResultSink& sink);

}  // namespace theia
