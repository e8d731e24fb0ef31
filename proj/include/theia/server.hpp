#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "theia/device.hpp"

namespace theia {

inline constexpr double kDefaultFlatFraction = 0.05;
/// Server predicate evaluation runs this many times faster than a handset.
inline constexpr double kRemoteSpeedup = 10.0;

struct BudgetAllocation {
    std::size_t devices = 0;
    long share = 0;
    bool operator==(const BudgetAllocation&) const = default;
};

/// N = clamp(floor(f * budget / flat), 1, registered), share = floor(budget / N).
/// Throws BudgetError below flat + per_photo + per_result, NotFoundError with no
/// registered devices.
BudgetAllocation allocate_budget(long budget, std::size_t registered, const CostModel& costs,
                                 double flat_fraction = kDefaultFlatFraction);

/// Devices with relevant marks first (most marks first, ties by id), then a
/// seeded uniform fill from the rest. Devices in `skip` are never chosen.
std::vector<std::string> select_devices(std::size_t n, std::vector<std::string> registered,
                                        const std::map<std::string, std::size_t>& relevant_marks, std::uint64_t seed,
                                        const std::set<std::string>& skip = {});

/// Photos offloaded to the server, keyed by (device, photo). Entries never change.
class DataCache {
public:
    /// False if the entry already existed.
    bool insert(const std::string& device_id, PhotoPtr photo);
    std::vector<PhotoPtr> photos_of(const std::string& device_id) const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::map<std::string, PhotoPtr>> entries_;
};

struct ResultRecord {
    std::string session;
    std::string device_id;
    std::string photo_id;
    double score = 0.0;
    std::vector<std::pair<std::string, double>> leaf_scores;  // predicate name, score
    std::size_t index = 0;                                    // arrival order
    double time_ms = 0.0;                                     // virtual arrival time
    bool from_cache = false;
    std::optional<bool> relevant;
};

struct LeafSelectivity {
    std::string name;
    std::uint64_t evaluated = 0;
    std::uint64_t accepted = 0;
    std::optional<double> selectivity() const {
        if (evaluated == 0) return std::nullopt;
        return static_cast<double>(accepted) / static_cast<double>(evaluated);
    }
};

struct Completion {
    std::size_t photos_searched = 0;  // device photos plus cache photos
    std::size_t cache_photos = 0;
    std::size_t devices_searched = 0;  // evaluated at least one photo
    std::size_t devices_charged = 0;   // paid the flat per-device cost
    std::size_t results = 0;
    Charges charges;
    std::vector<LeafSelectivity> leaves;
};

/// One device's part of a session, as pushed to its inbox.
struct Assignment {
    std::string session_id;
    std::string device_id;
    SearchTask task;
};

struct SearchSession {
    std::string id;
    QuerySpec query;
    std::string query_xml;
    long budget = 0;
    std::uint64_t seed = 0;
    CostModel costs;
    BudgetAllocation allocation;
    std::vector<std::string> devices;  // selection order
    std::map<std::string, long> shares;
    std::map<std::string, Charges> device_charges;
    std::set<std::string> pending;  // devices that have not reported a summary
    std::vector<ResultRecord> results;
    std::vector<TaskSummary> summaries;
    std::vector<LeafSelectivity> cache_leaves;
    std::size_t cache_photos = 0;
    double submitted_ms = 0.0;
    bool complete = false;

    Charges charges() const;
    Completion completion() const;
};

struct ResultPage {
    std::vector<ResultRecord> records;
    std::size_t next_cursor = 0;
    bool complete = false;
    std::optional<Completion> completion;  // once complete and the cursor reached the end
};

/// Who evaluated a photo for a query.
struct EvaluationEvent {
    std::string session;
    std::string device_id;
    std::string photo_id;
    bool cache = false;
};

struct ServerOptions {
    CostModel costs;
    double flat_fraction = kDefaultFlatFraction;
    TaskOptions task_options;

    /// Reads `cost.flat`, `cost.photo`, `cost.result`, `budget.flat_fraction` and
    /// the device task keys.
    static ServerOptions from_config(const Config& config);
};

/// The coordination server. All methods are safe to call from several threads.
class Coordinator {
public:
    Coordinator(const PredicateRegistry& registry, ServerOptions options = {});

    const PredicateRegistry& registry() const noexcept { return registry_; }
    const ServerOptions& options() const noexcept { return options_; }

    /// Idempotent. `photo_count`, when known, lets selection skip devices that
    /// have nothing left to search for a query.
    void register_device(const std::string& device_id, std::optional<std::size_t> photo_count = std::nullopt);
    std::vector<std::string> registered() const;

    /// Allocates the budget, selects devices, searches the data cache for each of
    /// them and queues their assignments. Throws ValidationError for an invalid
    /// query, BudgetError for a budget below the minimum.
    std::string submit(const QuerySpec& query, long budget, std::uint64_t seed, double now_ms = 0.0);

    /// Assignments queued for a device, waiting up to `wait` for one to arrive.
    std::vector<Assignment> take_assignments(const std::string& device_id,
                                             std::chrono::milliseconds wait = std::chrono::milliseconds(0));

    void accept_result(const std::string& session_id, const DeviceResult& result);
    void accept_summary(const std::string& session_id, const TaskSummary& summary);

    ResultPage results(const std::string& session_id, std::size_t cursor,
                       std::size_t limit = static_cast<std::size_t>(-1)) const;
    /// Blocks until the session has records past `cursor` or completes.
    ResultPage wait_results(const std::string& session_id, std::size_t cursor, std::chrono::milliseconds wait) const;
    SearchSession session(const std::string& session_id) const;
    std::vector<std::string> sessions() const;

    /// Marks or unmarks a result of the session. Throws NotFoundError for a
    /// record the session does not hold.
    void mark_feedback(const std::string& session_id, const std::string& device_id, const std::string& photo_id,
                       bool relevant);
    std::map<std::string, std::size_t> relevant_marks(QueryId query) const;

    /// Partition agent: evaluates the listed pipeline slots in order with
    /// short-circuit and keeps the photo in the data cache.
    OffloadReply partition_evaluate(const OffloadRequest& request);

    std::vector<EvaluationEvent> evaluations(QueryId query) const;
    const DataCache& cache() const noexcept { return cache_; }

private:
    struct QueryHistory {
        std::map<std::string, std::set<std::string>> searched;            // device -> photos
        std::map<std::string, std::set<std::string>> relevant;            // device -> photos
        std::vector<EvaluationEvent> evaluations;
    };

    SearchSession& session_locked(const std::string& session_id);
    const SearchSession& session_locked(const std::string& session_id) const;
    void finish_if_done(SearchSession& s);

    const PredicateRegistry& registry_;
    ServerOptions options_;
    DataCache cache_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, std::optional<std::size_t>> devices_;
    std::map<std::string, SearchSession> sessions_;
    std::map<QueryId, QueryHistory> history_;
    std::map<std::string, std::deque<Assignment>> inbox_;
    std::map<std::string, QuerySpec> parsed_;  // partition agent, by query xml
    std::size_t next_session_ = 1;
};

/// Offload channel that calls the partition agent directly.
class InProcessChannel : public OffloadChannel {
public:
    explicit InProcessChannel(Coordinator& server) : server_(server) {}
    OffloadReply evaluate(const OffloadRequest& request) override;

private:
    Coordinator& server_;
};

/// Channel whose deliveries fail for the listed call numbers (0-based).
class FaultyChannel : public OffloadChannel {
public:
    FaultyChannel(OffloadChannel& inner, std::set<std::size_t> failing_calls)
        : inner_(inner), failing_(std::move(failing_calls)) {}
    OffloadReply evaluate(const OffloadRequest& request) override;
    std::size_t calls() const noexcept { return calls_; }

private:
    OffloadChannel& inner_;
    std::set<std::size_t> failing_;
    std::size_t calls_ = 0;
};

struct FleetOptions {
    double push_delay_ms = 0.0;   // assignment delivery delay
    double push_jitter_ms = 0.0;  // uniform extra delay in [0, jitter)
    double pace = 0.0;            // wall-clock ms per virtual ms; 0 runs flat out
    std::uint64_t jitter_seed = 0x7e1a;
};

/// Everything that happened to one photo, as seen by the fleet.
struct FleetEvent {
    std::string session;
    std::string device_id;
    const StepRecord* step = nullptr;
};

/// In-process emulated devices. Device runs are advanced in one global
/// virtual-time order: results reach the server in the order of their virtual
/// completion times.
class Fleet {
public:
    Fleet(Coordinator& server, FleetOptions options = {});

    DeviceState& add_device(DeviceState device);
    DeviceState& device(const std::string& device_id);
    std::vector<std::string> device_ids() const;

    /// Throws NotFoundError for an unknown device.
    void set_network_profile(const std::string& device_id, NetworkProfile profile);
    void inject_delay(const std::string& device_id, double extra_rtt_ms);

    /// Submits and runs a session to completion; returns the session id.
    std::string search(const QuerySpec& query, long budget, std::uint64_t seed);
    /// Runs every assignment queued for the fleet's devices to completion.
    void run_pending();

    double now_ms() const noexcept { return now_ms_; }
    /// Called after every evaluated photo, before its results are committed.
    std::function<void(const FleetEvent&)> on_step;
    /// Called after a photo's results are committed to the server.
    std::function<void(const FleetEvent&)> on_commit;
    /// Optional channel override, e.g. a FaultyChannel wrapping channel().
    OffloadChannel* channel_override = nullptr;
    OffloadChannel& channel() noexcept { return channel_; }

private:
    Coordinator& server_;
    FleetOptions options_;
    InProcessChannel channel_;
    std::map<std::string, std::unique_ptr<DeviceState>> devices_;
    double now_ms_ = 0.0;
    Rng jitter_;
};

}  // namespace theia
