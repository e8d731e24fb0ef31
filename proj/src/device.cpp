#include "theia/device.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "theia/error.hpp"

namespace theia {

StateStore::StateStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create state directory " + dir_.string() + ": " + ec.message());
}

std::set<std::string>& StateStore::load(QueryId query) {
    auto it = sets_.find(query);
    if (it != sets_.end()) return it->second;
    std::set<std::string> ids;
    if (!dir_.empty()) {
        std::ifstream in(dir_ / (std::to_string(query.value) + ".searched"));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ids.insert(line);
    }
    return sets_.emplace(query, std::move(ids)).first->second;
}

void StateStore::write(QueryId query) const {
    const auto& ids = sets_.at(query);
    const auto path = dir_ / (std::to_string(query.value) + ".searched");
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        for (const auto& id : ids) out << id << '\n';
        if (!out.flush()) throw IoError("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

bool StateStore::contains(QueryId query, const std::string& photo_id) { return load(query).count(photo_id) != 0; }

bool StateStore::insert(QueryId query, const std::string& photo_id) {
    if (!load(query).insert(photo_id).second) return false;
    if (!dir_.empty()) write(query);
    return true;
}

const std::set<std::string>& StateStore::ids(QueryId query) { return load(query); }

std::uint64_t DeviceState::mean_photo_bytes() const {
    if (corpus.empty()) return 0;
    long double sum = 0;
    for (const auto& [id, photo] : corpus) sum += static_cast<long double>(photo->transfer_bytes());
    return static_cast<std::uint64_t>(sum / static_cast<long double>(corpus.size()));
}

void set_network_profile(DeviceState& device, NetworkProfile profile) {
    if (profile.rtt_ms < 0 || !(profile.bandwidth_bytes_per_s > 0))
        throw ParameterError("network profile needs rtt >= 0 and bandwidth > 0");
    device.network = std::move(profile);
    ++device.network_version;
}

void inject_delay(DeviceState& device, double extra_rtt_ms) {
    if (!(extra_rtt_ms >= 0)) throw ParameterError("injected delay must be >= 0");
    device.extra_rtt_ms = extra_rtt_ms;
    ++device.network_version;
}

TaskOptions task_options_from(const Config& config) {
    TaskOptions o;
    const long t = config.get_long("device.training_photos", static_cast<long>(o.training_photos));
    const long p = config.get_long("device.offload_probes", static_cast<long>(o.offload_probes));
    if (t < 0 || p < 0) throw ParameterError("training and probe counts must be >= 0");
    o.training_photos = static_cast<std::size_t>(t);
    o.offload_probes = static_cast<std::size_t>(p);
    o.idle_probe_ms = config.get_double("device.idle_probe_ms", o.idle_probe_ms);
    if (o.idle_probe_ms < 0) throw ParameterError("idle probe window must be >= 0");
    return o;
}

std::optional<std::string> select_next_photo(std::vector<std::string>& candidates, StateStore& store, QueryId query,
                                             Rng& rng) {
    while (!candidates.empty()) {
        const std::size_t i = uniform_index(rng, candidates.size());
        std::swap(candidates[i], candidates.back());
        std::string id = std::move(candidates.back());
        candidates.pop_back();
        if (store.insert(query, id)) return id;
    }
    return std::nullopt;
}

SearchRun::SearchRun(SearchTask task, DeviceState& device, const PredicateRegistry& registry, OffloadChannel* channel)
    : task_(std::move(task)), device_(device), registry_(registry), channel_(channel) {
    if (task_.budget_share < task_.costs.flat_per_device)
        throw BudgetError("budget share " + std::to_string(task_.budget_share) + " is below the flat cost",
                          task_.costs.flat_per_device);
    charges_.flat = task_.costs.flat_per_device;
    if (task_.query_xml.empty()) task_.query_xml = serialize_query(task_.query);
    rng_.seed(derive_seed(task_.seed, fnv1a64(device_.device_id)));
    started_ms_ = device_.clock_ms;
    energy_at_start_ = device_.ledger;
    network_seen_ = device_.network_version;

    for (const auto& leaf : leaves(task_.query.root)) leaf_counts_.push_back({leaf.name, 0, 0});

    for (const auto& id : task_.excluded) device_.store.insert(task_.query.id, id);
    candidates_.reserve(device_.corpus.size());
    for (const auto& [id, photo] : device_.corpus) candidates_.push_back(id);

    pipeline_ = conjunctive_pipeline(task_.query);
    if (!pipeline_) {
        phase_ = Phase::Evaluation;
        return;
    }
    std::vector<std::string> names;
    for (const auto& p : *pipeline_) names.push_back(p.name);
    planner_ = PlannerState(std::move(names));
    partition_.order.resize(pipeline_->size());
    for (std::size_t i = 0; i < partition_.order.size(); ++i) partition_.order[i] = i;
    partition_.offload_index = partition_.order.size();
    if (task_.options.training_photos == 0) finish_training();
}

bool SearchRun::affordable() const noexcept {
    return task_.budget_share - charges_.total() >= task_.costs.per_photo + task_.costs.per_result;
}

std::optional<std::string> SearchRun::next_photo() {
    return select_next_photo(candidates_, device_.store, task_.query.id, rng_);
}

void SearchRun::spend_compute(double ms) {
    device_.clock_ms += ms;
    device_.ledger.compute_mj += device_.hardware.compute_mj(ms);
    device_.ledger.idle_mj += device_.hardware.idle_mj(ms);
}

void SearchRun::spend_transmit(double ms, double power_mw) {
    device_.clock_ms += ms;
    device_.ledger.transmit_mj += power_mw * ms / 1000.0;
    device_.ledger.idle_mj += device_.hardware.idle_mj(ms);
}

void SearchRun::spend_wait(double ms) {
    device_.clock_ms += ms;
    device_.ledger.idle_mj += device_.hardware.idle_mj(ms);
}

void SearchRun::record(const LeafOutcome& o) {
    auto& counts = leaf_counts_.at(o.leaf);
    ++counts.evaluated;
    if (o.verdict.accepted) ++counts.accepted;
    if (pipeline_) planner_.stats.at(o.leaf) = record_evaluation(planner_.stats[o.leaf], o.verdict);
}

bool SearchRun::run_locally(const Photo& photo, std::size_t begin, std::size_t end,
                            const std::vector<std::size_t>& order, StepRecord& rec, bool short_circuit) {
    bool all = true;
    for (std::size_t pos = begin; pos < end; ++pos) {
        const std::size_t slot = order[pos];
        const PredicateVerdict v = registry_.evaluate((*pipeline_)[slot], photo);
        spend_compute(v.cpu_time_ms);
        rec.local.push_back({slot, v});
        record(rec.local.back());
        if (!v.accepted) {
            all = false;
            if (short_circuit) break;
        }
    }
    return all;
}

std::optional<bool> SearchRun::offload(const Photo& photo, std::size_t from, const std::vector<std::size_t>& order,
                                       StepRecord& rec) {
    if (!channel_) return std::nullopt;
    OffloadRequest req;
    req.query_id = task_.query.id;
    req.query_xml = task_.query_xml;
    req.device_id = device_.device_id;
    req.photo = &photo;
    for (std::size_t pos = from; pos < order.size(); ++pos)
        req.predicates.emplace_back(order[pos], (*pipeline_)[order[pos]].name);
    const NetworkProfile net = device_.effective_network();
    OffloadReply reply;
    try {
        reply = channel_->evaluate(req);
    } catch (const TransportError&) {
        spend_transmit(net.rtt_ms, net.tx_power_mw);
        rec.offload_failed = true;
        return std::nullopt;
    }
    const double tx = net.tx_time_ms(photo.transfer_bytes());
    spend_transmit(tx, net.tx_power_mw);
    spend_wait(reply.remote_ms);
    rec.offloaded = true;
    rec.tx_ms = tx;
    for (const auto& o : reply.evaluated) {
        rec.remote.push_back(o);
        record(o);
    }
    return reply.accepted;
}

void SearchRun::refresh_wireless_cost() {
    if (!channel_ || offload_broken_) {
        planner_.wireless_cost = std::numeric_limits<double>::infinity();
        return;
    }
    planner_.wireless_cost =
        offload_energy_per_photo(device_.effective_network(), device_.model, device_.mean_photo_bytes())
            .compute_ms_equivalent;
}

void SearchRun::apply_strategy() {
    switch (task_.options.strategy) {
        case Strategy::Partitioned: break;
        case Strategy::Local: partition_.offload_index = partition_.size(); break;
        case Strategy::FullOffload: partition_.offload_index = 0; break;
    }
}

bool SearchRun::training_complete() const noexcept {
    if (training_done_ < task_.options.training_photos) return false;
    const bool can_probe = channel_ && task_.options.strategy != Strategy::Local;
    return !can_probe || probes_done_ >= task_.options.offload_probes;
}

void SearchRun::finish_training() {
    if (task_.options.idle_probe_ms > 0) {
        const EnergyLedger before = device_.ledger;
        spend_wait(task_.options.idle_probe_ms);
        energy_samples_.push_back(
            {0.0, 0.0, task_.options.idle_probe_ms, (device_.ledger - before).total_mj()});
    }
    try {
        device_.model = fit_energy_model(energy_samples_);
    } catch (const FitError&) {
        // Not enough variety in the samples; keep the previous model.
    }
    refresh_wireless_cost();
    planner_.photos_since_replan = 0;
    const auto order = order_by_rank(planner_, partition_.order);
    partition_ = place_pw(order, planner_);
    apply_strategy();
    phase_ = Phase::Evaluation;
}

StepRecord SearchRun::evaluate_training(const Photo& photo, bool probe) {
    StepRecord rec;
    rec.phase = Phase::Training;
    rec.order = partition_.order;
    const std::size_t n = rec.order.size();
    rec.offload_index = probe ? 0 : n;
    rec.wireless_cost = planner_.wireless_cost;
    const EnergyLedger before = device_.ledger;
    const double start = device_.clock_ms;
    double compute = 0.0;

    std::optional<bool> remote;
    if (probe) remote = offload(photo, 0, rec.order, rec);
    if (remote) {
        rec.accepted = *remote;
    } else {
        rec.offload_index = n;
        rec.accepted = run_locally(photo, 0, n, rec.order, rec, false);
        for (const auto& o : rec.local) compute += o.verdict.cpu_time_ms;
    }
    const double elapsed = device_.clock_ms - start;
    energy_samples_.push_back({compute, rec.tx_ms, elapsed, (device_.ledger - before).total_mj()});
    return rec;
}

StepRecord SearchRun::evaluate_pipeline(const Photo& photo) {
    StepRecord rec;
    rec.order = partition_.order;
    rec.offload_index = partition_.offload_index;
    rec.wireless_cost = planner_.wireless_cost;
    const std::size_t n = rec.order.size();
    const std::size_t split = std::min(rec.offload_index, n);

    bool accepted = run_locally(photo, 0, split, rec.order, rec, true);
    if (accepted && split < n) {
        const auto remote = offload(photo, split, rec.order, rec);
        if (remote) {
            accepted = *remote;
        } else {
            accepted = run_locally(photo, split, n, rec.order, rec, true);
            if (rec.offload_failed) {
                offload_broken_ = true;
                partition_ = replan_on_network_change(planner_, std::numeric_limits<double>::infinity(), partition_);
                apply_strategy();
            }
        }
    }
    rec.accepted = accepted;

    ++planner_.photos_since_replan;
    if (planner_.photos_since_replan >= kReplanCadence) {
        if (offload_broken_) {
            offload_broken_ = false;
            refresh_wireless_cost();
        }
        partition_ = replan(planner_, partition_);
        apply_strategy();
    }
    return rec;
}

StepRecord SearchRun::evaluate_tree(const Photo& photo) {
    StepRecord rec;
    const QueryVerdict v = evaluate_query(task_.query.root, photo, registry_);
    spend_compute(v.cpu_time_ms);
    rec.local = v.evaluated;
    for (const auto& o : rec.local) record(o);
    rec.accepted = v.accepted;
    rec.score = v.score;
    return rec;
}

std::optional<StepRecord> SearchRun::step(const ResultSink& sink) {
    if (done_) return std::nullopt;
    if (device_.network_version != network_seen_) {
        network_seen_ = device_.network_version;
        offload_broken_ = false;
        if (pipeline_ && phase_ == Phase::Evaluation) {
            refresh_wireless_cost();
            partition_ = replan_on_network_change(planner_, planner_.wireless_cost, partition_);
            apply_strategy();
        }
    }
    if (!affordable()) {
        done_ = true;
        return std::nullopt;
    }
    const auto id = next_photo();
    if (!id) {
        done_ = true;
        return std::nullopt;
    }
    charges_.photos += task_.costs.per_photo;
    const Photo& photo = *device_.corpus.at(*id);
    const EnergyLedger before = device_.ledger;
    const double start = device_.clock_ms;

    StepRecord rec;
    if (!pipeline_) {
        rec = evaluate_tree(photo);
    } else if (phase_ == Phase::Training) {
        const bool probe = training_done_ >= task_.options.training_photos;
        rec = evaluate_training(photo, probe);
        if (probe)
            ++probes_done_;
        else
            ++training_done_;
        if (training_complete()) finish_training();
    } else {
        rec = evaluate_pipeline(photo);
    }
    if (pipeline_) {
        double score = 1.0;
        for (const auto& o : rec.local) score = std::min(score, o.verdict.score);
        for (const auto& o : rec.remote) score = std::min(score, o.verdict.score);
        rec.score = score;
    }
    rec.photo_id = *id;
    rec.start_ms = start;
    rec.end_ms = device_.clock_ms;
    rec.energy = device_.ledger - before;

    if (rec.accepted) {
        charges_.results += task_.costs.per_result;
        ++results_;
        if (sink) {
            DeviceResult r{device_.device_id, *id, rec.score, {}, rec.end_ms};
            for (const auto& o : rec.local) r.leaf_scores.emplace_back(o.leaf, o.verdict.score);
            for (const auto& o : rec.remote) r.leaf_scores.emplace_back(o.leaf, o.verdict.score);
            std::sort(r.leaf_scores.begin(), r.leaf_scores.end());
            sink(r);
        }
    }
    log_.push_back(rec);
    return rec;
}

TaskSummary SearchRun::summary() const {
    TaskSummary s;
    s.device_id = device_.device_id;
    s.query_id = task_.query.id;
    s.photos_searched = log_.size();
    s.results = results_;
    s.charges = charges_;
    s.energy = device_.ledger - energy_at_start_;
    for (const auto& rec : log_) s.searched.push_back(rec.photo_id);
    s.leaves = leaf_counts_;
    s.started_ms = started_ms_;
    s.finished_ms = device_.clock_ms;
    return s;
}

Partition run_training_phase(SearchRun& run, const ResultSink& sink) {
    while (!run.done() && run.phase() == Phase::Training) run.step(sink);
    return run.partition();
}

TaskSummary run_search_task(SearchTask task, DeviceState& device, const PredicateRegistry& registry,
                            OffloadChannel* channel, const ResultSink& sink) {
    SearchRun run(std::move(task), device, registry, channel);
    while (!run.done()) run.step(sink);
    return run.summary();
}

}  // namespace theia
