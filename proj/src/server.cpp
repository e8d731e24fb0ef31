#include "theia/server.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <thread>

#include "theia/error.hpp"

namespace theia {

BudgetAllocation allocate_budget(long budget, std::size_t registered, const CostModel& costs, double flat_fraction) {
    if (registered == 0) throw NotFoundError("no registered devices");
    if (!(flat_fraction > 0.0 && flat_fraction <= 1.0)) throw ParameterError("flat-cost fraction must be in (0, 1]");
    const long minimum = costs.minimum_budget();
    if (budget < minimum)
        throw BudgetError("budget " + std::to_string(budget) + " is below the minimum of " + std::to_string(minimum),
                          minimum);
    long n = static_cast<long>(registered);
    if (costs.flat_per_device > 0)
        n = static_cast<long>(std::floor(flat_fraction * static_cast<double>(budget) /
                                             static_cast<double>(costs.flat_per_device) +
                                         1e-9));
    n = std::clamp(n, 1L, static_cast<long>(registered));
    return {static_cast<std::size_t>(n), budget / n};
}

std::vector<std::string> select_devices(std::size_t n, std::vector<std::string> registered,
                                        const std::map<std::string, std::size_t>& relevant_marks, std::uint64_t seed,
                                        const std::set<std::string>& skip) {
    std::sort(registered.begin(), registered.end());
    registered.erase(std::unique(registered.begin(), registered.end()), registered.end());
    std::erase_if(registered, [&](const std::string& d) { return skip.count(d) != 0; });

    std::vector<std::pair<std::size_t, std::string>> marked;
    std::vector<std::string> rest;
    for (const auto& d : registered) {
        auto it = relevant_marks.find(d);
        if (it != relevant_marks.end() && it->second > 0)
            marked.emplace_back(it->second, d);
        else
            rest.push_back(d);
    }
    std::sort(marked.begin(), marked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    std::vector<std::string> out;
    for (const auto& [count, d] : marked) {
        if (out.size() == n) return out;
        out.push_back(d);
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < rest.size() && out.size() < n; ++i) {
        const std::size_t j = i + uniform_index(rng, rest.size() - i);
        std::swap(rest[i], rest[j]);
        out.push_back(rest[i]);
    }
    return out;
}

bool DataCache::insert(const std::string& device_id, PhotoPtr photo) {
    std::lock_guard lock(mutex_);
    return entries_[device_id].emplace(photo->id(), photo).second;
}

std::vector<PhotoPtr> DataCache::photos_of(const std::string& device_id) const {
    std::lock_guard lock(mutex_);
    std::vector<PhotoPtr> out;
    auto it = entries_.find(device_id);
    if (it != entries_.end())
        for (const auto& [id, p] : it->second) out.push_back(p);
    return out;
}

std::size_t DataCache::size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [d, m] : entries_) n += m.size();
    return n;
}

Charges SearchSession::charges() const {
    Charges c;
    for (const auto& [d, dc] : device_charges) c += dc;
    return c;
}

Completion SearchSession::completion() const {
    Completion c;
    c.cache_photos = cache_photos;
    c.photos_searched = cache_photos;
    for (const auto& s : summaries) {
        c.photos_searched += s.photos_searched;
        if (s.photos_searched > 0) ++c.devices_searched;
        if (s.charges.flat > 0) ++c.devices_charged;
    }
    c.results = results.size();
    c.charges = charges();
    c.leaves = cache_leaves;
    for (const auto& s : summaries)
        for (std::size_t i = 0; i < s.leaves.size() && i < c.leaves.size(); ++i) {
            c.leaves[i].evaluated += s.leaves[i].evaluated;
            c.leaves[i].accepted += s.leaves[i].accepted;
        }
    return c;
}

ServerOptions ServerOptions::from_config(const Config& config) {
    ServerOptions o;
    o.costs.flat_per_device = config.get_long("cost.flat", o.costs.flat_per_device);
    o.costs.per_photo = config.get_long("cost.photo", o.costs.per_photo);
    o.costs.per_result = config.get_long("cost.result", o.costs.per_result);
    if (o.costs.flat_per_device < 0 || o.costs.per_photo < 0 || o.costs.per_result < 0)
        throw ParameterError("cost units must be >= 0");
    o.flat_fraction = config.get_double("budget.flat_fraction", o.flat_fraction);
    o.task_options = task_options_from(config);
    return o;
}

Coordinator::Coordinator(const PredicateRegistry& registry, ServerOptions options)
    : registry_(registry), options_(std::move(options)) {}

void Coordinator::register_device(const std::string& device_id, std::optional<std::size_t> photo_count) {
    std::lock_guard lock(mutex_);
    auto& known = devices_[device_id];
    if (photo_count) known = photo_count;
}

std::vector<std::string> Coordinator::registered() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [d, n] : devices_) out.push_back(d);
    return out;
}

std::string Coordinator::submit(const QuerySpec& query, long budget, std::uint64_t seed, double now_ms) {
    const auto findings = validate(query, registry_);
    if (!findings.empty()) {
        std::string what = "invalid query:";
        for (const auto& f : findings) what += " " + f.path + ": " + f.reason + ";";
        throw ValidationError(what);
    }
    const std::string xml = serialize_query(query);
    const auto query_leaves = leaves(query.root);
    const CostModel& costs = options_.costs;

    std::lock_guard lock(mutex_);
    const auto allocation = allocate_budget(budget, devices_.size(), costs, options_.flat_fraction);
    QueryHistory& hist = history_[query.id];

    std::set<std::string> skip;
    std::vector<std::string> ids;
    for (const auto& [d, count] : devices_) {
        ids.push_back(d);
        // Cached photos are copies of device photos, so a full searched set means nothing is left.
        if (count && hist.searched[d].size() >= *count) skip.insert(d);
    }
    std::map<std::string, std::size_t> marks;
    for (const auto& [d, photos] : hist.relevant)
        if (!photos.empty()) marks[d] = photos.size();

    SearchSession s;
    s.id = "s" + std::to_string(next_session_++);
    s.query = query;
    s.query_xml = xml;
    s.budget = budget;
    s.seed = seed;
    s.costs = costs;
    s.allocation = allocation;
    s.submitted_ms = now_ms;
    s.devices = select_devices(allocation.devices, ids, marks, seed, skip);
    for (const auto& leaf : query_leaves) s.cache_leaves.push_back({leaf.name, 0, 0});

    for (std::size_t i = 0; i < s.devices.size(); ++i) {
        const std::string& d = s.devices[i];
        const long share = allocation.share;
        s.shares[d] = share;
        if (share < costs.flat_per_device) continue;

        long remaining = share - costs.flat_per_device;
        Charges cache_charges;
        std::vector<std::string> excluded;
        for (const auto& photo : cache_.photos_of(d)) {
            if (hist.searched[d].count(photo->id())) continue;
            if (remaining < costs.per_result) break;
            const QueryVerdict v = evaluate_query(query.root, *photo, registry_);
            hist.searched[d].insert(photo->id());
            hist.evaluations.push_back({s.id, d, photo->id(), true});
            excluded.push_back(photo->id());
            ++s.cache_photos;
            for (const auto& o : v.evaluated) {
                ++s.cache_leaves[o.leaf].evaluated;
                if (o.verdict.accepted) ++s.cache_leaves[o.leaf].accepted;
            }
            if (!v.accepted) continue;
            remaining -= costs.per_result;
            cache_charges.results += costs.per_result;
            ResultRecord r;
            r.session = s.id;
            r.device_id = d;
            r.photo_id = photo->id();
            r.score = v.score;
            for (const auto& o : v.evaluated) r.leaf_scores.emplace_back(query_leaves[o.leaf].name, o.verdict.score);
            r.index = s.results.size();
            r.time_ms = now_ms;
            r.from_cache = true;
            s.results.push_back(std::move(r));
        }
        s.device_charges[d] = cache_charges;

        Assignment a;
        a.session_id = s.id;
        a.device_id = d;
        a.task.query = query;
        a.task.query_xml = xml;
        a.task.budget_share = share - cache_charges.total();
        a.task.costs = costs;
        a.task.excluded = std::move(excluded);
        a.task.seed = derive_seed(seed, i + 1);
        a.task.options = options_.task_options;
        inbox_[d].push_back(std::move(a));
        s.pending.insert(d);
    }
    const std::string id = s.id;
    auto& stored = sessions_.emplace(id, std::move(s)).first->second;
    finish_if_done(stored);
    changed_.notify_all();
    return id;
}

std::vector<Assignment> Coordinator::take_assignments(const std::string& device_id, std::chrono::milliseconds wait) {
    std::unique_lock lock(mutex_);
    auto& box = inbox_[device_id];
    if (box.empty() && wait.count() > 0)
        changed_.wait_for(lock, wait, [&] { return !inbox_[device_id].empty(); });
    std::vector<Assignment> out(std::make_move_iterator(inbox_[device_id].begin()),
                                std::make_move_iterator(inbox_[device_id].end()));
    inbox_[device_id].clear();
    return out;
}

SearchSession& Coordinator::session_locked(const std::string& session_id) {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("unknown session: " + session_id);
    return it->second;
}

const SearchSession& Coordinator::session_locked(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("unknown session: " + session_id);
    return it->second;
}

void Coordinator::finish_if_done(SearchSession& s) {
    if (s.pending.empty()) s.complete = true;
}

void Coordinator::accept_result(const std::string& session_id, const DeviceResult& result) {
    std::lock_guard lock(mutex_);
    SearchSession& s = session_locked(session_id);
    const auto query_leaves = leaves(s.query.root);
    ResultRecord r;
    r.session = s.id;
    r.device_id = result.device_id;
    r.photo_id = result.photo_id;
    r.score = result.score;
    for (const auto& [leaf, score] : result.leaf_scores) {
        if (leaf >= query_leaves.size()) throw ValidationError("result names leaf " + std::to_string(leaf));
        r.leaf_scores.emplace_back(query_leaves[leaf].name, score);
    }
    r.index = s.results.size();
    r.time_ms = result.time_ms;
    s.results.push_back(std::move(r));
    changed_.notify_all();
}

void Coordinator::accept_summary(const std::string& session_id, const TaskSummary& summary) {
    std::lock_guard lock(mutex_);
    SearchSession& s = session_locked(session_id);
    if (!s.pending.count(summary.device_id))
        throw NotFoundError("device " + summary.device_id + " has no open task in " + session_id);
    QueryHistory& hist = history_[s.query.id];
    for (const auto& id : summary.searched) {
        hist.searched[summary.device_id].insert(id);
        hist.evaluations.push_back({s.id, summary.device_id, id, false});
    }
    s.device_charges[summary.device_id] += summary.charges;
    s.summaries.push_back(summary);
    s.pending.erase(summary.device_id);
    finish_if_done(s);
    changed_.notify_all();
}

ResultPage Coordinator::results(const std::string& session_id, std::size_t cursor, std::size_t limit) const {
    std::lock_guard lock(mutex_);
    const SearchSession& s = session_locked(session_id);
    ResultPage page;
    const std::size_t begin = std::min(cursor, s.results.size());
    const std::size_t end = begin + std::min(limit, s.results.size() - begin);
    page.records.assign(s.results.begin() + static_cast<std::ptrdiff_t>(begin),
                        s.results.begin() + static_cast<std::ptrdiff_t>(end));
    page.next_cursor = end;
    page.complete = s.complete;
    if (s.complete && end == s.results.size()) page.completion = s.completion();
    return page;
}

ResultPage Coordinator::wait_results(const std::string& session_id, std::size_t cursor,
                                     std::chrono::milliseconds wait) const {
    {
        std::unique_lock lock(mutex_);
        session_locked(session_id);
        changed_.wait_for(lock, wait, [&] {
            const SearchSession& s = session_locked(session_id);
            return s.complete || s.results.size() > cursor;
        });
    }
    return results(session_id, cursor);
}

SearchSession Coordinator::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return session_locked(session_id);
}

std::vector<std::string> Coordinator::sessions() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

void Coordinator::mark_feedback(const std::string& session_id, const std::string& device_id,
                                const std::string& photo_id, bool relevant) {
    std::lock_guard lock(mutex_);
    SearchSession& s = session_locked(session_id);
    auto it = std::find_if(s.results.begin(), s.results.end(), [&](const ResultRecord& r) {
        return r.device_id == device_id && r.photo_id == photo_id;
    });
    if (it == s.results.end())
        throw NotFoundError("session " + session_id + " has no result " + device_id + "/" + photo_id);
    it->relevant = relevant;
    auto& marked = history_[s.query.id].relevant[device_id];
    if (relevant)
        marked.insert(photo_id);
    else
        marked.erase(photo_id);
}

std::map<std::string, std::size_t> Coordinator::relevant_marks(QueryId query) const {
    std::lock_guard lock(mutex_);
    std::map<std::string, std::size_t> out;
    auto it = history_.find(query);
    if (it == history_.end()) return out;
    for (const auto& [d, photos] : it->second.relevant)
        if (!photos.empty()) out[d] = photos.size();
    return out;
}

OffloadReply Coordinator::partition_evaluate(const OffloadRequest& request) {
    if (!request.photo) throw ParameterError("offload request carries no photo");
    std::vector<PredicateSpec> query_leaves;
    {
        std::lock_guard lock(mutex_);
        auto it = parsed_.find(request.query_xml);
        if (it == parsed_.end()) it = parsed_.emplace(request.query_xml, parse_query(request.query_xml, registry_)).first;
        query_leaves = leaves(it->second.root);
    }
    for (const auto& [leaf, name] : request.predicates) {
        if (!registry_.contains(name)) throw ValidationError("unknown predicate: " + name);
        if (leaf >= query_leaves.size() || query_leaves[leaf].name != name)
            throw ValidationError("predicate " + name + " is not leaf " + std::to_string(leaf) + " of the query");
    }
    OffloadReply reply;
    for (const auto& [leaf, name] : request.predicates) {
        const PredicateVerdict v = registry_.evaluate(query_leaves[leaf], *request.photo);
        reply.evaluated.push_back({leaf, v});
        reply.remote_ms += v.cpu_time_ms / kRemoteSpeedup;
        if (!v.accepted) {
            reply.accepted = false;
            break;
        }
    }
    cache_.insert(request.device_id, std::make_shared<const Photo>(*request.photo));
    return reply;
}

std::vector<EvaluationEvent> Coordinator::evaluations(QueryId query) const {
    std::lock_guard lock(mutex_);
    auto it = history_.find(query);
    if (it == history_.end()) return {};
    return it->second.evaluations;
}

OffloadReply InProcessChannel::evaluate(const OffloadRequest& request) { return server_.partition_evaluate(request); }

OffloadReply FaultyChannel::evaluate(const OffloadRequest& request) {
    const std::size_t call = calls_++;
    if (failing_.count(call)) throw TransportError("injected delivery failure");
    return inner_.evaluate(request);
}

Fleet::Fleet(Coordinator& server, FleetOptions options)
    : server_(server), options_(options), channel_(server), jitter_(options.jitter_seed) {}

DeviceState& Fleet::add_device(DeviceState device) {
    const std::string id = device.device_id;
    if (devices_.count(id)) throw ParameterError("duplicate device id: " + id);
    const std::size_t photos = device.corpus.size();
    auto& slot = devices_[id] = std::make_unique<DeviceState>(std::move(device));
    server_.register_device(id, photos);
    return *slot;
}

DeviceState& Fleet::device(const std::string& device_id) {
    auto it = devices_.find(device_id);
    if (it == devices_.end()) throw NotFoundError("unknown device: " + device_id);
    return *it->second;
}

std::vector<std::string> Fleet::device_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, d] : devices_) out.push_back(id);
    return out;
}

void Fleet::set_network_profile(const std::string& device_id, NetworkProfile profile) {
    theia::set_network_profile(device(device_id), std::move(profile));
}

void Fleet::inject_delay(const std::string& device_id, double extra_rtt_ms) {
    theia::inject_delay(device(device_id), extra_rtt_ms);
}

std::string Fleet::search(const QuerySpec& query, long budget, std::uint64_t seed) {
    const std::string id = server_.submit(query, budget, seed, now_ms_);
    run_pending();
    return id;
}

void Fleet::run_pending() {
    struct Active {
        std::string session;
        DeviceState* device = nullptr;
        std::unique_ptr<SearchRun> run;
        std::optional<StepRecord> step;
        std::vector<DeviceResult> buffered;
        double at = 0.0;
    };
    std::vector<Active> active;
    for (const auto& [id, dev] : devices_) {
        for (auto& a : server_.take_assignments(id)) {
            double start = now_ms_ + options_.push_delay_ms;
            if (options_.push_jitter_ms > 0) start += options_.push_jitter_ms * uniform_real(jitter_);
            dev->clock_ms = std::max(dev->clock_ms, start);
            Active act;
            act.session = a.session_id;
            act.device = dev.get();
            act.run = std::make_unique<SearchRun>(std::move(a.task), *dev, server_.registry(),
                                                  channel_override ? channel_override : &channel_);
            active.push_back(std::move(act));
        }
    }

    auto advance = [&](Active& a) {
        a.buffered.clear();
        a.step = a.run->step([&](const DeviceResult& r) { a.buffered.push_back(r); });
        a.at = a.step ? a.step->end_ms : a.run->now_ms();
        if (a.step && on_step) on_step({a.session, a.device->device_id, &*a.step});
    };
    using Key = std::pair<double, std::size_t>;
    std::priority_queue<Key, std::vector<Key>, std::greater<>> queue;
    for (std::size_t i = 0; i < active.size(); ++i) {
        advance(active[i]);
        queue.push({active[i].at, i});
    }
    const auto wall_start = std::chrono::steady_clock::now();
    const double virtual_start = now_ms_;
    while (!queue.empty()) {
        const auto [at, i] = queue.top();
        queue.pop();
        Active& a = active[i];
        if (options_.pace > 0)
            std::this_thread::sleep_until(wall_start + std::chrono::duration<double, std::milli>(
                                                           (at - virtual_start) * options_.pace));
        now_ms_ = std::max(now_ms_, at);
        if (!a.step) {
            server_.accept_summary(a.session, a.run->summary());
            continue;
        }
        for (const auto& r : a.buffered) server_.accept_result(a.session, r);
        if (on_commit) on_commit({a.session, a.device->device_id, &*a.step});
        advance(a);
        queue.push({a.at, i});
    }
}

}  // namespace theia
