#include "theia/gate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "theia/error.hpp"

namespace theia {

namespace {

PredicateSpec spec(std::string_view name, std::vector<std::string> parameters, double threshold) {
    PredicateSpec p;
    p.name = std::string(name);
    p.parameters = std::move(parameters);
    p.threshold = threshold;
    return p;
}

// Reference statistics of a cloudy-sky block and the blue cutoff used with it.
constexpr double kSkyMean = 172.0;
constexpr double kSkyStddev = 2.0;
constexpr double kSkyGradient = 3.0;
constexpr double kSkyThreshold = 0.8;
constexpr int kBlueCutoff = 190;

PredicateSpec face() { return spec(kFaceFront, {}, 1.0); }
PredicateSpec sky_texture() {
    return spec(kTexture, {std::to_string(kSkyMean), std::to_string(kSkyStddev), std::to_string(kSkyGradient)},
                kSkyThreshold);
}
PredicateSpec blue() { return spec(kRgbThreshold, {"B"}, static_cast<double>(kBlueCutoff)); }

QuerySpec conjunction(QueryId id, std::vector<PredicateSpec> preds) {
    QuerySpec q;
    q.id = id;
    if (preds.size() == 1) {
        q.root = QueryNode::leaf(std::move(preds.front()));
        return q;
    }
    std::vector<QueryNode> children;
    for (auto& p : preds) children.push_back(QueryNode::leaf(std::move(p)));
    q.root = QueryNode::all_of(std::move(children));
    return q;
}

std::string number_text(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); }

PhotoMeta handset_meta(Rng& rng) {
    PhotoMeta m;
    m.timestamp = 1325376000 + static_cast<std::int64_t>(uniform_index(rng, 365u * 24 * 3600));
    m.latitude = uniform(rng, 40.0, 41.0);
    m.longitude = uniform(rng, -80.5, -79.5);
    m.bytes = 300'000 + uniform_index(rng, 400'001);
    return m;
}

/// Smooth pale-blue field with a faint vertical brightening.
Photo sky_photo(const std::string& id, int w, int h, Rng& rng) {
    const double r = uniform(rng, 130, 150), g = uniform(rng, 170, 185), b = uniform(rng, 225, 240);
    const double lift = uniform(rng, 0, 8);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double n = uniform(rng, -3, 3) + lift * y / h;
            const std::size_t i = 3 * (static_cast<std::size_t>(y) * w + x);
            px[i] = clamp_byte(r + n);
            px[i + 1] = clamp_byte(g + n);
            px[i + 2] = clamp_byte(b + n);
        }
    }
    return Photo(id, w, h, std::move(px), handset_meta(rng));
}

/// Busy scene: random base color under strong per-pixel noise in every block.
Photo clutter_photo(const std::string& id, int w, int h, Rng& rng) {
    const double r = uniform(rng, 0, 255), g = uniform(rng, 0, 255), b = uniform(rng, 0, 255);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double n = uniform(rng, -60, 60);
            const std::size_t i = 3 * (static_cast<std::size_t>(y) * w + x);
            px[i] = clamp_byte(r + n + uniform(rng, -10, 10));
            px[i + 1] = clamp_byte(g + n + uniform(rng, -10, 10));
            px[i + 2] = clamp_byte(b + n + uniform(rng, -10, 10));
        }
    }
    return Photo(id, w, h, std::move(px), handset_meta(rng));
}

std::string padded(std::size_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

int digits(std::size_t n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

/// k distinct elements of `pool`, removed from it.
std::vector<std::size_t> draw(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
    k = std::min(k, pool.size());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
}

Json energy_json(const EnergySettings& e) {
    auto profile = [](const NetworkProfile& p) {
        return Json{{"name", p.name},
                    {"rtt_ms", p.rtt_ms},
                    {"bandwidth_bytes_per_s", p.bandwidth_bytes_per_s},
                    {"tx_power_mw", p.tx_power_mw}};
    };
    return {{"alpha_mw", e.model.alpha_mw},
            {"beta_mw", e.model.beta_mw},
            {"idle_mw", e.model.idle_mw},
            {"wifi", profile(e.wifi)},
            {"g3", profile(e.g3)}};
}

Json quartiles_json(const Quartiles& q) {
    return {{"p25", q.p25}, {"median", q.median}, {"p75", q.p75}, {"samples", q.samples}};
}

double finite_or_null_guard(double v) { return std::isfinite(v) ? v : -1.0; }

constexpr long kUnlimitedBudget = 1'000'000'000;

}  // namespace

QuerySpec query_1(QueryId id) { return conjunction(id, {face(), sky_texture(), blue()}); }
QuerySpec query_2(QueryId id) { return conjunction(id, {face(), blue()}); }
QuerySpec query_3(QueryId id) { return conjunction(id, {face()}); }
QuerySpec all_accept_query(QueryId id) { return conjunction(id, {spec(kAllAccept, {}, 1.0)}); }
QuerySpec cloudy_sky_query(QueryId id) { return conjunction(id, {blue(), sky_texture()}); }

std::vector<SyntheticPredicate> query_1_analog_predicates() {
    return {{"face", kFaceSelectivity, kFaceCostMs, 1}, {"texture", 0.4, 1.5, 2}, {"rgb", 0.3, 0.2, 3}};
}

QuerySpec synthetic_query(const std::vector<SyntheticPredicate>& predicates, QueryId id) {
    std::vector<PredicateSpec> preds;
    for (const auto& p : predicates)
        preds.push_back(spec(kSynthetic, {number_text(p.selectivity), number_text(p.cost_ms), std::to_string(p.salt)},
                             0.5));
    return conjunction(id, std::move(preds));
}

QuerySpec query_1_analog(QueryId id) { return synthetic_query(query_1_analog_predicates(), id); }

QuerySpec query_2_analog(QueryId id) {
    const auto p = query_1_analog_predicates();
    return synthetic_query({p[0], p[2]}, id);
}

QuerySpec query_3_analog(QueryId id) { return synthetic_query({query_1_analog_predicates()[0]}, id); }

std::size_t PlantedCorpus::photo_count() const {
    std::size_t n = 0;
    for (const auto& d : devices) n += d.corpus.size();
    return n;
}

CorpusParams CorpusParams::from_config(const Config& config) {
    CorpusParams p;
    p.devices = static_cast<std::size_t>(config.get_long("corpus.devices", static_cast<long>(p.devices)));
    p.photos_per_device =
        static_cast<std::size_t>(config.get_long("corpus.photos_per_device", static_cast<long>(p.photos_per_device)));
    if (config.contains("corpus.total_photos"))
        p.total_photos = static_cast<std::size_t>(config.get_long("corpus.total_photos", 0));
    p.locality = config.get_double("corpus.locality", p.locality);
    p.relevant_fraction = config.get_double("corpus.relevant_fraction", p.relevant_fraction);
    p.decoy_fraction = config.get_double("corpus.decoy_fraction", p.decoy_fraction);
    p.width = static_cast<int>(config.get_long("corpus.width", p.width));
    p.height = static_cast<int>(config.get_long("corpus.height", p.height));
    p.seed = static_cast<std::uint64_t>(config.get_long("corpus.seed", static_cast<long>(p.seed)));
    return p;
}

PlantedCorpus generate_corpus(const CorpusParams& params) {
    if (params.devices == 0) throw ParameterError("corpus needs at least one device");
    if (params.locality < 0.0 || params.locality > 1.0) throw ParameterError("locality must be in [0, 1]");
    if (params.relevant_fraction < 0.0 || params.decoy_fraction < 0.0 ||
        params.relevant_fraction + params.decoy_fraction > 1.0)
        throw ParameterError("relevant and decoy fractions must be in [0, 1] and sum to at most 1");
    if (params.width < 4 || params.height < 4) throw ParameterError("photos must be at least 4x4");

    const std::size_t d_count = params.devices;
    std::vector<std::size_t> per_device(d_count, params.photos_per_device);
    if (params.total_photos) {
        const std::size_t base = *params.total_photos / d_count, extra = *params.total_photos % d_count;
        for (std::size_t i = 0; i < d_count; ++i) per_device[i] = base + (i < extra ? 1 : 0);
    }

    Rng rng(derive_seed(params.seed, 1));
    PlantedCorpus out;
    out.seed = params.seed;
    out.locality = params.locality;

    std::vector<std::string> device_ids, photo_ids;
    std::vector<std::size_t> owner;
    const int dw = std::max(2, digits(d_count - 1));
    for (std::size_t d = 0; d < d_count; ++d) {
        device_ids.push_back("d" + padded(d, dw));
        for (std::size_t k = 0; k < per_device[d]; ++k) {
            photo_ids.push_back(device_ids[d] + "_p" + padded(k, 3));
            owner.push_back(d);
        }
    }
    const std::size_t total = photo_ids.size();

    std::vector<std::size_t> devices(d_count);
    for (std::size_t i = 0; i < d_count; ++i) devices[i] = i;
    const auto hot_count = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d_count)));
    std::vector<bool> is_hot(d_count, false);
    for (std::size_t d : draw(devices, hot_count, rng)) {
        is_hot[d] = true;
        out.hot_devices.insert(device_ids[d]);
    }

    const auto relevant_count = static_cast<std::size_t>(std::lround(params.relevant_fraction * total));
    const auto hot_relevant = static_cast<std::size_t>(std::lround(params.locality * relevant_count));
    std::vector<std::size_t> hot_slots, all_slots;
    for (std::size_t i = 0; i < total; ++i) (is_hot[owner[i]] ? hot_slots : all_slots).push_back(i);
    std::vector<bool> relevant(total, false), decoy(total, false);
    for (std::size_t i : draw(hot_slots, hot_relevant, rng)) relevant[i] = true;
    all_slots.insert(all_slots.end(), hot_slots.begin(), hot_slots.end());
    std::sort(all_slots.begin(), all_slots.end());
    for (std::size_t i : draw(all_slots, relevant_count - std::min(hot_relevant, relevant_count), rng))
        relevant[i] = true;
    std::sort(all_slots.begin(), all_slots.end());
    const auto decoy_count = static_cast<std::size_t>(std::lround(params.decoy_fraction * total));
    for (std::size_t i : draw(all_slots, decoy_count, rng)) decoy[i] = true;

    out.devices.resize(d_count);
    for (std::size_t d = 0; d < d_count; ++d) out.devices[d].device_id = device_ids[d];
    for (std::size_t i = 0; i < total; ++i) {
        const std::string& id = photo_ids[i];
        Rng prng(derive_seed(params.seed, fnv1a64(id)));
        const bool smooth = relevant[i] || decoy[i];
        auto photo = std::make_shared<const Photo>(smooth ? sky_photo(id, params.width, params.height, prng)
                                                          : clutter_photo(id, params.width, params.height, prng));
        out.devices[owner[i]].corpus.emplace(id, std::move(photo));
        if (relevant[i]) out.relevant.insert(id);
        if (decoy[i]) out.decoys.insert(id);
    }
    return out;
}

void save_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& d : corpus.devices) {
        const fs::path sub = dir / d.device_id;
        fs::create_directories(sub, ec);
        if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
        for (const auto& [id, photo] : d.corpus) save_photo(sub, *photo);
    }
    std::ofstream gt(dir / "ground_truth.txt");
    if (!gt) throw IoError("cannot write " + (dir / "ground_truth.txt").string());
    gt << "seed " << corpus.seed << "\n";
    gt << "locality " << corpus.locality << "\n";
    for (const auto& h : corpus.hot_devices) gt << "hot " << h << "\n";
    for (const auto& d : corpus.devices)
        for (const auto& [id, photo] : d.corpus) {
            if (corpus.relevant.count(id)) gt << "relevant " << d.device_id << " " << id << "\n";
            if (corpus.decoys.count(id)) gt << "decoy " << d.device_id << " " << id << "\n";
        }
    if (!gt) throw IoError("cannot write " + (dir / "ground_truth.txt").string());
}

PlantedCorpus load_planted_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    PlantedCorpus out;
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& s : subdirs) out.devices.push_back({s.filename().string(), load_corpus(s)});

    std::ifstream gt(dir / "ground_truth.txt");
    std::string line;
    while (std::getline(gt, line)) {
        std::istringstream is(line);
        std::string kind, a, b;
        is >> kind >> a >> b;
        if (kind == "seed") out.seed = std::stoull(a);
        else if (kind == "locality") out.locality = std::stod(a);
        else if (kind == "hot") out.hot_devices.insert(a);
        else if (kind == "relevant") out.relevant.insert(b);
        else if (kind == "decoy") out.decoys.insert(b);
    }
    return out;
}

Corpus device_corpus(const std::string& prefix, std::size_t count, std::uint64_t seed) {
    Corpus out;
    const int w = std::max(3, digits(count));
    for (std::size_t i = 0; i < count; ++i) {
        const std::string id = prefix + padded(i, w);
        Rng rng(derive_seed(seed, fnv1a64(id)));
        out.emplace(id, std::make_shared<const Photo>(clutter_photo(id, 32, 24, rng)));
    }
    return out;
}

DeviceState make_device(const std::string& id, Corpus corpus, const EnergySettings& energy,
                        const std::string& profile) {
    DeviceState d;
    d.device_id = id;
    d.corpus = std::move(corpus);
    d.network = energy.profile(profile);
    d.hardware = energy.model;
    d.model = energy.model;
    d.rng_seed = fnv1a64(id);
    return d;
}

UserPolicy UserPolicy::from_config(const Config& config) {
    UserPolicy p;
    if (auto kind = config.get("policy.kind")) p.kind = parse_policy(*kind);
    if (auto list = config.get("policy.budgets")) {
        p.budgets.clear();
        std::istringstream is(*list);
        std::string item;
        while (std::getline(is, item, ',')) {
            try {
                p.budgets.push_back(std::stol(item));
            } catch (const std::exception&) {
                throw ParameterError("policy.budgets: not a number: " + item);
            }
        }
    }
    p.target_relevant = static_cast<std::size_t>(config.get_long("policy.target", static_cast<long>(p.target_relevant)));
    p.max_submissions =
        static_cast<std::size_t>(config.get_long("policy.max_submissions", static_cast<long>(p.max_submissions)));
    p.marker_threshold = config.get_double("policy.threshold", p.marker_threshold);
    return p;
}

long UserPolicy::budget_for(std::size_t submission) const {
    if (budgets.empty()) throw ParameterError("policy has no budgets");
    return budgets[std::min(submission, budgets.size() - 1)];
}

void UserPolicy::check(const CostModel& costs) const {
    if (budgets.empty()) throw ParameterError("policy has no budgets");
    for (long b : budgets)
        if (b < costs.minimum_budget())
            throw BudgetError("policy budget " + std::to_string(b) + " is below the minimum", costs.minimum_budget());
    if (target_relevant == 0) throw ParameterError("target must be positive");
}

const char* to_string(PolicyKind kind) noexcept {
    switch (kind) {
        case PolicyKind::OracleFeedback: return "oracle";
        case PolicyKind::MarkNone: return "none";
        case PolicyKind::ThresholdMarker: return "threshold";
    }
    return "oracle";
}

PolicyKind parse_policy(const std::string& s) {
    if (s == "oracle") return PolicyKind::OracleFeedback;
    if (s == "none") return PolicyKind::MarkNone;
    if (s == "threshold") return PolicyKind::ThresholdMarker;
    throw ParameterError("unknown policy: " + s);
}

double single_pass_cost_per_relevant(const PlantedCorpus& corpus, std::size_t target, const CostModel& costs) {
    const double r = static_cast<double>(std::min(target, corpus.relevant.size()));
    if (r == 0) return std::numeric_limits<double>::infinity();
    const double cost = static_cast<double>(corpus.devices.size()) * costs.flat_per_device +
                        static_cast<double>(corpus.photo_count()) * costs.per_photo + r * costs.per_result;
    return cost / r;
}

double lower_bound_cost_per_relevant(std::size_t target, const CostModel& costs) {
    if (target == 0) throw ParameterError("target must be positive");
    const double t = static_cast<double>(target);
    return (costs.flat_per_device + t * (costs.per_photo + costs.per_result)) / t;
}

IncrementalReport run_incremental_experiment(const PlantedCorpus& corpus, const UserPolicy& policy,
                                             const ServerOptions& options, std::uint64_t seed,
                                             const QuerySpec& query) {
    policy.check(options.costs);
    Coordinator server(PredicateRegistry::builtin(), options);
    Fleet fleet(server);
    const EnergySettings energy;
    for (const auto& d : corpus.devices) fleet.add_device(make_device(d.device_id, d.corpus, energy));

    IncrementalReport rep;
    rep.policy = policy.kind;
    rep.seed = seed;
    rep.single_pass_cost_per_relevant = single_pass_cost_per_relevant(corpus, policy.target_relevant, options.costs);
    rep.lower_bound_cost_per_relevant = lower_bound_cost_per_relevant(policy.target_relevant, options.costs);

    std::size_t later_results = 0, later_relevant = 0, marked_results = 0, marked_relevant = 0;
    for (std::size_t k = 0; k < policy.max_submissions && rep.relevant_found < policy.target_relevant; ++k) {
        const auto marks = server.relevant_marks(query.id);
        SubmissionReport sub;
        sub.index = k;
        sub.budget = policy.budget_for(k);
        sub.session = fleet.search(query, sub.budget, derive_seed(seed, k + 1));
        const SearchSession s = server.session(sub.session);
        sub.devices = s.devices;
        for (const auto& d : s.devices)
            if (marks.count(d)) ++sub.marked_devices;
        sub.photos_searched = s.completion().photos_searched;
        sub.results = s.results.size();
        sub.cost = s.charges().total();
        for (const auto& r : s.results) {
            const bool relevant = corpus.relevant.count(r.photo_id) != 0;
            if (relevant) ++sub.relevant;
            if (marks.count(r.device_id)) {
                ++sub.marked_results;
                if (relevant) ++sub.marked_relevant;
            }
            bool mark = false;
            if (policy.kind == PolicyKind::OracleFeedback) mark = relevant;
            if (policy.kind == PolicyKind::ThresholdMarker) mark = r.score >= policy.marker_threshold;
            if (mark) server.mark_feedback(sub.session, r.device_id, r.photo_id, true);
        }
        rep.total_cost += sub.cost;
        rep.relevant_found += sub.relevant;
        rep.results += sub.results;
        if (k > 0) {
            later_results += sub.results;
            later_relevant += sub.relevant;
            marked_results += sub.marked_results;
            marked_relevant += sub.marked_relevant;
        }
        const bool empty = s.devices.empty();
        rep.submissions.push_back(std::move(sub));
        if (empty) break;
    }
    rep.reached_target = rep.relevant_found >= policy.target_relevant;
    rep.cost_per_relevant = rep.relevant_found ? static_cast<double>(rep.total_cost) / rep.relevant_found
                                               : std::numeric_limits<double>::infinity();
    auto rate = [](std::size_t hits, std::size_t n) -> std::optional<double> {
        if (n == 0) return std::nullopt;
        return static_cast<double>(hits) / static_cast<double>(n);
    };
    rep.resubmission_success_rate = rate(later_relevant, later_results);
    rep.marked_success_rate = rate(marked_relevant, marked_results);
    rep.unmarked_success_rate = rate(later_relevant - marked_relevant, later_results - marked_results);
    return rep;
}

std::size_t IncrementalTrials::required() const {
    const std::size_t n = feedback.size();
    return n - n / 20;
}

IncrementalTrials run_incremental_trials(const PlantedCorpus& corpus, const UserPolicy& policy,
                                         const ServerOptions& options, std::uint64_t seed, std::size_t trials) {
    IncrementalTrials out;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(seed, t + 1);
        IncrementalReport fb = run_incremental_experiment(corpus, policy, options, trial_seed);
        UserPolicy none = policy;
        none.kind = PolicyKind::MarkNone;
        none.max_submissions = fb.submissions.size();
        none.target_relevant = corpus.relevant.size() + 1;
        IncrementalReport nf = run_incremental_experiment(corpus, none, options, trial_seed);
        nf.lower_bound_cost_per_relevant = fb.lower_bound_cost_per_relevant;
        nf.single_pass_cost_per_relevant = fb.single_pass_cost_per_relevant;
        if (fb.cost_per_relevant < fb.single_pass_cost_per_relevant) ++out.payoff_wins;
        if (fb.marked_success_rate && fb.unmarked_success_rate && *fb.marked_success_rate > *fb.unmarked_success_rate)
            ++out.locality_wins;
        if (fb.resubmission_success_rate && nf.resubmission_success_rate &&
            *fb.resubmission_success_rate > *nf.resubmission_success_rate)
            ++out.paired_wins;
        out.feedback.push_back(std::move(fb));
        out.no_feedback.push_back(std::move(nf));
    }
    return out;
}

PartitionConfig PartitionConfig::from_config(const Config& config) {
    PartitionConfig c;
    c.photos = static_cast<std::size_t>(config.get_long("partition.photos", static_cast<long>(c.photos)));
    c.window_start =
        static_cast<std::size_t>(config.get_long("partition.window_start", static_cast<long>(c.window_start)));
    c.training_photos =
        static_cast<std::size_t>(config.get_long("experiment.training_photos", static_cast<long>(c.training_photos)));
    c.energy = EnergySettings::from_config(config);
    return c;
}

DynamicConfig DynamicConfig::from_config(const Config& config) {
    DynamicConfig c;
    c.photos = static_cast<std::size_t>(config.get_long("dynamic.photos", static_cast<long>(c.photos)));
    c.delay_at = static_cast<std::size_t>(config.get_long("dynamic.delay_at", static_cast<long>(c.delay_at)));
    c.extra_rtt_ms = config.get_double("dynamic.extra_rtt_ms", c.extra_rtt_ms);
    const long remove = config.get_long("dynamic.remove_at", static_cast<long>(c.remove_at.value_or(0)));
    if (remove < 0) c.remove_at.reset();
    else c.remove_at = static_cast<std::size_t>(remove);
    c.window = static_cast<std::size_t>(config.get_long("dynamic.window", static_cast<long>(c.window)));
    c.training_photos =
        static_cast<std::size_t>(config.get_long("experiment.training_photos", static_cast<long>(c.training_photos)));
    c.energy = EnergySettings::from_config(config);
    return c;
}

LatencyConfig LatencyConfig::from_config(const Config& config) {
    LatencyConfig c;
    c.trials = static_cast<std::size_t>(config.get_long("latency.trials", static_cast<long>(c.trials)));
    c.photos_per_device = static_cast<std::size_t>(
        config.get_long("latency.photos_per_device", static_cast<long>(c.photos_per_device)));
    c.budget = config.get_long("latency.budget", c.budget);
    c.push_delay_ms = config.get_double("latency.push_delay_ms", c.push_delay_ms);
    c.push_jitter_ms = config.get_double("latency.push_jitter_ms", c.push_jitter_ms);
    c.pace = config.get_double("latency.pace", c.pace);
    c.energy = EnergySettings::from_config(config);
    return c;
}

PartitionReport run_partition_experiment(const PartitionConfig& config) {
    if (config.window_start >= config.photos) throw ParameterError("window start must be below the photo count");
    PartitionReport rep;
    rep.config = config;
    const std::vector<std::pair<std::string, QuerySpec>> queries = {
        {"Query_1", query_1_analog()}, {"Query_2", query_2_analog()}, {"Query_3", query_3_analog()}};
    const Corpus corpus = device_corpus("p", config.photos, config.seed);
    rep.dominance = true;
    for (const auto& [qname, query] : queries) {
        for (const std::string profile : {"wifi", "g3"}) {
            std::map<Strategy, double> window;
            for (Strategy strategy : {Strategy::Local, Strategy::FullOffload, Strategy::Partitioned}) {
                ServerOptions options;
                options.task_options.training_photos = config.training_photos;
                options.task_options.strategy = strategy;
                Coordinator server(PredicateRegistry::builtin(), options);
                Fleet fleet(server);
                fleet.add_device(make_device("phone", corpus, config.energy, profile));
                PartitionCell cell;
                cell.query = qname;
                cell.profile = profile;
                cell.strategy = strategy;
                double first = -1, last = 0;
                fleet.on_step = [&](const FleetEvent& e) {
                    const StepRecord& st = *e.step;
                    if (cell.photos >= config.window_start) cell.window_energy += st.energy;
                    cell.energy += st.energy;
                    if (first < 0) first = st.start_ms;
                    last = st.end_ms;
                    if (st.offloaded) ++cell.offloaded;
                    ++cell.photos;
                };
                fleet.search(query, kUnlimitedBudget, config.seed);
                cell.time_s = (last - std::max(first, 0.0)) / 1000.0;
                window[strategy] = cell.window_energy.total_mj();
                rep.cells.push_back(std::move(cell));
            }
            const double p = window[Strategy::Partitioned];
            const double tol = 1e-9 * std::max(1.0, p);
            if (p > window[Strategy::Local] + tol || p > window[Strategy::FullOffload] + tol) rep.dominance = false;
        }
    }
    return rep;
}

DynamicReport run_dynamic_experiment(const DynamicConfig& config, const QuerySpec& query) {
    if (config.delay_at == 0 || config.delay_at >= config.photos)
        throw ParameterError("delay must start inside the run");
    if (config.remove_at && *config.remove_at <= config.delay_at)
        throw ParameterError("delay must be removed after it starts");
    DynamicReport rep;
    rep.config = config;
    ServerOptions options;
    options.task_options.training_photos = config.training_photos;
    Coordinator server(PredicateRegistry::builtin(), options);
    Fleet fleet(server);
    fleet.add_device(make_device("phone", device_corpus("p", config.photos, config.seed), config.energy));
    fleet.on_step = [&](const FleetEvent& e) {
        const StepRecord& st = *e.step;
        rep.trace.push_back({rep.trace.size(), st.offload_index, st.wireless_cost, st.order});
        const std::size_t done = rep.trace.size();
        if (done == config.delay_at) fleet.inject_delay(e.device_id, config.extra_rtt_ms);
        if (config.remove_at && done == *config.remove_at) fleet.inject_delay(e.device_id, 0.0);
    };
    fleet.search(query, kUnlimitedBudget, config.seed);

    if (rep.trace.size() < config.delay_at) return rep;
    rep.index_before = rep.trace[config.delay_at - 1].offload_index;
    const std::size_t shift_end = std::min(rep.trace.size(), config.delay_at + config.window);
    for (std::size_t i = config.delay_at; i < shift_end; ++i)
        if (rep.trace[i].offload_index > rep.index_before) {
            rep.shifted_at = i;
            break;
        }
    if (config.remove_at) {
        const std::size_t end = std::min(rep.trace.size(), *config.remove_at + config.window);
        for (std::size_t i = *config.remove_at; i < end; ++i)
            if (rep.trace[i].offload_index == rep.index_before) {
                rep.restored_at = i;
                break;
            }
    }
    rep.passed = rep.shifted_at.has_value() && (!config.remove_at || rep.restored_at.has_value());
    return rep;
}

Quartiles quartiles(std::vector<double> values) {
    Quartiles q;
    q.samples = values.size();
    if (values.empty()) return q;
    std::sort(values.begin(), values.end());
    auto at = [&](double f) {
        const double pos = f * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
    };
    q.p25 = at(0.25);
    q.median = at(0.5);
    q.p75 = at(0.75);
    return q;
}

LatencyReport run_latency_experiment(const LatencyConfig& config) {
    if (config.fleets.empty() || config.trials == 0) throw ParameterError("latency run needs fleets and trials");
    LatencyReport rep;
    rep.config = config;
    const std::vector<std::pair<std::string, QuerySpec>> queries = {
        {"All_Accept", all_accept_query()}, {"Query_2", query_2()}, {"Query_3", query_3()}};
    std::map<std::pair<std::string, std::size_t>, double> first_median, interval_median;
    for (const auto& [qname, query] : queries) {
        for (std::size_t n : config.fleets) {
            std::vector<double> first, intervals;
            for (std::size_t t = 0; t < config.trials; ++t) {
                const std::uint64_t trial_seed = derive_seed(config.seed, 1000 * n + t);
                CorpusParams cp;
                cp.devices = n;
                cp.photos_per_device = config.photos_per_device;
                cp.seed = trial_seed;
                const PlantedCorpus corpus = generate_corpus(cp);
                Coordinator server(PredicateRegistry::builtin());
                FleetOptions fo;
                fo.push_delay_ms = config.push_delay_ms;
                fo.push_jitter_ms = config.push_jitter_ms;
                fo.jitter_seed = trial_seed;
                if (config.wall_clock) fo.pace = config.pace;
                Fleet fleet(server, fo);
                for (const auto& d : corpus.devices) fleet.add_device(make_device(d.device_id, d.corpus, config.energy));
                const std::string sid = fleet.search(query, config.budget, trial_seed);
                const SearchSession s = server.session(sid);
                if (s.results.empty()) continue;
                first.push_back((s.results.front().time_ms - s.submitted_ms) / 1000.0);
                for (std::size_t i = 1; i < s.results.size(); ++i)
                    intervals.push_back((s.results[i].time_ms - s.results[i - 1].time_ms) / 1000.0);
            }
            LatencyRow row{qname, n, quartiles(first), quartiles(intervals)};
            first_median[{qname, n}] = row.first_result_s.samples ? row.first_result_s.median
                                                                   : std::numeric_limits<double>::infinity();
            interval_median[{qname, n}] = row.interval_s.samples ? row.interval_s.median
                                                                  : std::numeric_limits<double>::infinity();
            rep.rows.push_back(row);
        }
    }
    const std::size_t smallest = *std::min_element(config.fleets.begin(), config.fleets.end());
    const std::size_t largest = *std::max_element(config.fleets.begin(), config.fleets.end());
    rep.more_devices_faster = smallest != largest;
    for (const auto& [qname, query] : queries)
        if (!(first_median[{qname, largest}] < first_median[{qname, smallest}])) rep.more_devices_faster = false;
    rep.all_accept_fastest = true;
    for (std::size_t n : config.fleets)
        for (const auto& [qname, query] : queries)
            if (qname != "All_Accept" && !(interval_median[{"All_Accept", n}] < interval_median[{qname, n}]))
                rep.all_accept_fastest = false;
    return rep;
}

Json report_json(const IncrementalReport& r) {
    Json subs = Json::array();
    for (const auto& s : r.submissions)
        subs.push_back({{"index", s.index},
                        {"session", s.session},
                        {"budget", s.budget},
                        {"devices", s.devices.size()},
                        {"marked_devices", s.marked_devices},
                        {"photos_searched", s.photos_searched},
                        {"results", s.results},
                        {"relevant", s.relevant},
                        {"marked_results", s.marked_results},
                        {"marked_relevant", s.marked_relevant},
                        {"cost", s.cost}});
    Json j = {{"policy", to_string(r.policy)},
              {"seed", r.seed},
              {"submissions", subs},
              {"total_cost", r.total_cost},
              {"relevant_found", r.relevant_found},
              {"results", r.results},
              {"reached_target", r.reached_target},
              {"cost_per_relevant", finite_or_null_guard(r.cost_per_relevant)},
              {"single_pass_cost_per_relevant", finite_or_null_guard(r.single_pass_cost_per_relevant)},
              {"lower_bound_cost_per_relevant", r.lower_bound_cost_per_relevant}};
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    j["resubmission_success_rate"] = opt(r.resubmission_success_rate);
    j["marked_success_rate"] = opt(r.marked_success_rate);
    j["unmarked_success_rate"] = opt(r.unmarked_success_rate);
    return j;
}

Json report_json(const PartitionReport& r) {
    Json cells = Json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"query", c.query},
                         {"profile", c.profile},
                         {"strategy", to_string(c.strategy)},
                         {"photos", c.photos},
                         {"energy_mj", c.energy.total_mj()},
                         {"window_energy_mj", c.window_energy.total_mj()},
                         {"window", c.window_energy},
                         {"time_s", c.time_s},
                         {"offloaded", c.offloaded}});
    return {{"photos", r.config.photos},
            {"window_start", r.config.window_start},
            {"training_photos", r.config.training_photos},
            {"seed", r.config.seed},
            {"energy", energy_json(r.config.energy)},
            {"cells", cells},
            {"dominance", r.dominance}};
}

Json report_json(const DynamicReport& r) {
    Json trace = Json::array();
    for (const auto& t : r.trace)
        trace.push_back({{"photo", t.photo},
                         {"offload_index", t.offload_index},
                         {"wireless_cost", finite_or_null_guard(t.wireless_cost)},
                         {"order", t.order}});
    Json j = {{"photos", r.config.photos},
              {"delay_at", r.config.delay_at},
              {"extra_rtt_ms", r.config.extra_rtt_ms},
              {"window", r.config.window},
              {"training_photos", r.config.training_photos},
              {"seed", r.config.seed},
              {"energy", energy_json(r.config.energy)},
              {"trace", trace},
              {"index_before", r.index_before},
              {"passed", r.passed}};
    j["remove_at"] = r.config.remove_at ? Json(*r.config.remove_at) : Json(nullptr);
    j["shifted_at"] = r.shifted_at ? Json(*r.shifted_at) : Json(nullptr);
    j["restored_at"] = r.restored_at ? Json(*r.restored_at) : Json(nullptr);
    return j;
}

Json report_json(const LatencyReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"query", row.query},
                        {"fleet", row.fleet},
                        {"first_result_s", quartiles_json(row.first_result_s)},
                        {"interval_s", quartiles_json(row.interval_s)}});
    return {{"fleets", r.config.fleets},
            {"trials", r.config.trials},
            {"photos_per_device", r.config.photos_per_device},
            {"budget", r.config.budget},
            {"push_delay_ms", r.config.push_delay_ms},
            {"push_jitter_ms", r.config.push_jitter_ms},
            {"wall_clock", r.config.wall_clock},
            {"seed", r.config.seed},
            {"energy", energy_json(r.config.energy)},
            {"rows", rows},
            {"more_devices_faster", r.more_devices_faster},
            {"all_accept_fastest", r.all_accept_fastest}};
}

std::string table(const PartitionReport& r) {
    std::ostringstream os;
    os << "query\tprofile\tstrategy\tphotos\tenergy_mj\twindow_energy_mj\ttime_s\toffloaded\n";
    for (const auto& c : r.cells)
        os << c.query << '\t' << c.profile << '\t' << to_string(c.strategy) << '\t' << c.photos << '\t'
           << c.energy.total_mj() << '\t' << c.window_energy.total_mj() << '\t' << c.time_s << '\t' << c.offloaded
           << '\n';
    return os.str();
}

std::string table(const DynamicReport& r) {
    std::ostringstream os;
    os << "photo\toffload_index\twireless_cost\n";
    for (const auto& t : r.trace) os << t.photo << '\t' << t.offload_index << '\t' << t.wireless_cost << '\n';
    return os.str();
}

std::string table(const LatencyReport& r) {
    std::ostringstream os;
    os << "query\tfleet\tfirst_p25_s\tfirst_median_s\tfirst_p75_s\tinterval_p25_s\tinterval_median_s\tinterval_p75_s\n";
    for (const auto& row : r.rows)
        os << row.query << '\t' << row.fleet << '\t' << row.first_result_s.p25 << '\t' << row.first_result_s.median
           << '\t' << row.first_result_s.p75 << '\t' << row.interval_s.p25 << '\t' << row.interval_s.median << '\t'
           << row.interval_s.p75 << '\n';
    return os.str();
}

Json report_json(const IncrementalTrials& t, const PlantedCorpus& corpus, const UserPolicy& policy,
                 const ServerOptions& options) {
    Json budgets = policy.budgets;
    return {{"corpus",
             {{"devices", corpus.devices.size()},
              {"photos", corpus.photo_count()},
              {"relevant", corpus.relevant.size()},
              {"decoys", corpus.decoys.size()},
              {"hot_devices", corpus.hot_devices.size()},
              {"locality", corpus.locality},
              {"seed", corpus.seed}}},
            {"policy",
             {{"kind", to_string(policy.kind)},
              {"budgets", budgets},
              {"target", policy.target_relevant},
              {"max_submissions", policy.max_submissions}}},
            {"cost_model", options.costs},
            {"flat_fraction", options.flat_fraction},
            {"trials", t.feedback.size()},
            {"required", t.required()},
            {"payoff_wins", t.payoff_wins},
            {"locality_wins", t.locality_wins},
            {"paired_wins", t.paired_wins}};
}

std::string table(const IncrementalTrials& t) {
    std::ostringstream os;
    os << "trial\tseed\tsubmissions\ttotal_cost\trelevant\tcost_per_relevant\tsingle_pass\tlower_bound\t"
          "marked_success\tunmarked_success\tresubmission_success\tmark_none_success\n";
    auto opt = [&](const std::optional<double>& v) -> std::ostream& {
        if (v) return os << *v;
        return os << "NA";
    };
    for (std::size_t i = 0; i < t.feedback.size(); ++i) {
        const IncrementalReport& r = t.feedback[i];
        os << i << '\t' << r.seed << '\t' << r.submissions.size() << '\t' << r.total_cost << '\t' << r.relevant_found
           << '\t' << r.cost_per_relevant << '\t' << r.single_pass_cost_per_relevant << '\t'
           << r.lower_bound_cost_per_relevant << '\t';
        opt(r.marked_success_rate) << '\t';
        opt(r.unmarked_success_rate) << '\t';
        opt(r.resubmission_success_rate) << '\t';
        opt(t.no_feedback[i].resubmission_success_rate) << '\n';
    }
    return os.str();
}

}  // namespace theia
