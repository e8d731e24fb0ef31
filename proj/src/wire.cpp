#include "theia/wire.hpp"

#include "theia/error.hpp"

namespace theia {

void to_json(Json& j, const CostModel& c) {
    j = {{"flat", c.flat_per_device}, {"photo", c.per_photo}, {"result", c.per_result}};
}

void from_json(const Json& j, CostModel& c) {
    c.flat_per_device = j.at("flat").get<long>();
    c.per_photo = j.at("photo").get<long>();
    c.per_result = j.at("result").get<long>();
}

void to_json(Json& j, const Charges& c) {
    j = {{"flat", c.flat}, {"photos", c.photos}, {"results", c.results}, {"total", c.total()}};
}

void from_json(const Json& j, Charges& c) {
    c.flat = j.at("flat").get<long>();
    c.photos = j.at("photos").get<long>();
    c.results = j.at("results").get<long>();
}

const char* to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::Partitioned: return "partitioned";
        case Strategy::Local: return "local";
        case Strategy::FullOffload: return "offload";
    }
    return "partitioned";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "partitioned") return Strategy::Partitioned;
    if (s == "local") return Strategy::Local;
    if (s == "offload") return Strategy::FullOffload;
    throw ParameterError("unknown strategy: " + s);
}

void to_json(Json& j, const TaskOptions& o) {
    j = {{"training_photos", o.training_photos},
         {"offload_probes", o.offload_probes},
         {"idle_probe_ms", o.idle_probe_ms},
         {"strategy", to_string(o.strategy)}};
}

void from_json(const Json& j, TaskOptions& o) {
    o.training_photos = j.at("training_photos").get<std::size_t>();
    o.offload_probes = j.at("offload_probes").get<std::size_t>();
    o.idle_probe_ms = j.at("idle_probe_ms").get<double>();
    o.strategy = parse_strategy(j.at("strategy").get<std::string>());
}

void to_json(Json& j, const DeviceResult& r) {
    Json leaves = Json::array();
    for (const auto& [leaf, score] : r.leaf_scores) leaves.push_back({{"leaf", leaf}, {"score", score}});
    j = {{"device_id", r.device_id},
         {"photo_id", r.photo_id},
         {"score", r.score},
         {"leaf_scores", leaves},
         {"time_ms", r.time_ms}};
}

void from_json(const Json& j, DeviceResult& r) {
    r.device_id = j.at("device_id").get<std::string>();
    r.photo_id = j.at("photo_id").get<std::string>();
    r.score = j.at("score").get<double>();
    r.leaf_scores.clear();
    for (const auto& l : j.at("leaf_scores")) r.leaf_scores.emplace_back(l.at("leaf").get<std::size_t>(), l.at("score").get<double>());
    r.time_ms = j.value("time_ms", 0.0);
}

void to_json(Json& j, const EnergyLedger& e) {
    j = {{"compute_mj", e.compute_mj}, {"transmit_mj", e.transmit_mj}, {"idle_mj", e.idle_mj}};
}

void from_json(const Json& j, EnergyLedger& e) {
    e.compute_mj = j.at("compute_mj").get<double>();
    e.transmit_mj = j.at("transmit_mj").get<double>();
    e.idle_mj = j.at("idle_mj").get<double>();
}

void to_json(Json& j, const TaskSummary& s) {
    Json leaves = Json::array();
    for (const auto& l : s.leaves) leaves.push_back({{"name", l.name}, {"evaluated", l.evaluated}, {"accepted", l.accepted}});
    j = {{"device_id", s.device_id},
         {"query_id", s.query_id.value},
         {"photos_searched", s.photos_searched},
         {"results", s.results},
         {"charges", s.charges},
         {"energy", s.energy},
         {"searched", s.searched},
         {"leaves", leaves},
         {"started_ms", s.started_ms},
         {"finished_ms", s.finished_ms}};
}

void from_json(const Json& j, TaskSummary& s) {
    s.device_id = j.at("device_id").get<std::string>();
    s.query_id = QueryId{j.at("query_id").get<std::uint64_t>()};
    s.photos_searched = j.at("photos_searched").get<std::size_t>();
    s.results = j.at("results").get<std::size_t>();
    s.charges = j.at("charges").get<Charges>();
    s.energy = j.at("energy").get<EnergyLedger>();
    s.searched = j.at("searched").get<std::vector<std::string>>();
    s.leaves.clear();
    for (const auto& l : j.at("leaves"))
        s.leaves.push_back({l.at("name").get<std::string>(), l.at("evaluated").get<std::uint64_t>(),
                            l.at("accepted").get<std::uint64_t>()});
    s.started_ms = j.value("started_ms", 0.0);
    s.finished_ms = j.value("finished_ms", 0.0);
}

void to_json(Json& j, const ResultRecord& r) {
    Json leaves = Json::array();
    for (const auto& [name, score] : r.leaf_scores) leaves.push_back({{"name", name}, {"score", score}});
    j = {{"type", "result"},
         {"session", r.session},
         {"device_id", r.device_id},
         {"photo_id", r.photo_id},
         {"score", r.score},
         {"predicate_scores", leaves},
         {"index", r.index},
         {"time_ms", r.time_ms},
         {"from_cache", r.from_cache}};
    j["relevant"] = r.relevant ? Json(*r.relevant) : Json(nullptr);
}

void to_json(Json& j, const Completion& c) {
    Json leaves = Json::array();
    for (const auto& l : c.leaves) {
        const auto s = l.selectivity();
        leaves.push_back({{"name", l.name},
                          {"evaluated", l.evaluated},
                          {"accepted", l.accepted},
                          {"selectivity", s ? Json(*s) : Json(nullptr)}});
    }
    j = {{"type", "complete"},
         {"photos_searched", c.photos_searched},
         {"cache_photos", c.cache_photos},
         {"devices_searched", c.devices_searched},
         {"devices_charged", c.devices_charged},
         {"results", c.results},
         {"charges", c.charges},
         {"selectivity", leaves}};
}

void to_json(Json& j, const LeafOutcome& o) {
    j = {{"index", o.leaf},
         {"accepted", o.verdict.accepted},
         {"score", o.verdict.score},
         {"cpu_time_ms", o.verdict.cpu_time_ms}};
}

void to_json(Json& j, const OffloadReply& r) {
    j = {{"accepted", r.accepted}, {"evaluated", r.evaluated}, {"remote_ms", r.remote_ms}};
}

void from_json(const Json& j, OffloadReply& r) {
    r.accepted = j.at("accepted").get<bool>();
    r.remote_ms = j.at("remote_ms").get<double>();
    r.evaluated.clear();
    for (const auto& e : j.at("evaluated"))
        r.evaluated.push_back({e.at("index").get<std::size_t>(),
                               {e.at("accepted").get<bool>(), e.at("score").get<double>(),
                                e.at("cpu_time_ms").get<double>()}});
}

void to_json(Json& j, const Assignment& a) {
    j = {{"session_id", a.session_id},
         {"device_id", a.device_id},
         {"query_xml", a.task.query_xml.empty() ? serialize_query(a.task.query) : a.task.query_xml},
         {"budget_share", a.task.budget_share},
         {"costs", a.task.costs},
         {"excluded", a.task.excluded},
         {"seed", a.task.seed},
         {"options", a.task.options}};
}

Assignment assignment_from_json(const Json& j, const PredicateRegistry& registry) {
    Assignment a;
    a.session_id = j.at("session_id").get<std::string>();
    a.device_id = j.at("device_id").get<std::string>();
    a.task.query_xml = j.at("query_xml").get<std::string>();
    a.task.query = parse_query(a.task.query_xml, registry);
    a.task.budget_share = j.at("budget_share").get<long>();
    a.task.costs = j.at("costs").get<CostModel>();
    a.task.excluded = j.at("excluded").get<std::vector<std::string>>();
    a.task.seed = j.at("seed").get<std::uint64_t>();
    a.task.options = j.at("options").get<TaskOptions>();
    return a;
}

Json offload_spec_json(const OffloadRequest& request) {
    Json preds = Json::array();
    for (const auto& [leaf, name] : request.predicates) preds.push_back({{"index", leaf}, {"name", name}});
    return {{"query_id", request.query_id.value},
            {"query_xml", request.query_xml},
            {"predicates", preds},
            {"device_id", request.device_id},
            {"photo_id", request.photo ? request.photo->id() : std::string()}};
}

}  // namespace theia
