#pragma once

#include <json.hpp>

#include "theia/server.hpp"

namespace theia {

using Json = nlohmann::json;

void to_json(Json& j, const CostModel& c);
void from_json(const Json& j, CostModel& c);
void to_json(Json& j, const Charges& c);
void from_json(const Json& j, Charges& c);
void to_json(Json& j, const TaskOptions& o);
void from_json(const Json& j, TaskOptions& o);
void to_json(Json& j, const DeviceResult& r);
void from_json(const Json& j, DeviceResult& r);
void to_json(Json& j, const EnergyLedger& e);
void from_json(const Json& j, EnergyLedger& e);
void to_json(Json& j, const TaskSummary& s);
void from_json(const Json& j, TaskSummary& s);
void to_json(Json& j, const ResultRecord& r);
void to_json(Json& j, const Completion& c);
void to_json(Json& j, const LeafOutcome& o);
void to_json(Json& j, const OffloadReply& r);
void from_json(const Json& j, OffloadReply& r);
void to_json(Json& j, const Assignment& a);

/// The query travels as XML and is parsed against `registry`.
Assignment assignment_from_json(const Json& j, const PredicateRegistry& registry);

/// The "spec" part of an offload request (everything but the photo bytes).
Json offload_spec_json(const OffloadRequest& request);

const char* to_string(Strategy s) noexcept;
Strategy parse_strategy(const std::string& s);

}  // namespace theia
