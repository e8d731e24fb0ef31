#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace theia {

class Photo;
class PredicateRegistry;

/// Identity of a search intent. Resubmissions with the same id share
/// searched-photo state; a revised query gets a new id.
struct QueryId {
    std::uint64_t value = 0;
    auto operator<=>(const QueryId&) const = default;
};

/// Ordered XML attributes kept only so that unknown fields survive a round trip.
using Attributes = std::vector<std::pair<std::string, std::string>>;

struct PredicateSpec {
    std::string name;
    std::vector<std::string> parameters;
    double threshold = 0.0;
    std::vector<std::string> dependencies;

    Attributes extra_attributes;          // e.g. type="C"
    std::optional<Attributes> arguments;  // code-object fields; parsed, never used

    /// Parameter `i` as a number, if present and numeric.
    std::optional<double> number(std::size_t i) const;

    bool operator==(const PredicateSpec&) const = default;
};

struct QueryNode {
    enum class Kind { And, Or, Predicate };

    Kind kind = Kind::Predicate;
    std::vector<QueryNode> children;  // And / Or only
    PredicateSpec predicate;          // Predicate only
    Attributes extra_attributes;

    static QueryNode leaf(PredicateSpec p);
    static QueryNode all_of(std::vector<QueryNode> children);
    static QueryNode any_of(std::vector<QueryNode> children);

    bool is_leaf() const noexcept { return kind == Kind::Predicate; }

    bool operator==(const QueryNode&) const = default;
};

struct QuerySpec {
    QueryId id;
    QueryNode root;
    std::string encoding = "ISO-8859-1";
    Attributes extra_attributes;

    bool operator==(const QuerySpec&) const = default;
};

/// Parses the query XML format. Throws ParseError on malformed XML and
/// ValidationError on structural problems or predicate names the registry
/// does not know. Threshold and parameter checks are left to validate().
QuerySpec parse_query(std::string_view xml, const PredicateRegistry& registry);

/// Canonical form: two-space indentation, one element per line.
std::string serialize_query(const QuerySpec& spec);

struct ValidationFinding {
    std::string path;    // e.g. "/and/predicate[1]"
    std::string reason;  // e.g. "unknown predicate"
    std::string predicate;

    bool operator==(const ValidationFinding&) const = default;
};

std::vector<ValidationFinding> validate(const QuerySpec& spec, const PredicateRegistry& registry);

/// Leaves of a root-level AND (or a lone predicate) in document order;
/// nullopt for any other shape.
std::optional<std::vector<PredicateSpec>> conjunctive_pipeline(const QuerySpec& spec);

/// All leaves in document order.
std::vector<PredicateSpec> leaves(const QueryNode& root);

}  // namespace theia
