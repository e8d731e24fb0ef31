#include <doctest.h>

#include <fstream>
#include <sstream>

#include "theia/error.hpp"
#include "theia/gate.hpp"

using namespace theia;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const PredicateRegistry& reg() { return PredicateRegistry::builtin(); }

PredicateSpec& first_leaf(QuerySpec& q) { return q.root.is_leaf() ? q.root.predicate : q.root.children[0].predicate; }

}  // namespace

TEST_CASE("face query fixture parses") {
    const QuerySpec q = parse_query(slurp(THEIA_TEST_DATA "/face_query.xml"), reg());
    CHECK(q.id.value == 848753739u);
    REQUIRE(q.root.kind == QueryNode::Kind::And);
    REQUIRE(q.root.children.size() == 1);
    const PredicateSpec& p = q.root.children[0].predicate;
    CHECK(p.name == "Face (front)");
    CHECK(p.threshold == 1.0);
    CHECK(p.parameters.size() == 6);
    CHECK(p.arguments.has_value());
    CHECK(q.encoding == "ISO-8859-1");
}

TEST_CASE("minimal all-accept query") {
    const QuerySpec q = parse_query(
        R"(<query id="0"><and number_of_predicates="1"><predicate name="All_Accept"><threshold value="0"/></predicate></and></query>)",
        reg());
    const auto pipeline = conjunctive_pipeline(q);
    REQUIRE(pipeline);
    REQUIRE(pipeline->size() == 1);
    CHECK((*pipeline)[0].name == "All_Accept");
}

TEST_CASE("round trip") {
    for (const QuerySpec& q : {query_1(), query_2(), query_3(), all_accept_query(), cloudy_sky_query(), query_1_analog()}) {
        const std::string xml = serialize_query(q);
        const QuerySpec back = parse_query(xml, reg());
        CHECK(back == parse_query(serialize_query(back), reg()));
        CHECK(serialize_query(back) == xml);
    }
    const std::string fig = slurp(THEIA_TEST_DATA "/face_query.xml");
    const QuerySpec q = parse_query(fig, reg());
    CHECK(parse_query(serialize_query(q), reg()) == q);
}

TEST_CASE("query 1 structure") {
    const auto pipeline = conjunctive_pipeline(query_1());
    REQUIRE(pipeline);
    REQUIRE(pipeline->size() == 3);
    CHECK((*pipeline)[0].name == "Face (front)");
    CHECK((*pipeline)[1].name == "Texture");
    CHECK((*pipeline)[2].name == "RGB Threshold");
    CHECK(validate(query_1(), reg()).empty());
}

TEST_CASE("parse errors carry a position") {
    try {
        parse_query("<query id=\"1\">\n  <and>\n</query>", reg());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() >= 1);
        CHECK(e.column() >= 1);
    }
}

TEST_CASE("structural validation errors") {
    CHECK_THROWS_AS(parse_query(R"(<query id="1"><and number_of_predicates="1"><predicate name="NoSuchPredicate"/></and></query>)",
                                reg()),
                    ValidationError);
    CHECK_THROWS_AS(
        parse_query(R"(<query id="1"><and number_of_predicates="2"><predicate name="All_Accept"/></and></query>)", reg()),
        ValidationError);
}

TEST_CASE("validate findings") {
    QuerySpec q = query_3();
    first_leaf(q).name = "NoSuchPredicate";
    auto f = validate(q, reg());
    REQUIRE(f.size() == 1);
    CHECK(f[0].reason == "unknown predicate");

    QuerySpec t = cloudy_sky_query();
    t.root.children[1].predicate.threshold = 2.0;
    f = validate(t, reg());
    REQUIRE(f.size() == 1);
    CHECK(f[0].reason == "threshold out of range");
    CHECK(f[0].predicate == "Texture");
}

TEST_CASE("conjunctive pipeline shapes") {
    CHECK(conjunctive_pipeline(query_3())->size() == 1);
    QuerySpec q = query_2();
    q.root.kind = QueryNode::Kind::Or;
    CHECK_FALSE(conjunctive_pipeline(q).has_value());
}

TEST_CASE("evaluation is independent of leaf order") {
    const Photo blue = Photo::uniform("x", 16, 16, {20, 40, 250});
    const Photo red = Photo::uniform("y", 16, 16, {250, 40, 20});
    QuerySpec q = cloudy_sky_query();
    QuerySpec r = q;
    std::swap(r.root.children[0], r.root.children[1]);
    for (const Photo* p : {&blue, &red}) {
        CHECK(evaluate_query(q.root, *p, reg()).accepted == evaluate_query(r.root, *p, reg()).accepted);
        CHECK(evaluate_query(q.root, *p, reg()).accepted == evaluate_query(q.root, *p, reg()).accepted);
    }
}
