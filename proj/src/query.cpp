#include "theia/query.hpp"

#include <algorithm>
#include <boost/property_tree/detail/rapidxml.hpp>
#include <cctype>
#include <charconv>
#include <cstring>

#include "theia/error.hpp"
#include "theia/predicates.hpp"

namespace theia {

namespace rx = boost::property_tree::detail::rapidxml;

std::optional<double> PredicateSpec::number(std::size_t i) const {
    if (i >= parameters.size()) return std::nullopt;
    const std::string& s = parameters[i];
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

QueryNode QueryNode::leaf(PredicateSpec p) {
    QueryNode n;
    n.kind = Kind::Predicate;
    n.predicate = std::move(p);
    return n;
}

QueryNode QueryNode::all_of(std::vector<QueryNode> children) {
    QueryNode n;
    n.kind = Kind::And;
    n.children = std::move(children);
    return n;
}

QueryNode QueryNode::any_of(std::vector<QueryNode> children) {
    QueryNode n;
    n.kind = Kind::Or;
    n.children = std::move(children);
    return n;
}

namespace {

bool is_latin1(std::string_view encoding) {
    std::string e(encoding);
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == "iso-8859-1" || e == "latin1" || e == "latin-1" || e == "iso8859-1";
}

std::string latin1_to_utf8(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    for (unsigned char c : in) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

// Decodes one UTF-8 sequence starting at s[i]; advances i. Invalid bytes map to themselves.
std::uint32_t next_codepoint(std::string_view s, std::size_t& i) {
    const unsigned char c = s[i++];
    if (c < 0x80) return c;
    int extra = (c >> 5) == 0x6 ? 1 : (c >> 4) == 0xE ? 2 : (c >> 3) == 0x1E ? 3 : 0;
    if (extra == 0 || i + extra > s.size()) return c;
    std::uint32_t cp = c & (0x3F >> extra);
    for (int k = 0; k < extra; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
    return cp;
}

class Builder {
public:
    explicit Builder(bool latin1) : latin1_(latin1) {}

    std::string text(const char* p, std::size_t n) const {
        std::string_view v(p, n);
        return latin1_ ? latin1_to_utf8(v) : std::string(v);
    }

    std::string name_of(const rx::xml_base<char>* node) const { return std::string(node->name(), node->name_size()); }

    Attributes attributes(const rx::xml_node<char>* node, std::initializer_list<std::string_view> skip = {}) const {
        Attributes out;
        for (auto* a = node->first_attribute(); a; a = a->next_attribute()) {
            std::string key = name_of(a);
            if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
            out.emplace_back(std::move(key), text(a->value(), a->value_size()));
        }
        return out;
    }

    std::optional<std::string> attribute(const rx::xml_node<char>* node, const char* key) const {
        auto* a = node->first_attribute(key);
        if (!a) return std::nullopt;
        return text(a->value(), a->value_size());
    }

    QueryNode node(const rx::xml_node<char>* el, const std::string& path) const {
        const std::string tag = name_of(el);
        if (tag == "and" || tag == "or") {
            QueryNode n;
            n.kind = tag == "and" ? QueryNode::Kind::And : QueryNode::Kind::Or;
            n.extra_attributes = attributes(el, {"number_of_predicates"});
            std::size_t idx = 0;
            for (auto* c = el->first_node(); c; c = c->next_sibling()) {
                if (c->type() != rx::node_element) continue;
                n.children.push_back(node(c, path + "/" + name_of(c) + "[" + std::to_string(idx++) + "]"));
            }
            if (auto declared = attribute(el, "number_of_predicates")) {
                if (parse_count(*declared, path + " number_of_predicates") != n.children.size())
                    throw ValidationError(path + ": number_of_predicates=" + *declared + " but " +
                                          std::to_string(n.children.size()) + " children present");
            }
            if (n.children.empty()) throw ValidationError(path + ": empty <" + tag + ">");
            return n;
        }
        if (tag == "predicate") return QueryNode::leaf(predicate(el, path));
        throw ValidationError(path + ": unexpected element <" + tag + ">");
    }

    PredicateSpec predicate(const rx::xml_node<char>* el, const std::string& path) const {
        PredicateSpec p;
        auto name = attribute(el, "name");
        if (!name) throw ValidationError(path + ": predicate without a name");
        p.name = *name;
        p.extra_attributes = attributes(el, {"name"});
        for (auto* c = el->first_node(); c; c = c->next_sibling()) {
            if (c->type() != rx::node_element) continue;
            const std::string tag = name_of(c);
            if (tag == "arguments") {
                p.arguments = attributes(c);
            } else if (tag == "parameters") {
                p.parameters = indexed_list(c, 'p', path + "/parameters");
            } else if (tag == "dependencies") {
                p.dependencies = indexed_list(c, 'd', path + "/dependencies");
            } else if (tag == "threshold") {
                auto v = attribute(c, "value");
                if (!v) throw ValidationError(path + "/threshold: missing value");
                p.threshold = parse_real(*v, path + "/threshold");
            } else {
                throw ValidationError(path + ": unexpected element <" + tag + ">");
            }
        }
        return p;
    }

    // <parameters num="2" p0=".." p1=".."/>
    std::vector<std::string> indexed_list(const rx::xml_node<char>* el, char prefix, const std::string& path) const {
        std::vector<std::pair<std::size_t, std::string>> items;
        for (auto* a = el->first_attribute(); a; a = a->next_attribute()) {
            const std::string key = name_of(a);
            if (key == "num") continue;
            if (key.size() < 2 || key[0] != prefix)
                throw ValidationError(path + ": unexpected attribute " + key);
            items.emplace_back(parse_count(key.substr(1), path + " " + key), text(a->value(), a->value_size()));
        }
        std::sort(items.begin(), items.end());
        std::vector<std::string> out;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].first != i) throw ValidationError(path + ": indices must be contiguous from 0");
            out.push_back(items[i].second);
        }
        if (auto num = attribute(el, "num"); num && parse_count(*num, path + " num") != out.size())
            throw ValidationError(path + ": num=" + *num + " but " + std::to_string(out.size()) + " entries present");
        return out;
    }

    static std::size_t parse_count(const std::string& s, const std::string& what) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError(what + ": not a count: " + s);
        return v;
    }

    static double parse_real(const std::string& s, const std::string& what) {
        double v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError(what + ": not a number: " + s);
        return v;
    }

private:
    bool latin1_;
};

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

void collect_unknown(const QueryNode& n, const PredicateRegistry& registry, std::vector<std::string>& out) {
    if (n.is_leaf()) {
        if (!registry.contains(n.predicate.name)) out.push_back(n.predicate.name);
        return;
    }
    for (const auto& c : n.children) collect_unknown(c, registry, out);
}

}  // namespace

QuerySpec parse_query(std::string_view xml, const PredicateRegistry& registry) {
    std::vector<char> buffer(xml.begin(), xml.end());
    buffer.push_back('\0');
    rx::xml_document<char> doc;
    constexpr int flags = rx::parse_declaration_node | rx::parse_validate_closing_tags;
    try {
        doc.parse<flags>(buffer.data());
    } catch (const rx::parse_error& e) {
        const auto* where = e.where<char>();
        const std::size_t offset = where ? static_cast<std::size_t>(where - buffer.data()) : 0;
        auto [line, col] = line_column(xml, offset);
        throw ParseError(std::string("malformed XML: ") + e.what(), line, col);
    }

    QuerySpec spec;
    spec.encoding = "UTF-8";
    bool latin1 = false;
    if (auto* decl = doc.first_node(); decl && decl->type() == rx::node_declaration) {
        if (auto* enc = decl->first_attribute("encoding")) {
            spec.encoding.assign(enc->value(), enc->value_size());
            latin1 = is_latin1(spec.encoding);
        }
    }

    Builder b(latin1);
    const rx::xml_node<char>* root = nullptr;
    for (auto* n = doc.first_node(); n; n = n->next_sibling())
        if (n->type() == rx::node_element) {
            if (root) throw ValidationError("more than one root element");
            root = n;
        }
    if (!root || b.name_of(root) != "query") throw ValidationError("root element must be <query>");

    auto id = b.attribute(root, "id");
    if (!id) throw ValidationError("<query> without an id");
    {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(id->data(), id->data() + id->size(), v);
        if (ec != std::errc{} || p != id->data() + id->size())
            throw ValidationError("query id must be a non-negative integer: " + *id);
        spec.id = QueryId{v};
    }
    spec.extra_attributes = b.attributes(root, {"id"});

    const rx::xml_node<char>* body = nullptr;
    for (auto* c = root->first_node(); c; c = c->next_sibling()) {
        if (c->type() != rx::node_element) continue;
        if (body) throw ValidationError("<query> must hold exactly one expression");
        body = c;
    }
    if (!body) throw ValidationError("<query> holds no expression");
    spec.root = b.node(body, "/" + b.name_of(body));

    std::vector<std::string> unknown;
    collect_unknown(spec.root, registry, unknown);
    if (!unknown.empty()) throw ValidationError("unknown predicate: " + unknown.front());
    return spec;
}

namespace {

class Writer {
public:
    explicit Writer(bool latin1) : latin1_(latin1) {}

    std::string escape(std::string_view s) const {
        std::string out;
        for (std::size_t i = 0; i < s.size();) {
            const unsigned char c = s[i];
            if (c < 0x80) {
                ++i;
                switch (c) {
                    case '&': out += "&amp;"; break;
                    case '<': out += "&lt;"; break;
                    case '>': out += "&gt;"; break;
                    case '"': out += "&quot;"; break;
                    default: out.push_back(static_cast<char>(c));
                }
                continue;
            }
            const std::size_t start = i;
            const std::uint32_t cp = next_codepoint(s, i);
            if (!latin1_) {
                out.append(s.substr(start, i - start));
            } else if (cp <= 0xFF) {
                out.push_back(static_cast<char>(cp));
            } else {
                out += "&#" + std::to_string(cp) + ";";
            }
        }
        return out;
    }

    std::string attrs(const Attributes& a) const {
        std::string out;
        for (const auto& [k, v] : a) out += " " + k + "=\"" + escape(v) + "\"";
        return out;
    }

    static std::string real(double v) {
        char buf[64];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, p);
    }

    void node(const QueryNode& n, int depth, std::string& out) const {
        const std::string pad(2 * depth, ' ');
        if (n.is_leaf()) {
            const auto& p = n.predicate;
            const std::string inner(2 * (depth + 1), ' ');
            out += pad + "<predicate name=\"" + escape(p.name) + "\"" + attrs(p.extra_attributes) + ">\n";
            if (p.arguments) out += inner + "<arguments" + attrs(*p.arguments) + "/>\n";
            out += inner + "<parameters num=\"" + std::to_string(p.parameters.size()) + "\"" + list(p.parameters, 'p') + "/>\n";
            out += inner + "<dependencies num=\"" + std::to_string(p.dependencies.size()) + "\"" +
                   list(p.dependencies, 'd') + "/>\n";
            out += inner + "<threshold value=\"" + real(p.threshold) + "\"/>\n";
            out += pad + "</predicate>\n";
            return;
        }
        const char* tag = n.kind == QueryNode::Kind::And ? "and" : "or";
        out += pad + "<" + tag + " number_of_predicates=\"" + std::to_string(n.children.size()) + "\"" +
               attrs(n.extra_attributes) + ">\n";
        for (const auto& c : n.children) node(c, depth + 1, out);
        out += pad + "</" + tag + ">\n";
    }

    std::string list(const std::vector<std::string>& items, char prefix) const {
        std::string out;
        for (std::size_t i = 0; i < items.size(); ++i)
            out += " " + std::string(1, prefix) + std::to_string(i) + "=\"" + escape(items[i]) + "\"";
        return out;
    }

private:
    bool latin1_;
};

void validate_node(const QueryNode& n, const std::string& path, const PredicateRegistry& registry,
                   std::vector<ValidationFinding>& out) {
    if (!n.is_leaf()) {
        if (n.children.empty()) out.push_back({path, "empty combinator", ""});
        std::size_t i = 0;
        for (const auto& c : n.children) {
            const char* tag = c.kind == QueryNode::Kind::And ? "and" : c.kind == QueryNode::Kind::Or ? "or" : "predicate";
            validate_node(c, path + "/" + tag + "[" + std::to_string(i++) + "]", registry, out);
        }
        return;
    }
    const auto& p = n.predicate;
    const PredicateInfo* info = registry.find(p.name);
    if (!info) {
        out.push_back({path, "unknown predicate", p.name});
        return;
    }
    if (p.parameters.size() < info->min_parameters || p.parameters.size() > info->max_parameters)
        out.push_back({path, "wrong parameter count", p.name});
    else if (info->check_parameters)
        if (auto problem = info->check_parameters(p)) out.push_back({path, *problem, p.name});
    if (!(p.threshold >= info->score_min && p.threshold <= info->score_max))
        out.push_back({path, "threshold out of range", p.name});
}

void collect_leaves(const QueryNode& n, std::vector<PredicateSpec>& out) {
    if (n.is_leaf()) {
        out.push_back(n.predicate);
        return;
    }
    for (const auto& c : n.children) collect_leaves(c, out);
}

}  // namespace

std::string serialize_query(const QuerySpec& spec) {
    Writer w(is_latin1(spec.encoding));
    std::string out = "<?xml version=\"1.0\" encoding=\"" + spec.encoding + "\"?>\n";
    out += "<query id=\"" + std::to_string(spec.id.value) + "\"" + w.attrs(spec.extra_attributes) + ">\n";
    w.node(spec.root, 1, out);
    out += "</query>\n";
    return out;
}

std::vector<ValidationFinding> validate(const QuerySpec& spec, const PredicateRegistry& registry) {
    std::vector<ValidationFinding> out;
    const char* tag = spec.root.kind == QueryNode::Kind::And  ? "and"
                      : spec.root.kind == QueryNode::Kind::Or ? "or"
                                                              : "predicate";
    validate_node(spec.root, std::string("/") + tag, registry, out);
    return out;
}

std::optional<std::vector<PredicateSpec>> conjunctive_pipeline(const QuerySpec& spec) {
    if (spec.root.is_leaf()) return std::vector<PredicateSpec>{spec.root.predicate};
    if (spec.root.kind != QueryNode::Kind::And) return std::nullopt;
    std::vector<PredicateSpec> out;
    for (const auto& c : spec.root.children) {
        if (!c.is_leaf()) return std::nullopt;
        out.push_back(c.predicate);
    }
    return out;
}

std::vector<PredicateSpec> leaves(const QueryNode& root) {
    std::vector<PredicateSpec> out;
    collect_leaves(root, out);
    return out;
}

}  // namespace theia
