#pragma once

// Declarative protocol-adapter descriptors. A descriptor binds the seven
// canonical configuration operations to one sensor model's wire dialect as a
// list of send/expect steps, and is what the registry stores and the gateway
// downloads. Document format (UTF-8 text):
//
//   id = "libelium.wasptemp3.v1"
//   model = "WaspTemp3"            # "*" matches any model of the manufacturer
//   manufacturer = "libelium"
//   schema = 1
//
//   [seq.handshake]
//   step = { send = "HELLO|lang=wt3", expect = "OLLEH|lang=wt3" }
//
//   [seq.retrieve_profile]
//   step = { send = "GETPROF", expect = "PROF|caps=${caps}|smin=${smin}|smax=${smax}|sched=${sched}" }
//   ...
//
// Send values may embed ${name} placeholders bound from pipeline parameters
// or earlier captures. Expect values are a literal, `*` (any), or `${name}`
// (any, captured under that name); `capture = ["key"]` additionally captures
// a reply arg under its own key. Step fields timeout_ms (default 2000),
// retries (default 1).
//
// Pipeline-supplied parameters per operation:
//   set_sampling: sampling      set_commfreq: commfreq, acq_resp, acq_freq
//   set_schedule: schedule, mode    set_network: host, port, token
//
// Execution order is handshake, retrieve_profile, set_sampling, set_commfreq,
// set_schedule, set_network, finalize; captures flow forward along it.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "caddot/util.hpp"
#include "caddot/wire/message.hpp"

namespace caddot::plugin {

class PluginError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public PluginError {
public:
    ParseError(int line, const std::string& what)
        : PluginError("line " + std::to_string(line) + ": " + what), line(line) {}
    int line;
};

class ValidationError : public PluginError {
public:
    enum class Kind { missing_op, unbound_capture, duplicate_op };
    ValidationError(Kind k, const std::string& what) : PluginError(what), kind(k) {}
    Kind kind;
};

enum class CanonicalOp {
    handshake,
    retrieve_profile,
    set_sampling,
    set_schedule,
    set_commfreq,
    set_network,
    finalize,
};

// In pipeline execution order.
inline constexpr std::array<CanonicalOp, 7> kExecutionOrder = {
    CanonicalOp::handshake,   CanonicalOp::retrieve_profile, CanonicalOp::set_sampling,
    CanonicalOp::set_commfreq, CanonicalOp::set_schedule,    CanonicalOp::set_network,
    CanonicalOp::finalize,
};

inline std::string_view to_string(CanonicalOp op) {
    switch (op) {
        case CanonicalOp::handshake: return "handshake";
        case CanonicalOp::retrieve_profile: return "retrieve_profile";
        case CanonicalOp::set_sampling: return "set_sampling";
        case CanonicalOp::set_schedule: return "set_schedule";
        case CanonicalOp::set_commfreq: return "set_commfreq";
        case CanonicalOp::set_network: return "set_network";
        case CanonicalOp::finalize: return "finalize";
    }
    return "?";
}

inline std::optional<CanonicalOp> op_from_string(std::string_view s) {
    for (auto op : kExecutionOrder) {
        if (to_string(op) == s) return op;
    }
    return std::nullopt;
}

inline const std::set<std::string>& pipeline_params(CanonicalOp op) {
    static const std::set<std::string> none;
    static const std::set<std::string> sampling = {"sampling"};
    static const std::set<std::string> commfreq = {"commfreq", "acq_resp", "acq_freq"};
    static const std::set<std::string> schedule = {"schedule", "mode"};
    static const std::set<std::string> network = {"host", "port", "token"};
    switch (op) {
        case CanonicalOp::set_sampling: return sampling;
        case CanonicalOp::set_commfreq: return commfreq;
        case CanonicalOp::set_schedule: return schedule;
        case CanonicalOp::set_network: return network;
        default: return none;
    }
}

// A send value: literal text with embedded ${name} placeholders.
struct TemplateValue {
    struct Piece {
        bool is_placeholder = false;
        std::string text;
        bool operator==(const Piece&) const = default;
    };
    std::vector<Piece> pieces;

    std::set<std::string> placeholders() const {
        std::set<std::string> out;
        for (const auto& p : pieces) {
            if (p.is_placeholder) out.insert(p.text);
        }
        return out;
    }

    std::string instantiate(const std::map<std::string, std::string>& bindings) const {
        std::string out;
        for (const auto& p : pieces) {
            if (!p.is_placeholder) {
                out += p.text;
                continue;
            }
            auto it = bindings.find(p.text);
            if (it == bindings.end()) {
                throw std::invalid_argument("unbound placeholder '" + p.text + "'");
            }
            out += it->second;
        }
        return out;
    }

    bool operator==(const TemplateValue&) const = default;
};

struct ExpectValue {
    enum class Kind { literal, capture, wildcard };
    Kind kind = Kind::literal;
    std::string text;  // literal text or capture name
    bool operator==(const ExpectValue&) const = default;
};

struct SendTemplate {
    std::string verb;
    std::vector<std::pair<std::string, TemplateValue>> args;
    bool operator==(const SendTemplate&) const = default;
};

struct ExpectPattern {
    std::string verb;
    std::vector<std::pair<std::string, ExpectValue>> args;
    bool operator==(const ExpectPattern&) const = default;
};

struct SequenceStep {
    SendTemplate send;
    ExpectPattern expect;
    Millis timeout{2000};
    int retries = 1;
    std::vector<std::string> captures;  // reply keys captured under their own name
    int line = 0;
};

struct SequenceScript {
    std::vector<SequenceStep> steps;
};

struct PluginDescriptor {
    std::string id;
    std::string model;         // "*" = manufacturer wildcard
    std::string manufacturer;
    int schema = 1;
    std::map<CanonicalOp, SequenceScript> sequences;

    const SequenceScript& script(CanonicalOp op) const { return sequences.at(op); }
};

namespace detail {

inline TemplateValue parse_template_value(std::string_view raw, int line) {
    TemplateValue out;
    std::string lit;
    size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] == '$' && i + 1 < raw.size() && raw[i + 1] == '{') {
            auto end = raw.find('}', i + 2);
            if (end == std::string_view::npos) throw ParseError(line, "unterminated ${...}");
            if (!lit.empty()) {
                out.pieces.push_back({false, lit});
                lit.clear();
            }
            std::string name(raw.substr(i + 2, end - i - 2));
            if (name.empty()) throw ParseError(line, "empty placeholder name");
            out.pieces.push_back({true, name});
            i = end + 1;
        } else {
            lit.push_back(raw[i]);
            ++i;
        }
    }
    if (!lit.empty()) out.pieces.push_back({false, lit});
    return out;
}

inline ExpectValue parse_expect_value(std::string_view raw) {
    if (raw == "*") return {ExpectValue::Kind::wildcard, ""};
    if (raw.size() > 3 && raw.substr(0, 2) == "${" && raw.back() == '}') {
        return {ExpectValue::Kind::capture, std::string(raw.substr(2, raw.size() - 3))};
    }
    return {ExpectValue::Kind::literal, std::string(raw)};
}

// Splits "VERB|k=v|k=v" pattern text (raw, unescaped).
inline std::pair<std::string, std::vector<std::pair<std::string, std::string>>>
split_pattern(std::string_view text, int line) {
    auto fields = split(text, '|');
    if (fields.empty() || !wire::detail::valid_verb(fields[0])) {
        throw ParseError(line, "pattern needs a valid verb: '" + std::string(text) + "'");
    }
    std::vector<std::pair<std::string, std::string>> args;
    for (size_t i = 1; i < fields.size(); ++i) {
        auto eq = fields[i].find('=');
        if (eq == std::string::npos) throw ParseError(line, "pattern field without '='");
        auto key = fields[i].substr(0, eq);
        if (!wire::detail::valid_key(key)) throw ParseError(line, "invalid pattern key '" + key + "'");
        args.emplace_back(key, fields[i].substr(eq + 1));
    }
    return {fields[0], std::move(args)};
}

inline SendTemplate parse_send(std::string_view text, int line) {
    auto [verb, raw_args] = split_pattern(text, line);
    SendTemplate out;
    out.verb = verb;
    for (auto& [k, v] : raw_args) {
        out.args.emplace_back(k, parse_template_value(v, line));
    }
    return out;
}

inline ExpectPattern parse_expect(std::string_view text, int line) {
    auto [verb, raw_args] = split_pattern(text, line);
    ExpectPattern out;
    out.verb = verb;
    for (auto& [k, v] : raw_args) {
        out.args.emplace_back(k, parse_expect_value(v));
    }
    return out;
}

// Minimal value scanner for `key = value` lines and `{ ... }` inline tables.
struct TableValue {
    enum class Kind { string, integer, list } kind = Kind::string;
    std::string str;
    long integer = 0;
    std::vector<std::string> list;
};

class InlineScanner {
public:
    InlineScanner(std::string_view s, int line) : s_(s), line_(line) {}

    std::map<std::string, TableValue> parse_table() {
        skip_ws();
        expect('{');
        std::map<std::string, TableValue> out;
        skip_ws();
        if (peek() == '}') {
            get();
            return out;
        }
        while (true) {
            skip_ws();
            std::string key = ident();
            skip_ws();
            expect('=');
            skip_ws();
            out[key] = value();
            skip_ws();
            char c = get();
            if (c == '}') break;
            if (c != ',') throw ParseError(line_, "expected ',' or '}' in table");
        }
        skip_ws();
        if (pos_ != s_.size()) throw ParseError(line_, "trailing characters after table");
        return out;
    }

    TableValue value() {
        char c = peek();
        if (c == '"') return {TableValue::Kind::string, quoted(), 0, {}};
        if (c == '[') {
            TableValue v;
            v.kind = TableValue::Kind::list;
            get();
            skip_ws();
            if (peek() == ']') {
                get();
                return v;
            }
            while (true) {
                skip_ws();
                v.list.push_back(quoted());
                skip_ws();
                char d = get();
                if (d == ']') break;
                if (d != ',') throw ParseError(line_, "expected ',' or ']' in list");
            }
            return v;
        }
        if (c == '-' || (c >= '0' && c <= '9')) {
            TableValue v;
            v.kind = TableValue::Kind::integer;
            size_t start = pos_;
            if (c == '-') ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            v.integer = std::stol(std::string(s_.substr(start, pos_ - start)));
            return v;
        }
        throw ParseError(line_, "unexpected value");
    }

private:
    char peek() {
        if (pos_ >= s_.size()) throw ParseError(line_, "unexpected end of line");
        return s_[pos_];
    }
    char get() {
        char c = peek();
        ++pos_;
        return c;
    }
    void expect(char c) {
        if (get() != c) throw ParseError(line_, std::string("expected '") + c + "'");
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    std::string ident() {
        size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            ++pos_;
        }
        if (pos_ == start) throw ParseError(line_, "expected identifier");
        return std::string(s_.substr(start, pos_ - start));
    }
    std::string quoted() {
        expect('"');
        std::string out;
        while (true) {
            char c = get();
            if (c == '"') return out;
            if (c == '\\') {
                char e = get();
                if (e == '"' || e == '\\') {
                    out.push_back(e);
                } else {
                    throw ParseError(line_, "unsupported escape in string");
                }
                continue;
            }
            out.push_back(c);
        }
    }

    std::string_view s_;
    size_t pos_ = 0;
    int line_;
};

// Strips a trailing comment that is not inside a double-quoted string.
inline std::string strip_comment(std::string_view line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return std::string(line.substr(0, i));
    }
    return std::string(line);
}

} // namespace detail

inline void validate_descriptor(const PluginDescriptor& d) {
    for (auto op : kExecutionOrder) {
        auto it = d.sequences.find(op);
        if (it == d.sequences.end() || it->second.steps.empty()) {
            throw ValidationError(ValidationError::Kind::missing_op,
                                  "missing sequence for op '" + std::string(to_string(op)) + "'");
        }
    }
    // Captures flow forward along execution order; a send placeholder must be
    // an earlier capture or a pipeline parameter of its own op.
    std::set<std::string> defined;
    for (auto op : kExecutionOrder) {
        const auto& params = pipeline_params(op);
        for (const auto& step : d.sequences.at(op).steps) {
            for (const auto& [key, tmpl] : step.send.args) {
                for (const auto& name : tmpl.placeholders()) {
                    if (!defined.contains(name) && !params.contains(name)) {
                        throw ValidationError(
                            ValidationError::Kind::unbound_capture,
                            "op '" + std::string(to_string(op)) + "' references undefined ${" + name + "}");
                    }
                }
            }
            for (const auto& [key, ev] : step.expect.args) {
                if (ev.kind == ExpectValue::Kind::capture) defined.insert(ev.text);
            }
            for (const auto& name : step.captures) defined.insert(name);
        }
    }
}

inline PluginDescriptor parse_descriptor(std::string_view text) {
    PluginDescriptor d;
    std::optional<CanonicalOp> current_op;
    bool saw_schema = false;

    int line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        std::string line = trim(detail::strip_comment(raw_line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
            std::string section = trim(line.substr(1, line.size() - 2));
            if (section.rfind("seq.", 0) != 0) {
                throw ParseError(line_no, "unknown section '" + section + "'");
            }
            auto op = op_from_string(section.substr(4));
            if (!op) throw ParseError(line_no, "unknown operation '" + section.substr(4) + "'");
            if (d.sequences.contains(*op)) {
                throw ValidationError(ValidationError::Kind::duplicate_op,
                                      "duplicate sequence for op '" + section.substr(4) + "'");
            }
            d.sequences[*op] = {};
            current_op = *op;
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string rest = trim(line.substr(eq + 1));

        if (!current_op) {
            detail::InlineScanner scanner(rest, line_no);
            auto value = scanner.value();
            if (key == "id" || key == "model" || key == "manufacturer") {
                if (value.kind != detail::TableValue::Kind::string) {
                    throw ParseError(line_no, "'" + key + "' must be a string");
                }
                if (key == "id") d.id = value.str;
                else if (key == "model") d.model = value.str;
                else d.manufacturer = value.str;
            } else if (key == "schema") {
                if (value.kind != detail::TableValue::Kind::integer) {
                    throw ParseError(line_no, "'schema' must be an integer");
                }
                if (value.integer != 1) throw ParseError(line_no, "unsupported schema version");
                saw_schema = true;
            } else {
                throw ParseError(line_no, "unknown header key '" + key + "'");
            }
            continue;
        }

        if (key != "step") throw ParseError(line_no, "expected 'step = { ... }' in sequence");
        detail::InlineScanner scanner(rest, line_no);
        auto table = scanner.parse_table();

        SequenceStep step;
        step.line = line_no;
        auto want_string = [&](const char* name) -> std::string {
            auto it = table.find(name);
            if (it == table.end() || it->second.kind != detail::TableValue::Kind::string) {
                throw ParseError(line_no, std::string("step needs string '") + name + "'");
            }
            return it->second.str;
        };
        step.send = detail::parse_send(want_string("send"), line_no);
        step.expect = detail::parse_expect(want_string("expect"), line_no);
        if (auto it = table.find("timeout_ms"); it != table.end()) {
            if (it->second.kind != detail::TableValue::Kind::integer || it->second.integer < 0) {
                throw ParseError(line_no, "timeout_ms must be a non-negative integer");
            }
            step.timeout = Millis{it->second.integer};
        }
        if (auto it = table.find("retries"); it != table.end()) {
            if (it->second.kind != detail::TableValue::Kind::integer || it->second.integer < 0) {
                throw ParseError(line_no, "retries must be a non-negative integer");
            }
            step.retries = static_cast<int>(it->second.integer);
        }
        if (auto it = table.find("capture"); it != table.end()) {
            if (it->second.kind != detail::TableValue::Kind::list) {
                throw ParseError(line_no, "capture must be a list of strings");
            }
            step.captures = it->second.list;
        }
        for (const auto& known : {"send", "expect", "timeout_ms", "retries", "capture"}) {
            table.erase(known);
        }
        if (!table.empty()) {
            throw ParseError(line_no, "unknown step field '" + table.begin()->first + "'");
        }
        d.sequences[*current_op].steps.push_back(std::move(step));
    }

    if (d.id.empty()) throw ParseError(line_no, "missing 'id' header");
    if (d.model.empty()) throw ParseError(line_no, "missing 'model' header");
    if (d.manufacturer.empty()) throw ParseError(line_no, "missing 'manufacturer' header");
    if (!saw_schema) throw ParseError(line_no, "missing 'schema' header");

    validate_descriptor(d);
    return d;
}

} // namespace caddot::plugin
