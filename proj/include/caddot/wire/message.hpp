#pragma once

// Line-oriented message grammar shared by the gateway and sensors:
//
//   VERB|key=value|key=value\n
//
// Verbs are uppercase tokens, keys lowercase tokens, values UTF-8 with
// `|`, `=`, `%` and newline percent-escaped (%7C %3D %25 %0A). A frame,
// including the trailing newline, never exceeds 4096 bytes.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "caddot/util.hpp"

namespace caddot::wire {

inline constexpr size_t kMaxFrameBytes = 4096;

class WireError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EncodeError : public WireError {
public:
    enum class Kind { invalid_verb, invalid_key, duplicate_key, unescapable_value, oversize };
    EncodeError(Kind k, size_t position, const std::string& what)
        : WireError("encode error at " + std::to_string(position) + ": " + what),
          kind(k), position(position) {}
    Kind kind;
    size_t position;
};

class DecodeError : public WireError {
public:
    enum class Kind { malformed, duplicate_key, oversize };
    DecodeError(Kind k, size_t position, const std::string& what)
        : WireError("decode error at " + std::to_string(position) + ": " + what),
          kind(k), position(position) {}
    Kind kind;
    size_t position;
};

struct Message {
    std::string verb;
    std::vector<std::pair<std::string, std::string>> args;  // ordered

    Message() = default;
    explicit Message(std::string v) : verb(std::move(v)) {}
    Message(std::string v, std::vector<std::pair<std::string, std::string>> a)
        : verb(std::move(v)), args(std::move(a)) {}

    const std::string* find(std::string_view key) const {
        for (const auto& [k, v] : args) {
            if (k == key) return &v;
        }
        return nullptr;
    }
    bool has(std::string_view key) const { return find(key) != nullptr; }
    std::string get_or(std::string_view key, std::string fallback = {}) const {
        const auto* v = find(key);
        return v ? *v : std::move(fallback);
    }
    Message& arg(std::string key, std::string value) {
        args.emplace_back(std::move(key), std::move(value));
        return *this;
    }

    bool operator==(const Message&) const = default;
};

namespace detail {

inline bool valid_verb(std::string_view v) {
    if (v.empty() || v.size() > 16) return false;
    if (v[0] < 'A' || v[0] > 'Z') return false;
    return std::all_of(v.begin(), v.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

inline bool valid_key(std::string_view k) {
    if (k.empty()) return false;
    if (k[0] < 'a' || k[0] > 'z') return false;
    return std::all_of(k.begin(), k.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

inline bool needs_escape(char c) {
    return c == '|' || c == '\n' || c == '%' || c == '=';
}

inline void append_escaped(std::string& out, std::string_view value) {
    static const char* digits = "0123456789ABCDEF";
    for (char c : value) {
        if (needs_escape(c)) {
            out.push_back('%');
            out.push_back(digits[static_cast<unsigned char>(c) >> 4]);
            out.push_back(digits[static_cast<unsigned char>(c) & 0x0f]);
        } else {
            out.push_back(c);
        }
    }
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace detail

inline std::string encode(const Message& msg) {
    if (!detail::valid_verb(msg.verb)) {
        throw EncodeError(EncodeError::Kind::invalid_verb, 0, "invalid verb '" + msg.verb + "'");
    }
    std::string out = msg.verb;
    for (size_t i = 0; i < msg.args.size(); ++i) {
        const auto& [key, value] = msg.args[i];
        if (!detail::valid_key(key)) {
            throw EncodeError(EncodeError::Kind::invalid_key, out.size(), "invalid key '" + key + "'");
        }
        for (size_t j = 0; j < i; ++j) {
            if (msg.args[j].first == key) {
                throw EncodeError(EncodeError::Kind::duplicate_key, out.size(), "duplicate key '" + key + "'");
            }
        }
        if (auto bad = utf8_violation(value)) {
            throw EncodeError(EncodeError::Kind::unescapable_value, out.size() + key.size() + 2 + *bad,
                              "value for '" + key + "' has unescapable byte");
        }
        out.push_back('|');
        out += key;
        out.push_back('=');
        detail::append_escaped(out, value);
    }
    out.push_back('\n');
    if (out.size() > kMaxFrameBytes) {
        throw EncodeError(EncodeError::Kind::oversize, kMaxFrameBytes, "frame exceeds 4096 bytes");
    }
    return out;
}

// Decodes one newline-terminated frame. Inverse of encode on canonical
// frames; raw `=`/`%` inside values and malformed escapes are rejected.
inline Message decode(std::string_view frame) {
    if (frame.size() > kMaxFrameBytes) {
        throw DecodeError(DecodeError::Kind::oversize, kMaxFrameBytes, "frame exceeds 4096 bytes");
    }
    if (frame.empty() || frame.back() != '\n') {
        throw DecodeError(DecodeError::Kind::malformed, frame.size(), "missing newline terminator");
    }
    std::string_view body = frame.substr(0, frame.size() - 1);
    if (body.find('\n') != std::string_view::npos) {
        throw DecodeError(DecodeError::Kind::malformed, body.find('\n'), "embedded newline");
    }

    Message msg;
    size_t pos = 0;
    auto next_field = [&]() -> std::pair<std::string_view, size_t> {
        auto bar = body.find('|', pos);
        auto end = (bar == std::string_view::npos) ? body.size() : bar;
        auto field = body.substr(pos, end - pos);
        auto start = pos;
        pos = (bar == std::string_view::npos) ? body.size() + 1 : bar + 1;
        return {field, start};
    };

    auto [verb, verb_at] = next_field();
    if (!detail::valid_verb(verb)) {
        throw DecodeError(DecodeError::Kind::malformed, verb_at, "invalid verb");
    }
    msg.verb = std::string(verb);

    while (pos <= body.size()) {
        auto [field, at] = next_field();
        auto eq = field.find('=');
        if (eq == std::string_view::npos) {
            throw DecodeError(DecodeError::Kind::malformed, at, "field without '='");
        }
        auto key = field.substr(0, eq);
        if (!detail::valid_key(key)) {
            throw DecodeError(DecodeError::Kind::malformed, at, "invalid key");
        }
        if (msg.has(key)) {
            throw DecodeError(DecodeError::Kind::duplicate_key, at, "duplicate key '" + std::string(key) + "'");
        }
        auto raw = field.substr(eq + 1);
        std::string value;
        value.reserve(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (c == '=') {
                throw DecodeError(DecodeError::Kind::malformed, at + eq + 1 + i, "unescaped '=' in value");
            }
            if (c == '%') {
                if (i + 2 >= raw.size()) {
                    throw DecodeError(DecodeError::Kind::malformed, at + eq + 1 + i, "truncated escape");
                }
                int hi = detail::hex_nibble(raw[i + 1]);
                int lo = detail::hex_nibble(raw[i + 2]);
                if (hi < 0 || lo < 0) {
                    throw DecodeError(DecodeError::Kind::malformed, at + eq + 1 + i, "bad escape digits");
                }
                value.push_back(static_cast<char>((hi << 4) | lo));
                i += 2;
            } else {
                value.push_back(c);
            }
        }
        if (auto bad = utf8_violation(value)) {
            throw DecodeError(DecodeError::Kind::malformed, at + eq + 1 + *bad, "value is not valid UTF-8");
        }
        msg.args.emplace_back(std::string(key), std::move(value));
    }
    return msg;
}

} // namespace caddot::wire
