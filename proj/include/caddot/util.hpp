#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <openssl/rand.h>

namespace caddot {

using Clock = std::chrono::steady_clock;
using Millis = std::chrono::milliseconds;

inline double to_ms(Clock::duration d) {
    return std::chrono::duration<double, std::milli>(d).count();
}

inline std::string hex_encode(const unsigned char* data, size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0x0f]);
    }
    return out;
}

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    return hex_encode(digest, len);
}

// 128-bit single-use token, 32 lowercase hex chars.
inline std::string random_token_hex() {
    unsigned char buf[16];
    if (RAND_bytes(buf, sizeof(buf)) != 1) {
        throw std::runtime_error("random_token_hex: RAND_bytes failed");
    }
    return hex_encode(buf, sizeof(buf));
}

// Validates UTF-8 and rejects NUL bytes. Returns the byte offset of the first
// offending byte, or nullopt when clean.
inline std::optional<size_t> utf8_violation(std::string_view s) {
    size_t i = 0;
    const auto n = s.size();
    while (i < n) {
        const auto b = static_cast<unsigned char>(s[i]);
        if (b == 0x00) return i;
        size_t extra;
        if (b < 0x80) extra = 0;
        else if ((b & 0xe0) == 0xc0 && b >= 0xc2) extra = 1;
        else if ((b & 0xf0) == 0xe0) extra = 2;
        else if ((b & 0xf8) == 0xf0 && b <= 0xf4) extra = 3;
        else return i;
        for (size_t k = 1; k <= extra; ++k) {
            if (i + k >= n || (static_cast<unsigned char>(s[i + k]) & 0xc0) != 0x80) return i;
        }
        i += extra + 1;
    }
    return std::nullopt;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string trim(std::string_view s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

// Filesystem-safe name for arbitrary key strings: [A-Za-z0-9._-] kept,
// everything else %XX-encoded.
inline std::string fs_safe(std::string_view s) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(digits[c >> 4]);
            out.push_back(digits[c & 0x0f]);
        }
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

} // namespace caddot
