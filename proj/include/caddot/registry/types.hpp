#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "caddot/identity.hpp"
#include "caddot/util.hpp"

namespace caddot::registry {

using Json = nlohmann::json;

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public RegistryError {
public:
    using RegistryError::RegistryError;
};

class NotFound : public RegistryError {
public:
    using RegistryError::RegistryError;
};

class UnknownUid : public RegistryError {
public:
    using RegistryError::RegistryError;
};

class StrategyInfeasible : public RegistryError {
public:
    using RegistryError::RegistryError;
};

// ---------------------------------------------------------------------------

enum class ValueType { f64, i64, boolean, blob };

inline std::string_view to_string(ValueType t) {
    switch (t) {
        case ValueType::f64: return "float";
        case ValueType::i64: return "int";
        case ValueType::boolean: return "bool";
        case ValueType::blob: return "blob";
    }
    return "?";
}

inline std::optional<ValueType> value_type_from(std::string_view s) {
    if (s == "float") return ValueType::f64;
    if (s == "int") return ValueType::i64;
    if (s == "bool") return ValueType::boolean;
    if (s == "blob") return ValueType::blob;
    return std::nullopt;
}

struct Capability {
    std::string phenomenon;
    std::string unit;
    ValueType value_type = ValueType::f64;
    bool operator==(const Capability&) const = default;
};

struct SamplingRange {
    long min_s = 1;
    long max_s = 3600;
    bool operator==(const SamplingRange&) const = default;
};

struct SensorProfile {
    SensorIdentity identity;
    std::vector<Capability> capabilities;
    SamplingRange sampling;
    bool schedules_supported = true;
    std::vector<std::string> transports;
    std::optional<std::string> epc;
    bool operator==(const SensorProfile&) const = default;
};

inline void validate_profile(const SensorProfile& p) {
    if (!valid_identity(p.identity)) throw ValidationError("invalid identity");
    if (p.capabilities.empty()) throw ValidationError("profile needs at least one capability");
    if (p.sampling.min_s > p.sampling.max_s) throw ValidationError("sampling min exceeds max");
    if (p.sampling.min_s < 0) throw ValidationError("negative sampling interval");
    for (const auto& c : p.capabilities) {
        if (c.phenomenon.empty()) throw ValidationError("capability without phenomenon");
    }
}

struct Credentials {
    std::string host;
    uint16_t port = 0;
    std::string token;
    bool operator==(const Credentials&) const = default;
};

enum class AcqResponsibility { push, pull };
enum class AcqFrequency { instant, interval };
enum class SensingMode { active, sleep };

inline std::string_view to_string(AcqResponsibility v) {
    return v == AcqResponsibility::push ? "push" : "pull";
}
inline std::string_view to_string(AcqFrequency v) {
    return v == AcqFrequency::instant ? "instant" : "interval";
}
inline std::string_view to_string(SensingMode v) {
    return v == SensingMode::active ? "active" : "sleep";
}

struct SensingStrategy {
    long sampling_s = 0;
    std::string schedule;  // weekly windows, e.g. "MO-FR:08:00-17:00"
    long commfreq_s = 0;
    AcqResponsibility acq_resp = AcqResponsibility::push;
    AcqFrequency acq_freq = AcqFrequency::interval;
    SensingMode mode = SensingMode::active;
    Credentials credentials;
    bool operator==(const SensingStrategy&) const = default;
};

enum class RecordStatus { registered, configured, stale };

inline std::string_view to_string(RecordStatus s) {
    switch (s) {
        case RecordStatus::registered: return "registered";
        case RecordStatus::configured: return "configured";
        case RecordStatus::stale: return "stale";
    }
    return "?";
}

struct RegistrationRecord {
    SensorProfile profile;
    long registered_at_ms = 0;  // unix epoch
    RecordStatus status = RecordStatus::registered;
    std::optional<SensingStrategy> strategy;
};

struct CatalogEntry {
    std::string model;
    std::string manufacturer;
    std::string plugin_id;
    std::vector<std::string> capabilities;
};

// ---------------------------------------------------------------------------
// Weekly schedule validation. Grammar: window (";" window)*, window =
// days ":" HH:MM "-" HH:MM, days = element ("," element)*, element = DAY or
// DAY "-" DAY with DAY in MO TU WE TH FR SA SU. End time may be 24:00.

namespace detail {

inline int day_index(std::string_view d) {
    static constexpr std::string_view names[] = {"MO", "TU", "WE", "TH", "FR", "SA", "SU"};
    for (int i = 0; i < 7; ++i) {
        if (names[i] == d) return i;
    }
    return -1;
}

inline std::optional<int> parse_hhmm(std::string_view s) {
    if (s.size() != 5 || s[2] != ':') return std::nullopt;
    if (!std::isdigit((unsigned char)s[0]) || !std::isdigit((unsigned char)s[1]) ||
        !std::isdigit((unsigned char)s[3]) || !std::isdigit((unsigned char)s[4])) {
        return std::nullopt;
    }
    int h = (s[0] - '0') * 10 + (s[1] - '0');
    int m = (s[3] - '0') * 10 + (s[4] - '0');
    if (m > 59) return std::nullopt;
    if (h > 24 || (h == 24 && m != 0)) return std::nullopt;
    return h * 60 + m;
}

} // namespace detail

inline bool valid_schedule(std::string_view schedule) {
    if (schedule.empty()) return false;
    for (const auto& window : split(schedule, ';')) {
        auto colon = window.find(':');
        if (colon == std::string::npos) return false;
        auto days = window.substr(0, colon);
        auto times = window.substr(colon + 1);
        for (const auto& element : split(days, ',')) {
            auto dash = element.find('-');
            if (dash == std::string::npos) {
                if (detail::day_index(element) < 0) return false;
            } else {
                int a = detail::day_index(element.substr(0, dash));
                int b = detail::day_index(element.substr(dash + 1));
                if (a < 0 || b < 0 || a > b) return false;
            }
        }
        auto dash = times.find('-');
        if (dash == std::string::npos) return false;
        auto start = detail::parse_hhmm(trim(times.substr(0, dash)));
        auto end = detail::parse_hhmm(trim(times.substr(dash + 1)));
        if (!start || !end || *start >= *end) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// JSON bindings

inline Json to_json(const Capability& c) {
    return Json{{"phenomenon", c.phenomenon}, {"unit", c.unit}, {"value_type", std::string(to_string(c.value_type))}};
}

inline Capability capability_from_json(const Json& j) {
    Capability c;
    c.phenomenon = j.at("phenomenon").get<std::string>();
    c.unit = j.value("unit", "");
    auto vt = value_type_from(j.value("value_type", "float"));
    if (!vt) throw ValidationError("unknown value_type");
    c.value_type = *vt;
    return c;
}

inline Json to_json(const SensorProfile& p) {
    Json caps = Json::array();
    for (const auto& c : p.capabilities) caps.push_back(to_json(c));
    Json j{{"uid", p.identity.uid},
           {"model", p.identity.model},
           {"manufacturer", p.identity.manufacturer},
           {"capabilities", caps},
           {"sampling", Json{{"min_s", p.sampling.min_s}, {"max_s", p.sampling.max_s}}},
           {"schedules_supported", p.schedules_supported},
           {"transports", p.transports}};
    if (p.epc) j["epc"] = *p.epc;
    return j;
}

inline SensorProfile profile_from_json(const Json& j) {
    SensorProfile p;
    p.identity = {j.at("uid").get<std::string>(), j.at("model").get<std::string>(),
                  j.at("manufacturer").get<std::string>()};
    for (const auto& c : j.at("capabilities")) p.capabilities.push_back(capability_from_json(c));
    p.sampling.min_s = j.at("sampling").at("min_s").get<long>();
    p.sampling.max_s = j.at("sampling").at("max_s").get<long>();
    p.schedules_supported = j.value("schedules_supported", true);
    if (j.contains("transports")) p.transports = j.at("transports").get<std::vector<std::string>>();
    if (j.contains("epc")) p.epc = j.at("epc").get<std::string>();
    return p;
}

inline Json to_json(const Credentials& c) {
    return Json{{"host", c.host}, {"port", c.port}, {"token", c.token}};
}

inline Credentials credentials_from_json(const Json& j) {
    return {j.at("host").get<std::string>(), j.at("port").get<uint16_t>(),
            j.at("token").get<std::string>()};
}

inline Json to_json(const SensingStrategy& s) {
    return Json{{"sampling_s", s.sampling_s},
                {"commfreq_s", s.commfreq_s},
                {"schedule", s.schedule},
                {"acq_resp", std::string(to_string(s.acq_resp))},
                {"acq_freq", std::string(to_string(s.acq_freq))},
                {"mode", std::string(to_string(s.mode))},
                {"credentials", to_json(s.credentials)}};
}

inline SensingStrategy strategy_from_json(const Json& j) {
    SensingStrategy s;
    s.sampling_s = j.at("sampling_s").get<long>();
    s.commfreq_s = j.at("commfreq_s").get<long>();
    s.schedule = j.at("schedule").get<std::string>();
    s.acq_resp = j.at("acq_resp").get<std::string>() == "pull" ? AcqResponsibility::pull
                                                               : AcqResponsibility::push;
    s.acq_freq = j.at("acq_freq").get<std::string>() == "instant" ? AcqFrequency::instant
                                                                  : AcqFrequency::interval;
    s.mode = j.at("mode").get<std::string>() == "sleep" ? SensingMode::sleep : SensingMode::active;
    if (j.contains("credentials")) s.credentials = credentials_from_json(j.at("credentials"));
    return s;
}

inline Json to_json(const RegistrationRecord& r) {
    Json j{{"uid", r.profile.identity.uid},
           {"registered_at_ms", r.registered_at_ms},
           {"status", std::string(to_string(r.status))},
           {"profile", to_json(r.profile)}};
    if (r.strategy) j["strategy"] = to_json(*r.strategy);
    return j;
}

inline RegistrationRecord record_from_json(const Json& j) {
    RegistrationRecord r;
    r.profile = profile_from_json(j.at("profile"));
    r.registered_at_ms = j.at("registered_at_ms").get<long>();
    auto st = j.at("status").get<std::string>();
    r.status = st == "configured" ? RecordStatus::configured
             : st == "stale"      ? RecordStatus::stale
                                  : RecordStatus::registered;
    if (j.contains("strategy")) r.strategy = strategy_from_json(j.at("strategy"));
    return r;
}

inline Json to_json(const CatalogEntry& e) {
    return Json{{"model", e.model},
                {"manufacturer", e.manufacturer},
                {"plugin_id", e.plugin_id},
                {"capabilities", e.capabilities}};
}

inline CatalogEntry catalog_entry_from_json(const Json& j) {
    CatalogEntry e;
    e.model = j.at("model").get<std::string>();
    e.manufacturer = j.at("manufacturer").get<std::string>();
    e.plugin_id = j.at("plugin_id").get<std::string>();
    if (j.contains("capabilities")) {
        e.capabilities = j.at("capabilities").get<std::vector<std::string>>();
    }
    return e;
}

} // namespace caddot::registry
