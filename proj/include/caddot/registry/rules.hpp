#pragma once

// Context reasoner: a prioritized rule table evaluated over context facts,
// layered on a default strategy derived from the sensor profile. Rule table
// file format: ordered JSON list of {id, priority, when, set}. A rule matches
// when every `when` fact equals the supplied fact; matching rules apply in
// ascending priority (file order breaks ties), so the highest priority wins
// on conflicting fields.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "caddot/registry/types.hpp"

namespace caddot::registry {

using Facts = std::map<std::string, std::string>;

struct ContextRule {
    std::string id;
    int priority = 0;
    std::map<std::string, std::string> when;
    std::map<std::string, std::string> set;
};

struct StrategyDefaults {
    long commfreq_factor = 6;  // commfreq = factor x sampling unless a rule pins it
    AcqResponsibility acq_resp = AcqResponsibility::push;
    AcqFrequency acq_freq = AcqFrequency::interval;
    SensingMode mode = SensingMode::active;
    std::string schedule = "MO-SU:00:00-24:00";
};

inline StrategyDefaults defaults_from_json(const Json& j) {
    StrategyDefaults d;
    d.commfreq_factor = j.value("commfreq_factor", 6L);
    if (d.commfreq_factor < 1) throw ValidationError("commfreq_factor must be >= 1");
    if (j.contains("acq_resp")) {
        d.acq_resp = j.at("acq_resp").get<std::string>() == "pull" ? AcqResponsibility::pull
                                                                   : AcqResponsibility::push;
    }
    if (j.contains("acq_freq")) {
        d.acq_freq = j.at("acq_freq").get<std::string>() == "instant" ? AcqFrequency::instant
                                                                      : AcqFrequency::interval;
    }
    if (j.contains("mode")) {
        d.mode = j.at("mode").get<std::string>() == "sleep" ? SensingMode::sleep : SensingMode::active;
    }
    if (j.contains("schedule")) d.schedule = j.at("schedule").get<std::string>();
    if (!valid_schedule(d.schedule)) throw ValidationError("invalid default schedule");
    return d;
}

namespace detail {

inline const std::set<std::string>& strategy_fields() {
    static const std::set<std::string> fields = {
        "sampling_s", "commfreq_s", "schedule", "acq_resp", "acq_freq", "mode",
    };
    return fields;
}

inline long parse_long(const std::string& s, const std::string& what) {
    try {
        size_t idx = 0;
        long v = std::stol(s, &idx);
        if (idx != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("not an integer for " + what + ": '" + s + "'");
    }
}

} // namespace detail

inline std::vector<ContextRule> rules_from_json(const Json& j) {
    if (!j.is_array()) throw ValidationError("rule table must be a JSON array");
    std::vector<ContextRule> rules;
    for (const auto& rj : j) {
        ContextRule r;
        r.id = rj.at("id").get<std::string>();
        r.priority = rj.at("priority").get<int>();
        if (rj.contains("when")) {
            for (const auto& [k, v] : rj.at("when").items()) {
                r.when[k] = v.get<std::string>();
            }
        }
        for (const auto& [k, v] : rj.at("set").items()) {
            if (!detail::strategy_fields().contains(k)) {
                throw ValidationError("rule '" + r.id + "' sets unknown field '" + k + "'");
            }
            r.set[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        rules.push_back(std::move(r));
    }
    return rules;
}

inline Json to_json(const ContextRule& r) {
    Json when = Json::object();
    for (const auto& [k, v] : r.when) when[k] = v;
    Json set = Json::object();
    for (const auto& [k, v] : r.set) set[k] = v;
    return Json{{"id", r.id}, {"priority", r.priority}, {"when", when}, {"set", set}};
}

// Derives the sensing strategy for a profile under the given facts. The
// `phenomenon` fact defaults to the profile's first capability. Credentials
// are not filled here. Throws StrategyInfeasible when rule effects force the
// strategy outside the profile's supported ranges.
inline SensingStrategy reason(const SensorProfile& profile, const Facts& supplied_facts,
                              const std::vector<ContextRule>& rules,
                              const StrategyDefaults& defaults) {
    Facts facts = supplied_facts;
    if (!facts.contains("phenomenon") && !profile.capabilities.empty()) {
        facts["phenomenon"] = profile.capabilities.front().phenomenon;
    }

    SensingStrategy s;
    s.sampling_s = std::clamp((profile.sampling.min_s + profile.sampling.max_s) / 2,
                              profile.sampling.min_s, profile.sampling.max_s);
    s.schedule = defaults.schedule;
    s.acq_resp = defaults.acq_resp;
    s.acq_freq = defaults.acq_freq;
    s.mode = defaults.mode;

    std::vector<const ContextRule*> matching;
    for (const auto& r : rules) {
        bool ok = true;
        for (const auto& [k, v] : r.when) {
            auto it = facts.find(k);
            if (it == facts.end() || it->second != v) {
                ok = false;
                break;
            }
        }
        if (ok) matching.push_back(&r);
    }
    std::stable_sort(matching.begin(), matching.end(),
                     [](const ContextRule* a, const ContextRule* b) { return a->priority < b->priority; });

    bool commfreq_pinned = false;
    for (const auto* r : matching) {
        for (const auto& [field, value] : r->set) {
            if (field == "sampling_s") {
                s.sampling_s = detail::parse_long(value, "sampling_s");
            } else if (field == "commfreq_s") {
                s.commfreq_s = detail::parse_long(value, "commfreq_s");
                commfreq_pinned = true;
            } else if (field == "schedule") {
                if (!valid_schedule(value)) {
                    throw ValidationError("rule '" + r->id + "' sets invalid schedule");
                }
                s.schedule = value;
            } else if (field == "mode") {
                s.mode = value == "sleep" ? SensingMode::sleep : SensingMode::active;
            } else if (field == "acq_resp") {
                s.acq_resp = value == "pull" ? AcqResponsibility::pull : AcqResponsibility::push;
            } else if (field == "acq_freq") {
                s.acq_freq = value == "instant" ? AcqFrequency::instant : AcqFrequency::interval;
            }
        }
    }

    if (!commfreq_pinned) s.commfreq_s = defaults.commfreq_factor * s.sampling_s;

    if (s.mode == SensingMode::active &&
        (s.sampling_s < profile.sampling.min_s || s.sampling_s > profile.sampling.max_s)) {
        throw StrategyInfeasible("sampling " + std::to_string(s.sampling_s) + "s outside [" +
                                 std::to_string(profile.sampling.min_s) + "," +
                                 std::to_string(profile.sampling.max_s) + "]");
    }
    if (s.commfreq_s < s.sampling_s) {
        throw StrategyInfeasible("communication frequency " + std::to_string(s.commfreq_s) +
                                 "s faster than sampling " + std::to_string(s.sampling_s) + "s");
    }
    return s;
}

// Completes companion-availability facts from the set of phenomena visible in
// live registrations: every companion_<x> key referenced by the rule table is
// filled with present/absent unless the caller supplied it.
inline Facts complete_companion_facts(Facts facts, const std::set<std::string>& live_phenomena,
                                      const std::vector<ContextRule>& rules) {
    for (const auto& r : rules) {
        for (const auto& [k, v] : r.when) {
            if (k.rfind("companion_", 0) != 0 || facts.contains(k)) continue;
            facts[k] = live_phenomena.contains(k.substr(10)) ? "present" : "absent";
        }
    }
    return facts;
}

} // namespace caddot::registry
