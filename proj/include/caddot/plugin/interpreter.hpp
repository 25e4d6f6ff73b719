#pragma once

// Executes sequence scripts against a live session: substitutes placeholders
// into each step's send template, awaits a reply matching the expect pattern,
// and accumulates captures. A reply that fails the pattern signals that the
// sensor's dialect differs from the descriptor.

#include <map>
#include <string>

#include "caddot/plugin/descriptor.hpp"
#include "caddot/wire/transport.hpp"

namespace caddot::plugin {

class StepMismatch : public PluginError {
public:
    StepMismatch(size_t step_index, wire::Message got, const std::string& what)
        : PluginError("step " + std::to_string(step_index) + ": " + what),
          step_index(step_index), got(std::move(got)) {}
    size_t step_index;
    wire::Message got;
};

class StepTimeout : public PluginError {
public:
    explicit StepTimeout(size_t step_index)
        : PluginError("step " + std::to_string(step_index) + ": no reply after retries"),
          step_index(step_index) {}
    size_t step_index;
};

using Bindings = std::map<std::string, std::string>;

namespace detail {

// Matches a reply against the expect pattern; on success merges captured
// values into `captures`. Extra reply args are allowed.
inline bool match_reply(const SequenceStep& step, const wire::Message& reply, Bindings& captures,
                        std::string& why) {
    if (reply.verb != step.expect.verb) {
        why = "expected verb " + step.expect.verb + ", got " + reply.verb;
        return false;
    }
    Bindings staged;
    for (const auto& [key, ev] : step.expect.args) {
        const auto* got = reply.find(key);
        if (got == nullptr) {
            why = "reply missing arg '" + key + "'";
            return false;
        }
        switch (ev.kind) {
            case ExpectValue::Kind::literal:
                if (*got != ev.text) {
                    why = "arg '" + key + "' is '" + *got + "', expected '" + ev.text + "'";
                    return false;
                }
                break;
            case ExpectValue::Kind::capture:
                staged[ev.text] = *got;
                break;
            case ExpectValue::Kind::wildcard:
                break;
        }
    }
    for (const auto& key : step.captures) {
        const auto* got = reply.find(key);
        if (got == nullptr) {
            why = "reply missing captured arg '" + key + "'";
            return false;
        }
        staged[key] = *got;
    }
    for (auto& [k, v] : staged) captures[k] = std::move(v);
    return true;
}

inline wire::Message instantiate_send(const SendTemplate& tmpl, const Bindings& bindings) {
    wire::Message msg(tmpl.verb);
    for (const auto& [key, value] : tmpl.args) {
        msg.arg(key, value.instantiate(bindings));
    }
    return msg;
}

} // namespace detail

// Runs one script; `params` must bind all free placeholders. Returns the
// captures accumulated across steps.
inline Bindings run_sequence(wire::Session& session, const SequenceScript& script,
                             const Bindings& params) {
    Bindings bindings = params;
    Bindings captures;
    for (size_t i = 0; i < script.steps.size(); ++i) {
        const auto& step = script.steps[i];
        wire::Message out = detail::instantiate_send(step.send, bindings);

        wire::Message reply;
        bool got_reply = false;
        for (int attempt = 0; attempt <= step.retries; ++attempt) {
            try {
                reply = session.request(out, step.timeout);
                got_reply = true;
                break;
            } catch (const wire::Timeout&) {
                continue;
            }
        }
        if (!got_reply) throw StepTimeout(i);

        std::string why;
        if (!detail::match_reply(step, reply, captures, why)) {
            throw StepMismatch(i, reply, why);
        }
        for (const auto& [k, v] : captures) bindings[k] = v;
    }
    return captures;
}

} // namespace caddot::plugin
