#pragma once

#include <vector>

#include "caddot/identity.hpp"
#include "caddot/plugin/descriptor.hpp"

namespace caddot::plugin {

// Deterministic plugin selection: exact (model, manufacturer) match wins,
// then a manufacturer wildcard (model = "*"), else none. Pure in the
// installed set; order of `installed` is irrelevant.
inline const PluginDescriptor* match_plugin(const SensorIdentity& identity,
                                            const std::vector<const PluginDescriptor*>& installed) {
    const PluginDescriptor* wildcard = nullptr;
    for (const auto* d : installed) {
        if (d->manufacturer != identity.manufacturer) continue;
        if (d->model == identity.model) return d;
        if (d->model == "*") {
            if (wildcard == nullptr || d->id < wildcard->id) wildcard = d;
        }
    }
    return wildcard;
}

// True when the descriptor's match keys cover the identity.
inline bool matches(const PluginDescriptor& d, const SensorIdentity& identity) {
    return d.manufacturer == identity.manufacturer &&
           (d.model == identity.model || d.model == "*");
}

} // namespace caddot::plugin
