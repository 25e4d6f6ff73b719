#pragma once

#include <algorithm>
#include <string>
#include <string_view>

namespace caddot {

// The minimal triple a sensor reveals in its IAM reply.
struct SensorIdentity {
    std::string uid;           // 16 lowercase hex chars, unique per fleet
    std::string model;
    std::string manufacturer;

    bool operator==(const SensorIdentity&) const = default;
};

inline bool valid_uid(std::string_view uid) {
    return uid.size() == 16 && std::all_of(uid.begin(), uid.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

inline bool valid_identity(const SensorIdentity& id) {
    return valid_uid(id.uid) && !id.model.empty() && !id.manufacturer.empty();
}

} // namespace caddot
