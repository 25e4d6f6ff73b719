#pragma once

// Append-friendly on-disk store: one JSON document per record, no database.
// Catalog entries and plugin documents are ingested from their directories at
// construction; registrations and tokens are written through to the store
// directory as they change. Plugin digests are recorded in a .digest sidecar
// at first ingest, so later on-disk tampering is visible to clients that
// verify the served digest.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caddot/registry/types.hpp"

namespace caddot::registry {

namespace fs = std::filesystem;

inline long unix_ms_now() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

struct PluginDoc {
    std::string bytes;
    std::string digest_hex;  // sha-256 of bytes at ingest time
};

struct TokenRecord {
    std::string token;
    bool used = false;
    long issued_at_ms = 0;
    long joined_at_ms = 0;
};

class Store {
public:
    Store(fs::path catalog_dir, fs::path plugin_dir, fs::path store_dir)
        : catalog_dir_(std::move(catalog_dir)), plugin_dir_(std::move(plugin_dir)),
          store_dir_(std::move(store_dir)) {
        load_catalog();
        load_plugins();
        load_registrations();
        load_tokens();
    }

    // -- catalog ------------------------------------------------------------

    std::optional<CatalogEntry> identify(const std::string& model,
                                         const std::string& manufacturer) const {
        std::lock_guard lk(mutex_);
        auto it = catalog_.find(key_of(model, manufacturer));
        if (it == catalog_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<CatalogEntry> catalog() const {
        std::lock_guard lk(mutex_);
        std::vector<CatalogEntry> out;
        out.reserve(catalog_.size());
        for (const auto& [k, e] : catalog_) out.push_back(e);
        return out;
    }

    // -- plugin documents ----------------------------------------------------

    // Returns the stored bytes as they are on disk right now, paired with the
    // digest recorded at ingest.
    std::optional<PluginDoc> plugin(const std::string& id) const {
        std::lock_guard lk(mutex_);
        auto it = plugins_.find(id);
        if (it == plugins_.end()) return std::nullopt;
        PluginDoc doc = it->second;
        auto path = plugin_dir_ / (fs_safe(id) + ".plugin");
        if (fs::exists(path)) doc.bytes = read_file(path);
        return doc;
    }

    std::vector<std::string> plugin_ids() const {
        std::lock_guard lk(mutex_);
        std::vector<std::string> out;
        for (const auto& [id, doc] : plugins_) out.push_back(id);
        return out;
    }

    // -- registrations -------------------------------------------------------

    RegistrationRecord register_profile(const SensorProfile& profile) {
        validate_profile(profile);
        std::lock_guard lk(mutex_);
        RegistrationRecord rec;
        rec.profile = profile;
        rec.registered_at_ms = unix_ms_now();
        rec.status = RecordStatus::registered;
        registrations_[profile.identity.uid] = rec;
        persist_registration(rec);
        return rec;
    }

    std::optional<RegistrationRecord> record(const std::string& uid) const {
        std::lock_guard lk(mutex_);
        auto it = registrations_.find(uid);
        if (it == registrations_.end()) return std::nullopt;
        return it->second;
    }

    void assign_strategy(const std::string& uid, const SensingStrategy& strategy) {
        std::lock_guard lk(mutex_);
        auto it = registrations_.find(uid);
        if (it == registrations_.end()) throw UnknownUid("no registration for uid " + uid);
        it->second.strategy = strategy;
        persist_registration(it->second);
    }

    std::set<std::string> registered_phenomena() const {
        std::lock_guard lk(mutex_);
        std::set<std::string> out;
        for (const auto& [uid, rec] : registrations_) {
            for (const auto& c : rec.profile.capabilities) out.insert(c.phenomenon);
        }
        return out;
    }

    size_t registration_count() const {
        std::lock_guard lk(mutex_);
        return registrations_.size();
    }

    // -- credentials / join ---------------------------------------------------

    // Issues a fresh single-use token bound to uid; a re-issue supersedes any
    // earlier live token for the same uid.
    std::string issue_token(const std::string& uid) {
        std::lock_guard lk(mutex_);
        if (!registrations_.contains(uid)) throw UnknownUid("no registration for uid " + uid);
        TokenRecord rec;
        rec.token = random_token_hex();
        rec.issued_at_ms = unix_ms_now();
        tokens_[uid] = rec;
        persist_token(uid, rec);
        return rec.token;
    }

    // Accepts iff the token is the live issuance for uid and unused; marks it
    // used and the registration configured.
    bool validate_join(const std::string& uid, const std::string& token) {
        std::lock_guard lk(mutex_);
        auto it = tokens_.find(uid);
        if (it == tokens_.end() || it->second.used || it->second.token != token) return false;
        it->second.used = true;
        it->second.joined_at_ms = unix_ms_now();
        persist_token(uid, it->second);
        auto rit = registrations_.find(uid);
        if (rit != registrations_.end()) {
            rit->second.status = RecordStatus::configured;
            persist_registration(rit->second);
        }
        return true;
    }

    std::optional<TokenRecord> token_record(const std::string& uid) const {
        std::lock_guard lk(mutex_);
        auto it = tokens_.find(uid);
        if (it == tokens_.end()) return std::nullopt;
        return it->second;
    }

private:
    static std::string key_of(const std::string& model, const std::string& manufacturer) {
        return model + "\x1f" + manufacturer;  // case-sensitive by design decision
    }

    void load_catalog() {
        if (!fs::exists(catalog_dir_)) return;
        for (const auto& entry : fs::directory_iterator(catalog_dir_)) {
            if (entry.path().extension() != ".json") continue;
            auto e = catalog_entry_from_json(Json::parse(read_file(entry.path())));
            auto key = key_of(e.model, e.manufacturer);
            if (catalog_.contains(key)) {
                throw ValidationError("duplicate catalog entry for (" + e.model + ", " +
                                      e.manufacturer + ")");
            }
            catalog_[key] = std::move(e);
        }
    }

    void load_plugins() {
        if (!fs::exists(plugin_dir_)) return;
        for (const auto& entry : fs::directory_iterator(plugin_dir_)) {
            if (entry.path().extension() != ".plugin") continue;
            auto bytes = read_file(entry.path());
            auto digest_path = entry.path();
            digest_path.replace_extension(".digest");
            std::string digest;
            if (fs::exists(digest_path)) {
                digest = trim(read_file(digest_path));
            } else {
                digest = sha256_hex(bytes);
                write_file(digest_path, digest + "\n");
            }
            // Id comes from the document header so the store never guesses.
            std::string id;
            for (const auto& line : split(bytes, '\n')) {
                auto t = trim(line);
                if (t.rfind("id", 0) == 0) {
                    auto q1 = t.find('"');
                    auto q2 = t.rfind('"');
                    if (q1 != std::string::npos && q2 > q1) id = t.substr(q1 + 1, q2 - q1 - 1);
                    break;
                }
            }
            if (id.empty()) {
                throw ValidationError("plugin document without id header: " + entry.path().string());
            }
            plugins_[id] = {std::move(bytes), std::move(digest)};
        }
    }

    void load_registrations() {
        auto dir = store_dir_ / "registrations";
        if (!fs::exists(dir)) return;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            auto rec = record_from_json(Json::parse(read_file(entry.path())));
            registrations_[rec.profile.identity.uid] = std::move(rec);
        }
    }

    void load_tokens() {
        auto dir = store_dir_ / "tokens";
        if (!fs::exists(dir)) return;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            auto j = Json::parse(read_file(entry.path()));
            TokenRecord rec;
            rec.token = j.at("token").get<std::string>();
            rec.used = j.value("used", false);
            rec.issued_at_ms = j.value("issued_at_ms", 0L);
            rec.joined_at_ms = j.value("joined_at_ms", 0L);
            tokens_[entry.path().stem().string()] = std::move(rec);
        }
    }

    void persist_registration(const RegistrationRecord& rec) {
        auto path = store_dir_ / "registrations" / (fs_safe(rec.profile.identity.uid) + ".json");
        write_file(path, to_json(rec).dump(2) + "\n");
    }

    void persist_token(const std::string& uid, const TokenRecord& rec) {
        Json j{{"token", rec.token},
               {"used", rec.used},
               {"issued_at_ms", rec.issued_at_ms},
               {"joined_at_ms", rec.joined_at_ms}};
        write_file(store_dir_ / "tokens" / (fs_safe(uid) + ".json"), j.dump(2) + "\n");
    }

    fs::path catalog_dir_;
    fs::path plugin_dir_;
    fs::path store_dir_;

    mutable std::mutex mutex_;
    std::map<std::string, CatalogEntry> catalog_;
    std::map<std::string, PluginDoc> plugins_;
    std::map<std::string, RegistrationRecord> registrations_;
    std::map<std::string, TokenRecord> tokens_;
};

} // namespace caddot::registry
