#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

/// Rejects keys outside `allowed` so typos in config files surface as errors.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                               std::string_view section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (auto k : allowed) known = known || item.key() == k;
        if (!known) throw ConfigError(std::string(section) + ": unknown key '" + item.key() + "'");
    }
}

/// Reads j[key] into `out` when present, wrapping type errors as ConfigError.
template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out, std::string_view section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(section) + "." + key + ": " + e.what());
    }
}

}  // namespace cortexnet
