#pragma once

// Strict JSON object reading: unknown keys are errors, missing keys keep
// their defaults.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "labelreach/error.hpp"

namespace labelreach {

namespace detail {

/// Rejects keys outside `known`; `section` names the object in messages.
inline void check_keys(const nlohmann::json& j, std::string_view section, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
  }
}

/// Copies j[key] into out when present; type errors become ConfigError.
template <typename T>
void read_key(const nlohmann::json& j, std::string_view section, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0))
        throw ConfigError(std::string(section) + "." + key + ": expected a non-negative integer");
      if (it->get<std::uint64_t>() > std::numeric_limits<T>::max())
        throw ConfigError(std::string(section) + "." + key + ": value out of range");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(std::string(section) + "." + key + ": expected a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(std::string(section) + "." + key + ": expected a number");
    }
    it->get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace detail

}  // namespace labelreach
