#pragma once

// Strict JSON field access shared by the scene and pipeline config readers.

#include <initializer_list>
#include <type_traits>
#include <string>
#include <string_view>

#include "csar/error.hpp"
#include "json.hpp"

namespace csar::detail {

inline void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& where,
                                std::initializer_list<std::string_view> allowed) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw InputError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InputError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw InputError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw InputError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw InputError(where + "." + key + ": wrong type");
  }
}

}  // namespace csar::detail
