#pragma once

// Field accessors for parameter and config objects. Every failure names
// the offending field.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvtlab/errors.hpp"

namespace mvtlab::detail {

using Json = nlohmann::json;
using Matrix = std::vector<std::vector<double>>;

inline const Json* find(const Json& object, const char* key) {
  if (!object.is_object()) return nullptr;
  auto it = object.find(key);
  return it == object.end() || it->is_null() ? nullptr : &*it;
}

inline const Json& require(const Json& object, const char* key) {
  const Json* value = find(object, key);
  if (!value) throw MissingParameter(std::string("missing parameter '") + key + "'");
  return *value;
}

inline double as_number(const Json& value, const std::string& field) {
  if (!value.is_number())
    throw InvalidParameter("field '" + field + "': expected a number");
  const double x = value.get<double>();
  if (!std::isfinite(x))
    throw InvalidParameter("field '" + field + "': value is not finite");
  return x;
}

inline std::vector<double> as_vector(const Json& value, const std::string& field) {
  if (value.is_number()) return {as_number(value, field)};
  if (!value.is_array())
    throw InvalidParameter("field '" + field + "': expected an array of numbers");
  std::vector<double> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i)
    out.push_back(as_number(value[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

inline Matrix as_matrix(const Json& value, const std::string& field) {
  if (!value.is_array())
    throw InvalidParameter("field '" + field + "': expected an array of arrays");
  Matrix out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i)
    out.push_back(as_vector(value[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

/// Nesting depth of an array of numbers (number = 0, [x] = 1, [[x]] = 2 ...).
inline int depth(const Json& value) {
  int d = 0;
  const Json* cur = &value;
  while (cur->is_array()) {
    ++d;
    if (cur->empty()) break;
    cur = &(*cur)[0];
  }
  return d;
}

inline double number_or(const Json& object, const char* key, double fallback) {
  const Json* value = find(object, key);
  return value ? as_number(*value, key) : fallback;
}

inline bool bool_or(const Json& object, const char* key, bool fallback) {
  const Json* value = find(object, key);
  if (!value) return fallback;
  if (!value->is_boolean())
    throw InvalidParameter(std::string("field '") + key + "': expected true/false");
  return value->get<bool>();
}

inline std::string string_or(const Json& object, const char* key,
                             const std::string& fallback) {
  const Json* value = find(object, key);
  if (!value) return fallback;
  if (!value->is_string())
    throw InvalidParameter(std::string("field '") + key + "': expected a string");
  return value->get<std::string>();
}

}  // namespace mvtlab::detail
