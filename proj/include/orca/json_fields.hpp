#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "orca/errors.hpp"

namespace orca {

// Reads optional keys out of a JSON object and rejects anything it was not
// asked about, so typos in config files fail loudly.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string section)
      : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("'" + section_ + "' must be an object");
  }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + section_ + "." + key + "': " + e.what());
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& at(const std::string& key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown config key '" + section_ + "." + key + "'");
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace orca
