// Experiment configuration: JSON file + overrides, resolved against a schema of
// defaults. Unknown keys and missing required keys are hard errors.
#ifndef WDEOS_TOOLS_CONFIG_HPP
#define WDEOS_TOOLS_CONFIG_HPP

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace wdeos_cli {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Schema {
  json defaults;                 // null default = optional, no value
  std::set<std::string> required;  // dotted keys
};

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

// key=value with a dotted key; the value is JSON when it parses, else a string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &cfg;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("--set: '" + parts[i] + "' is not an object");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

inline bool same_kind(const json& def, const json& v) {
  if (def.is_null() || v.is_null()) return true;
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

inline json resolve_node(const json& user, const json& defaults, const std::set<std::string>& required,
                         const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string dotted = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + dotted + "'");
    const json& def = defaults[it.key()];
    if (!same_kind(def, it.value())) throw ConfigError("config key '" + dotted + "' has the wrong type");
    if (def.is_object())
      out[it.key()] = resolve_node(it.value(), def, required, dotted);
    else
      out[it.key()] = it.value();
  }
  for (const auto& r : required) {
    const auto dot = r.rfind('.');
    const std::string parent = dot == std::string::npos ? "" : r.substr(0, dot);
    const std::string leaf = dot == std::string::npos ? r : r.substr(dot + 1);
    if (parent != prefix) continue;
    if (!user.contains(leaf) || user[leaf].is_null()) throw ConfigError("missing required config key '" + r + "'");
  }
  return out;
}

inline json resolve(const json& user, const Schema& schema) {
  return resolve_node(user.is_null() ? json::object() : user, schema.defaults, schema.required, "");
}

}  // namespace wdeos_cli

#endif  // WDEOS_TOOLS_CONFIG_HPP
