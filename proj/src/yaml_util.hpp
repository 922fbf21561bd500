#pragma once

// Strict accessors over yaml-cpp nodes that report the offending field and
// source line through ConfigError.

#include <yaml-cpp/yaml.h>

#include <initializer_list>
#include <string>
#include <vector>

#include "ghostseg/config.hpp"
#include "ghostseg/radar_core.hpp"

namespace ghostseg::yaml {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void require_map(const YAML::Node& n, const std::string& path) {
    if (!n.IsMap()) throw ConfigError(path, line_of(n), "expected a mapping");
}

/// Rejects keys outside `allowed`, catching typos in hand-written configs.
inline void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) {
    require_map(n, path);
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key), line_of(kv.first), "unknown field");
    }
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(path, line_of(n), "invalid value");
    }
}

template <typename T>
T get(const YAML::Node& parent, const char* key, const std::string& path, const T& fallback) {
    const auto n = parent[key];
    if (!n) return fallback;
    return scalar<T>(n, join(path, key));
}

template <typename T>
T require(const YAML::Node& parent, const char* key, const std::string& path) {
    const auto n = parent[key];
    if (!n) throw ConfigError(join(path, key), line_of(parent), "missing required field");
    return scalar<T>(n, join(path, key));
}

inline Vec2 vec2(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 2) throw ConfigError(path, line_of(n), "expected [x, y]");
    return {scalar<double>(n[0], path), scalar<double>(n[1], path)};
}

inline Interval interval(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 2) throw ConfigError(path, line_of(n), "expected [lower, upper]");
    return {scalar<double>(n[0], path), scalar<double>(n[1], path)};
}

inline YAML::Node load_text(const std::string& text, const std::string& source) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source, e.mark.line + 1, e.msg);
    }
}

}  // namespace ghostseg::yaml
