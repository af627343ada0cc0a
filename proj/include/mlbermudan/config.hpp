#pragma once

// Plain-text key-value configuration:
//
//   # comment
//   method = mesh
//   epsilon = 2.5, 1.25, 0.625
//
// Keys are case-sensitive; unknown keys and malformed lines are errors.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlb {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

class KeyValues {
public:
    static KeyValues parse(std::istream& in, const std::string& origin = "<config>") {
        KeyValues kv;
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
            const std::string key = trim(std::string_view(body).substr(0, eq));
            const std::string value = trim(std::string_view(body).substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
            if (kv.values_.count(key)) throw ConfigError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
            kv.values_[key] = value;
        }
        return kv;
    }

    static KeyValues parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KeyValues load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    void require_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_uint(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
    }

    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
        if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
        return out;
    }

    static double to_double(const std::string& key, const std::string& text) {
        double v = 0.0;
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end)
            throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
        return v;
    }

    static std::uint64_t to_uint(const std::string& key, const std::string& text) {
        std::uint64_t v = 0;
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end)
            throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + text + "'");
        return v;
    }

private:
    std::map<std::string, std::string> values_;
};

} // namespace mlb
