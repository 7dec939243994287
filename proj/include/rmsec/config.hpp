#ifndef RMSEC_CONFIG_HPP
#define RMSEC_CONFIG_HPP

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rmsec/label.hpp"

namespace rmsec {

/// Invalid or inconsistent configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// `key = value` configuration text with '#' comments. Every key must be
/// consumed by the command reading it; leftovers are rejected so typos in
/// attack parameters cannot silently corrupt an experiment.
class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::string& source = "<config>") {
        KvConfig cfg;
        cfg.source_ = source;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip(line.substr(0, line.find('#')));
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = strip(stripped.substr(0, eq));
            const std::string value = strip(stripped.substr(eq + 1));
            if (key.empty())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KvConfig load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot read config file '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        return has(key) ? get_string(key) : fallback;
    }

    long long get_int(const std::string& key) { return to_int(key, get_string(key)); }
    long long get_int(const std::string& key, long long fallback) {
        return has(key) ? get_int(key) : fallback;
    }

    double get_double(const std::string& key) { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) {
        return has(key) ? get_double(key) : fallback;
    }

    bool get_bool(const std::string& key) {
        const std::string v = get_string(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(source_ + ": key '" + key + "': expected a boolean, got '" + v + "'");
    }
    bool get_bool(const std::string& key, bool fallback) { return has(key) ? get_bool(key) : fallback; }

    /// Comma-separated list; empty value yields an empty list.
    std::vector<std::string> get_list(const std::string& key) {
        std::vector<std::string> out;
        const std::string v = get_string(key);
        std::size_t pos = 0;
        while (pos <= v.size()) {
            const auto comma = v.find(',', pos);
            const std::string item = strip(v.substr(pos, comma == std::string::npos ? comma : comma - pos));
            if (!item.empty()) out.push_back(item);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key) {
        std::vector<double> out;
        for (const std::string& item : get_list(key)) out.push_back(to_double(key, item));
        return out;
    }

    /// Rejects any key that was never consumed.
    void finish() const {
        std::vector<std::string> unknown;
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) unknown.push_back(key);
        if (!unknown.empty()) {
            std::string msg = source_ + ": unknown key(s):";
            for (const auto& k : unknown) msg += " '" + k + "'";
            throw ConfigError(msg);
        }
    }

    const std::string& source() const { return source_; }

private:
    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    long long to_int(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            const long long x = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': expected an integer, got '" + v + "'");
        }
    }

    double to_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': expected a number, got '" + v + "'");
        }
    }

    std::string source_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

} // namespace rmsec

#endif
