#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace jkoflow {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat `key = value` file, # comments, blank lines ignored.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key " + key);
        kv[key] = val;
    }
    return kv;
}

// Typed access with per-key range validation. Every key an experiment reads
// is marked consumed; finish() rejects anything left over, so misspelled or
// out-of-place keys fail loudly.
class Params {
public:
    explicit Params(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    double get_double(const std::string& key, double fallback, double lo, double hi) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        const double v = parse_double(key, it->second);
        check_range(key, v, lo, hi);
        return v;
    }

    int get_int(const std::string& key, int fallback, int lo, int hi) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(it->second, &pos);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an integer: " + it->second);
        }
        if (pos != it->second.size())
            throw ConfigError("config key " + key + ": not an integer: " + it->second);
        if (v < lo || v > hi)
            throw ConfigError("config key " + key + " = " + it->second + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return static_cast<int>(v);
    }

    std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an unsigned integer: " + it->second);
        }
    }

    std::string get_string(const std::string& key, const std::string& fallback,
                           const std::set<std::string>& allowed) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        if (!allowed.empty() && !allowed.count(it->second))
            throw ConfigError("config key " + key + ": unsupported value " + it->second);
        return it->second;
    }

    // Comma-separated positive reals.
    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback,
                                        double lo, double hi) {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const double v = parse_double(key, tok);
            check_range(key, v, lo, hi);
            out.push_back(v);
        }
        if (out.empty()) throw ConfigError("config key " + key + ": empty list");
        return out;
    }

    void finish() const {
        for (const auto& [key, val] : kv_)
            if (!consumed_.count(key))
                throw ConfigError("unknown config key for this experiment: " + key);
    }

    const std::map<std::string, std::string>& raw() const { return kv_; }

private:
    static double parse_double(const std::string& key, const std::string& text) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &pos);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: " + text);
        }
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
        if (pos != text.size())
            throw ConfigError("config key " + key + ": not a number: " + text);
        return v;
    }

    static void check_range(const std::string& key, double v, double lo, double hi) {
        if (!(v >= lo && v <= hi))
            throw ConfigError("config key " + key + " = " + std::to_string(v) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }

    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;
};

}  // namespace jkoflow
