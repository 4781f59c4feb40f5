#include "framecast/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "framecast/error.hpp"

namespace framecast {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                              t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_str(const std::string& key, const std::string& def) {
    auto it = values_.find(key);
    if (it == values_.end()) it = values_.emplace(key, def).first;
    return it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_.emplace(key, std::to_string(def));
        return def;
    }
    try {
        size_t used = 0;
        int64_t v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
    }
}

double RunConfig::get_real(const std::string& key, double def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g", def);
        values_.emplace(key, buf);
        return def;
    }
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_.emplace(key, def ? "true" : "false");
        return def;
    }
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_.emplace(key, std::to_string(def));
        return def;
    }
    try {
        size_t used = 0;
        unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return static_cast<uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                          it->second + "'");
    }
}

void RunConfig::echo(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write resolved config to " + path);
    for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
}

}  // namespace framecast
