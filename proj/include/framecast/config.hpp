#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace framecast {

// Merged key=value configuration: optional config file, then flag overrides.
// Getters record the default for any missing key, so echo() always writes the
// fully resolved set the run actually used.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& def);
    int64_t get_int(const std::string& key, int64_t def);
    double get_real(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);
    uint64_t get_u64(const std::string& key, uint64_t def);

    // Writes sorted key=value lines.
    void echo(const std::string& path) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace framecast
