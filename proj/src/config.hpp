#pragma once

#include "errors.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace actseg {

// Flat key=value configuration: optional file, later entries override
// earlier ones (command-line flags are appended last).
class KeyValueConfig {
public:
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    // Unknown-key detection for the CLI surface.
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& def = "") const;
    std::string require_string(const std::string& key) const;
    long get_long(const std::string& key, long def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    uint64_t get_u64(const std::string& key, uint64_t def) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace actseg
