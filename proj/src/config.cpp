#include "config.hpp"

#include <cstdlib>
#include <fstream>

namespace actseg {

void KeyValueConfig::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        set(line.substr(0, eq), line.substr(eq + 1));
    }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) {
        throw UsageError("missing required option '" + key + "'");
    }
    return it->second;
}

long KeyValueConfig::get_long(const std::string& key, long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    char* end = nullptr;
    const long v = std::strtol(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw UsageError("option '" + key + "': expected integer, got '" + it->second + "'");
    }
    return v;
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw UsageError("option '" + key + "': expected number, got '" + it->second + "'");
    }
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw UsageError("option '" + key + "': expected boolean, got '" + s + "'");
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw UsageError("option '" + key + "': expected integer, got '" + it->second + "'");
    }
    return v;
}

} // namespace actseg
