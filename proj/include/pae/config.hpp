#pragma once

#include <map>
#include <string>
#include <vector>

#include "pae/error.hpp"

namespace pae {

// Flat key=value config: one pair per line, '#' comments, blanks ignored.
struct Config {
    std::map<std::string, std::string> kv;

    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    const std::string& get_str(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& dflt) const;
    long long get_int(const std::string& key, long long dflt) const;
    double get_double(const std::string& key, double dflt) const;
    bool get_bool(const std::string& key, bool dflt) const;

    void set(const std::string& key, const std::string& value) { kv[key] = value; }
    void require_keys(const std::vector<std::string>& keys) const;
    // Deterministic snapshot, keys sorted.
    std::string to_string() const;
};

}  // namespace pae
