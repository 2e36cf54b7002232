#include "pae/config.hpp"

#include <fstream>
#include <sstream>

namespace pae {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + t);
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        c.kv[key] = trim(t.substr(eq + 1));
    }
    return c;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
}

const std::string& Config::get_str(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

long long Config::get_int(const std::string& key) const {
    const std::string& v = get_str(key);
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not an integer: '" + v + "'");
    }
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get_str(key);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: '" + v + "'");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get_str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": not a boolean (true/false/1/0): '" + v + "'");
}

std::string Config::get_str(const std::string& key, const std::string& dflt) const {
    return has(key) ? kv.at(key) : dflt;
}
long long Config::get_int(const std::string& key, long long dflt) const {
    return has(key) ? get_int(key) : dflt;
}
double Config::get_double(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
}
bool Config::get_bool(const std::string& key, bool dflt) const {
    return has(key) ? get_bool(key) : dflt;
}

void Config::require_keys(const std::vector<std::string>& keys) const {
    for (const auto& k : keys)
        if (!has(k)) throw ConfigError("missing config key: " + k);
}

std::string Config::to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
}

}  // namespace pae
