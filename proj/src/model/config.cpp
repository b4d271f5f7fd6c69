#include "snn/model/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "snn/core/error.hpp"

namespace snn::model {

std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const ConfigSection& s, const std::string& key, const std::string& v, const char* what) {
    throw ConfigError("[" + s.name + "] (line " + std::to_string(s.line) + "): " + key + " = '" + v + "' is not " + what);
}

}  // namespace

std::optional<std::string> ConfigSection::find(const std::string& key) const {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        if (it->first == key) return it->second;
    }
    return std::nullopt;
}

std::string ConfigSection::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

long ConfigSection::get_int(const std::string& key, long fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    long out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) bad_value(*this, key, *v, "an integer");
    return out;
}

double ConfigSection::get_double(const std::string& key, double fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size()) bad_value(*this, key, *v, "a number");
        return out;
    } catch (const std::logic_error&) {
        bad_value(*this, key, *v, "a number");
    }
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    bad_value(*this, key, *v, "a boolean");
}

std::vector<int> ConfigSection::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    std::vector<int> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        int x = 0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
            bad_value(*this, key, *v, "a comma-separated integer list");
        }
        out.push_back(x);
    }
    return out;
}

void ConfigSection::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : entries) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError("[" + name + "] (line " + std::to_string(line) + "): unknown key '" + k +
                              "'; expected one of: " + list);
        }
    }
}

void ConfigSection::set(const std::string& key, const std::string& value) {
    for (auto& e : entries) {
        if (e.first == key) {
            e.second = value;
            return;
        }
    }
    entries.emplace_back(key, value);
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile f;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            f.sections_.push_back({trim(std::string_view(line).substr(1, line.size() - 2)), lineno, {}});
            continue;
        }
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = trim(std::string_view(line).substr(0, hash));
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        if (f.sections_.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": entry outside any section");
        std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        f.sections_.back().entries.emplace_back(std::move(key), trim(std::string_view(line).substr(eq + 1)));
    }
    return f;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

const ConfigSection* ConfigFile::first(const std::string& name) const {
    for (const auto& s : sections_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

ConfigSection& ConfigFile::section(const std::string& name) {
    for (auto& s : sections_) {
        if (s.name == name) return s;
    }
    return append(name);
}

std::vector<const ConfigSection*> ConfigFile::all(const std::string& name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections_) {
        if (s.name == name) out.push_back(&s);
    }
    return out;
}

void ConfigFile::remove_all(const std::string& name) {
    std::erase_if(sections_, [&](const ConfigSection& s) { return s.name == name; });
}

ConfigSection& ConfigFile::append(const std::string& name) {
    sections_.push_back({name, 0, {}});
    return sections_.back();
}

std::string ConfigFile::to_text() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < sections_.size(); ++i) {
        if (i) os << '\n';
        os << '[' << sections_[i].name << "]\n";
        for (const auto& [k, v] : sections_[i].entries) os << k << " = " << v << '\n';
    }
    return os.str();
}

}  // namespace snn::model
