#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace snn::model {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

/// One "[name]" section of a config file. Keys keep file order.
struct ConfigSection {
    std::string name;
    int line = 0;
    std::vector<std::pair<std::string, std::string>> entries;

    std::optional<std::string> find(const std::string& key) const;
    bool has(const std::string& key) const { return find(key).has_value(); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    /// Throws ConfigError naming the first key not in `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;
    void set(const std::string& key, const std::string& value);
};

/// Grammar:
///   file    := { line }
///   line    := blank | comment | header | entry
///   comment := ('#' | ';') text
///   header  := '[' name ']'
///   entry   := key '=' value     (inline '#' starts a comment)
/// Section names may repeat ([block], [stage]); entries before the first
/// header are an error.
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
    static ConfigFile load(const std::filesystem::path& path);

    const std::vector<ConfigSection>& sections() const { return sections_; }
    const ConfigSection* first(const std::string& name) const;
    ConfigSection& section(const std::string& name);  // creates if missing
    std::vector<const ConfigSection*> all(const std::string& name) const;
    void remove_all(const std::string& name);
    ConfigSection& append(const std::string& name);

    std::string to_text() const;

private:
    std::vector<ConfigSection> sections_;
};

}  // namespace snn::model
