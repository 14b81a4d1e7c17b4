/// @file config.hpp
/// @brief Sectioned key = value configuration files with line diagnostics.
///
///   # comment            ; comment
///   [section]
///   key = value          (trailing comments after # or ; are stripped)
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nlcomp::cli {

/// Malformed or semantically invalid configuration.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct ConfigEntry {
    std::string value;
    int line = 0;
};

class Config {
public:
    static Config parse(std::istream& is, const std::string& source = "<config>") {
        Config cfg;
        cfg.source_ = source;
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto cut = line.find_first_of("#;");
            if (cut != std::string::npos) line.erase(cut);
            const std::string text = trim(line);
            if (text.empty()) continue;
            if (text.front() == '[') {
                if (text.back() != ']' || text.size() < 3)
                    throw ConfigError(source + ":" + std::to_string(line_no) +
                                      ": malformed section header '" + text + "'");
                section = trim(text.substr(1, text.size() - 2));
                if (cfg.sections_.count(section))
                    throw ConfigError(source + ":" + std::to_string(line_no) + ": section [" +
                                      section + "] appears twice");
                cfg.sections_[section];
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + text + "'");
            if (section.empty())
                throw ConfigError(source + ":" + std::to_string(line_no) +
                                  ": key outside of any [section]");
            const std::string key = trim(text.substr(0, eq));
            const std::string value = trim(text.substr(eq + 1));
            if (key.empty())
                throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
            auto& entries = cfg.sections_[section];
            if (entries.count(key))
                throw ConfigError(source + ":" + std::to_string(line_no) + ": key '" + key +
                                  "' repeats in [" + section + "] (first on line " +
                                  std::to_string(entries[key].line) + ")");
            entries[key] = ConfigEntry{value, line_no};
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
        auto cfg = parse(in, path.string());
        cfg.directory_ = path.parent_path();
        return cfg;
    }

    bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    const ConfigEntry* entry(const std::string& section, const std::string& key) const {
        used_.insert(section + "." + key);
        const auto s = sections_.find(section);
        if (s == sections_.end()) return nullptr;
        const auto e = s->second.find(key);
        return e == s->second.end() ? nullptr : &e->second;
    }

    std::string where(const std::string& section, const std::string& key) const {
        const auto* e = entry(section, key);
        return source_ + (e ? ":" + std::to_string(e->line) : std::string()) + ": [" + section +
               "] " + key;
    }

    std::string require(const std::string& section, const std::string& key) const {
        const auto* e = entry(section, key);
        if (!e) throw ConfigError(source_ + ": missing required key '" + key + "' in [" + section + "]");
        return e->value;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        const auto* e = entry(section, key);
        return e ? e->value : fallback;
    }

    double number(const std::string& section, const std::string& key) const {
        return to_number(section, key, require(section, key));
    }

    double number(const std::string& section, const std::string& key, double fallback) const {
        const auto* e = entry(section, key);
        return e ? to_number(section, key, e->value) : fallback;
    }

    long integer(const std::string& section, const std::string& key, long fallback) const {
        const auto* e = entry(section, key);
        if (!e) return fallback;
        return to_integer(section, key, e->value);
    }

    long integer(const std::string& section, const std::string& key) const {
        return to_integer(section, key, require(section, key));
    }

    bool flag(const std::string& section, const std::string& key, bool fallback) const {
        const auto* e = entry(section, key);
        if (!e) return fallback;
        if (e->value == "true" || e->value == "yes" || e->value == "1") return true;
        if (e->value == "false" || e->value == "no" || e->value == "0") return false;
        throw ConfigError(where(section, key) + ": expected true or false, got '" + e->value + "'");
    }

    /// Comma-separated numbers.
    std::vector<double> numbers(const std::string& section, const std::string& key) const {
        const std::string text = require(section, key);
        std::vector<double> out;
        std::stringstream ss(text);
        for (std::string item; std::getline(ss, item, ',');) out.push_back(to_number(section, key, item));
        return out;
    }

    /// Path relative to the config file's directory.
    std::filesystem::path path(const std::string& section, const std::string& key) const {
        std::filesystem::path p(require(section, key));
        return p.is_absolute() ? p : directory_ / p;
    }

    /// Keys present in the file but never queried, as "[section] key (line n)".
    std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [section, entries] : sections_)
            for (const auto& [key, e] : entries)
                if (!used_.count(section + "." + key))
                    out.push_back(source_ + ":" + std::to_string(e.line) + ": unknown key '" +
                                  key + "' in [" + section + "]");
        return out;
    }

    const std::string& source() const noexcept { return source_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    double to_number(const std::string& section, const std::string& key,
                     const std::string& text) const {
        try {
            return parse_double(text);
        } catch (const InvalidArgument&) {
            throw ConfigError(where(section, key) + ": not a number: '" + trim(text) + "'");
        }
    }

    long to_integer(const std::string& section, const std::string& key,
                    const std::string& text) const {
        const double v = to_number(section, key, text);
        if (v != static_cast<double>(static_cast<long>(v)))
            throw ConfigError(where(section, key) + ": expected an integer, got '" + text + "'");
        return static_cast<long>(v);
    }

    std::string source_;
    std::filesystem::path directory_;
    std::map<std::string, std::map<std::string, ConfigEntry>> sections_;
    mutable std::set<std::string> used_;
};

}  // namespace nlcomp::cli
