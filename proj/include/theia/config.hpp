#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace theia {

/// Flat `key=value` configuration. `#` starts a comment line.
class Config {
public:
    Config() = default;

    static Config parse(std::string_view text);
    static Config load(const std::filesystem::path& path);

    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Renders the entries back as `key=value` lines, sorted by key.
    std::string str() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace theia
