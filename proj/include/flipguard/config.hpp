#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "flipguard/eval.hpp"

namespace flipguard {

// Bad key, bad value, or missing required setting. Reported as a usage error.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValueType { UInt, Real, Bool, Text, UIntList, RealList, TextList };

struct ConfigKey {
    std::string name;
    ValueType type;
    std::vector<std::string> choices;  // empty: any value of the type
    std::string help;
};

const std::vector<ConfigKey>& config_schema();
const ConfigKey* find_key(const std::string& name);

// Flat key=value settings. Keys and values are validated on every write.
class RunConfig {
public:
    void set(const std::string& key, const std::string& value);
    // Entries of `other` replace ours.
    void merge(const RunConfig& other);
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string text(const std::string& key, const std::string& fallback) const;
    std::uint64_t uint(const std::string& key, std::uint64_t fallback) const;
    double real(const std::string& key, double fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<std::size_t> uint_list(const std::string& key, std::vector<std::size_t> fallback) const;
    std::vector<double> real_list(const std::string& key, std::vector<double> fallback) const;
    std::vector<std::string> text_list(const std::string& key, std::vector<std::string> fallback) const;

    std::string require(const std::string& key) const;

    // One "key = value" line per entry, keys sorted.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

// '#' starts a comment; blank lines are skipped.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Mixture named by the "mixture" key: "benchmark" (size from "n") or a JSON
// file {"components": [{"mean", "stddev", "count", "label"}]}.
MixtureSpec mixture_from_config(const RunConfig& cfg);
MixtureSpec mixture_from_json(const nlohmann::json& doc);

ExperimentConfig experiment_from_config(const RunConfig& cfg);

}  // namespace flipguard
