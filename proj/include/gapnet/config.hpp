#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapnet {

class RunConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValueType { integer, real, boolean, text };

struct KeySpec {
    std::string key;  // "section.name"
    ValueType type;
    std::string fallback;  // empty + required => must be given
    bool required = false;
};

/// Every key a run configuration may contain, in serialization order.
const std::vector<KeySpec>& config_schema();

/// Flat "key = value" configuration with [section] headers. Values missing
/// from the text take their schema defaults.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string serialize() const;

    bool has(const std::string& key) const;
    std::string text(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::uint64_t unsigned_integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;

    /// Validates against the schema and stores the value.
    void set(const std::string& key, const std::string& value);

    const std::map<std::string, std::string>& values() const { return values_; }
    friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values_ == b.values_; }

private:
    const KeySpec& spec(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace gapnet
