#include "gapnet/config.hpp"

#include "gapnet/codec.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>

namespace gapnet {

const std::vector<KeySpec>& config_schema() {
    using T = ValueType;
    static const std::vector<KeySpec> schema = {
        {"data.dataset", T::text, ""},
        {"data.geometry", T::text, ""},
        {"data.sites", T::text, ""},
        {"data.observations", T::text, ""},
        {"data.metric", T::text, "haversine"},
        {"data.cell_pitch_km", T::real, "25"},
        {"data.radius_km", T::real, "50"},
        {"data.window_days", T::integer, "7"},
        {"data.month_length", T::integer, "30"},
        {"data.skew_period", T::integer, "0"},
        {"data.skew_width", T::integer, "0"},
        {"data.downsample_factor", T::integer, "1"},
        {"data.valid_threshold", T::real, "0.5"},

        {"synth.days", T::integer, "730"},
        {"synth.width", T::integer, "32"},
        {"synth.height", T::integer, "64"},
        {"synth.lat0", T::real, "15"},
        {"synth.lon0", T::real, "38"},
        {"synth.dlat", T::real, "0.25"},
        {"synth.dlon", T::real, "0.25"},
        {"synth.missing_before", T::real, "0.2"},
        {"synth.missing_after", T::real, "0.6"},
        {"synth.sites", T::integer, "40"},
        {"synth.waves", T::integer, "6"},
        {"synth.trend_per_year", T::real, "0.4"},
        {"synth.seasonal_amplitude", T::real, "0.5"},
        {"synth.noise_sd", T::real, "0.1"},

        {"split.regime_boundary", T::integer, "510"},
        {"split.fraction_before", T::real, "0.5"},
        {"split.validation_days", T::integer, "146"},

        {"maskgen.removal_fraction", T::real, "0.6"},
        {"maskgen.target_missing_fraction", T::real, "0.6"},
        {"maskgen.seeds_count", T::integer, "3"},
        {"maskgen.growth_bias", T::real, "2"},
        {"maskgen.max_iterations", T::integer, "10000000"},
        {"maskgen.min_component_share", T::real, "0.7"},
        {"maskgen.max_attempts", T::integer, "16"},

        {"noise.mu", T::real, "-0.0365"},
        {"noise.sigma", T::real, "0.683"},

        {"model.ensemble", T::text, "", true},
        {"model.d_ch", T::integer, "64"},
        {"model.n_days", T::integer, "1"},
        {"model.use_posenc", T::boolean, "false"},
        {"model.include_masks", T::boolean, "true"},

        {"optim.epochs", T::integer, "50"},
        {"optim.batch_size", T::integer, "32"},
        {"optim.max_lr", T::real, "0.003"},
        {"optim.weight_decay", T::real, "0.3"},
        {"optim.dropout", T::real, "0"},
        {"optim.beta1", T::real, "0.95"},
        {"optim.beta2", T::real, "0.999"},
        {"optim.eps", T::real, "1e-05"},
        {"optim.flat_fraction", T::real, "0.72"},
        {"optim.loss", T::text, "l1"},
        {"optim.tune", T::boolean, "true"},

        {"tune.max_iterations", T::integer, "15"},
        {"tune.band_low", T::real, "1"},
        {"tune.band_high", T::real, "1.05"},
        {"tune.dropout_step", T::real, "0.05"},
        {"tune.max_dropout", T::real, "0.5"},
        {"tune.weight_decay_factor", T::real, "2"},
        {"tune.min_weight_decay", T::real, "0.01"},
        {"tune.batch_step", T::integer, "4"},
        {"tune.min_batch", T::integer, "8"},

        {"sample.k", T::integer, "20"},
        {"sample.k_saturation", T::integer, "200"},
        {"sample.aggregator", T::text, "max"},

        {"report.random_orderings", T::integer, "20"},

        {"run.seed", T::integer, "1"},
        {"run.jobs", T::integer, "1"},
    };
    return schema;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parses(ValueType type, const std::string& v) {
    if (type == ValueType::text) return true;
    if (type == ValueType::boolean) return v == "true" || v == "false";
    if (v.empty()) return false;
    char* end = nullptr;
    errno = 0;
    if (type == ValueType::integer) {
        std::strtoll(v.c_str(), &end, 10);
    } else {
        std::strtod(v.c_str(), &end);
    }
    return errno == 0 && end && *end == '\0';
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : config_schema()) {
        if (!k.required) values_[k.key] = k.fallback;
    }
}

const KeySpec& RunConfig::spec(const std::string& key) const {
    const auto& schema = config_schema();
    const auto it = std::find_if(schema.begin(), schema.end(), [&](const KeySpec& k) { return k.key == key; });
    if (it == schema.end()) throw RunConfigError("unknown configuration key '" + key + "'");
    return *it;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec& k = spec(key);
    if (!parses(k.type, value)) {
        static const char* names[] = {"an integer", "a real number", "true or false", "text"};
        throw RunConfigError("configuration key '" + key + "' must be " + names[static_cast<int>(k.type)] +
                             ", got '" + value + "'");
    }
    values_[key] = value;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const std::string raw = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw RunConfigError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw RunConfigError(where + "expected 'key = value'");
        if (section.empty()) throw RunConfigError(where + "key outside of a [section]");
        const std::string key = section + "." + trim(line.substr(0, eq));
        try {
            c.set(key, trim(line.substr(eq + 1)));
        } catch (const RunConfigError& e) {
            throw RunConfigError(where + e.what());
        }
    }
    for (const auto& k : config_schema()) {
        if (k.required && !c.has(k.key)) throw RunConfigError("missing required key '" + k.key + "'");
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw RunConfigError("cannot read configuration " + path.string() + ": " + e.what());
    }
    return parse(text);
}

std::string RunConfig::serialize() const {
    std::string out;
    std::string section;
    for (const auto& k : config_schema()) {
        const auto it = values_.find(k.key);
        if (it == values_.end()) continue;
        const auto dot = k.key.find('.');
        const std::string s = k.key.substr(0, dot);
        if (s != section) {
            if (!out.empty()) out += "\n";
            out += "[" + s + "]\n";
            section = s;
        }
        out += k.key.substr(dot + 1) + " = " + it->second + "\n";
    }
    return out;
}

bool RunConfig::has(const std::string& key) const {
    spec(key);
    return values_.count(key) != 0;
}

std::string RunConfig::text(const std::string& key) const {
    spec(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw RunConfigError("missing required key '" + key + "'");
    return it->second;
}

long long RunConfig::integer(const std::string& key) const {
    if (spec(key).type != ValueType::integer) throw RunConfigError("key '" + key + "' is not an integer");
    return std::strtoll(text(key).c_str(), nullptr, 10);
}

std::uint64_t RunConfig::unsigned_integer(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw RunConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
}

double RunConfig::real(const std::string& key) const {
    const auto t = spec(key).type;
    if (t != ValueType::real && t != ValueType::integer) throw RunConfigError("key '" + key + "' is not numeric");
    return std::strtod(text(key).c_str(), nullptr);
}

bool RunConfig::boolean(const std::string& key) const {
    if (spec(key).type != ValueType::boolean) throw RunConfigError("key '" + key + "' is not a boolean");
    return text(key) == "true";
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    const std::string v = text(key);
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace gapnet
