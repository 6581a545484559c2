#include "flipguard/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace flipguard {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool parse_uint(const std::string& s, std::uint64_t& out)
{
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end && !s.empty();
}

bool parse_real(const std::string& s, double& out)
{
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end && !s.empty();
}

bool parse_bool(const std::string& s, bool& out)
{
    if (s == "true" || s == "1" || s == "yes" || s == "on") {
        out = true;
        return true;
    }
    if (s == "false" || s == "0" || s == "no" || s == "off") {
        out = false;
        return true;
    }
    return false;
}

void check_value(const ConfigKey& key, const std::string& value)
{
    auto fail = [&](const std::string& why) {
        throw ConfigError("config key '" + key.name + "': " + why + " (got '" + value + "')");
    };
    auto check_choice = [&](const std::string& v) {
        if (!key.choices.empty() && std::find(key.choices.begin(), key.choices.end(), v) == key.choices.end()) {
            std::string all;
            for (const auto& c : key.choices) all += (all.empty() ? "" : "|") + c;
            fail("expected one of " + all);
        }
    };
    std::uint64_t u = 0;
    double r = 0.0;
    bool b = false;
    switch (key.type) {
    case ValueType::UInt:
        if (!parse_uint(value, u)) fail("expected a non-negative integer");
        check_choice(value);
        break;
    case ValueType::Real:
        if (!parse_real(value, r)) fail("expected a real number");
        break;
    case ValueType::Bool:
        if (!parse_bool(value, b)) fail("expected true or false");
        break;
    case ValueType::Text:
        if (value.empty()) fail("empty value");
        check_choice(value);
        break;
    case ValueType::UIntList:
        if (split_list(value).empty()) fail("empty list");
        for (const auto& v : split_list(value))
            if (!parse_uint(v, u)) fail("expected a comma-separated list of integers");
        break;
    case ValueType::RealList:
        if (split_list(value).empty()) fail("empty list");
        for (const auto& v : split_list(value))
            if (!parse_real(v, r)) fail("expected a comma-separated list of reals");
        break;
    case ValueType::TextList:
        if (split_list(value).empty()) fail("empty list");
        for (const auto& v : split_list(value)) check_choice(v);
        break;
    }
}

}  // namespace

const std::vector<ConfigKey>& config_schema()
{
    using T = ValueType;
    static const std::vector<ConfigKey> schema = {
        {"seed", T::UInt, {}, "random seed"},
        {"out", T::Text, {}, "output directory"},
        {"config", T::Text, {}, "config file the settings came from"},
        {"in", T::Text, {}, "input dataset CSV"},
        {"val", T::Text, {}, "clean validation CSV"},
        {"test", T::Text, {}, "test CSV"},
        {"attacker", T::Text, {}, "attacker model JSON"},
        {"model", T::Text, {}, "model JSON"},
        {"truth", T::Text, {}, "truth sidecar CSV"},
        {"detection", T::Text, {}, "detection CSV"},
        {"label_column", T::Text, {}, "label column name or 0-based index"},
        {"has_header", T::Bool, {}, "CSV files have a header row"},
        {"mixture", T::Text, {}, "\"benchmark\" or a mixture JSON file"},
        {"n", T::UInt, {}, "benchmark mixture size"},
        {"setup", T::UInt, {"1", "2"}, "split setup"},
        {"split", T::RealList, {}, "train,val,test fractions"},
        {"standardize", T::Bool, {}, "standardize features by trainset statistics"},
        {"kind", T::Text, {"srnn", "kmeans", "knn", "rnn"}, "model kind for train"},
        {"k", T::UIntList, {}, "centroid count (a list sweeps K in experiments)"},
        {"lambda", T::Real, {}, "radius penalty"},
        {"alpha", T::Real, {}, "cost-complexity coefficient (recorded only)"},
        {"max_em_iters", T::UInt, {}, "EM iteration cap"},
        {"mu_grid", T::RealList, {}, "surrogate slack path"},
        {"sgd_epochs", T::UInt, {}, "gradient steps per mu"},
        {"sgd_step", T::Real, {}, "initial step size"},
        {"prune", T::Bool, {}, "run the pruning step"},
        {"prune_grid", T::RealList, {}, "impurity cut-offs"},
        {"infinite_radii", T::Bool, {}, "force every radius to infinity"},
        {"init", T::Text, {"kmeans++", "kmeans"}, "centroid initialization"},
        {"attack", T::TextList, {"none", "modality", "ncar", "nnar", "component"}, "attack kind(s)"},
        {"budget_frac", T::RealList, {}, "attack budget as a fraction of the trainset"},
        {"select", T::Text, {"greedy", "exact"}, "cluster selection method"},
        {"nnar_k", T::UInt, {}, "NNAR neighbor count"},
        {"flip_components", T::UIntList, {}, "mixture components flipped by the component attack"},
        {"models", T::TextList, {"srnn", "rsrnn", "kmeans", "kmeans-val", "knn", "rnn"}, "experiment models"},
        {"knn_k", T::UInt, {}, "k-NN neighbor count"},
        {"attacker_kind", T::Text, {"srnn", "oracle"}, "experiment attacker model"},
        {"attacker_k", T::UInt, {}, "attacker centroid count"},
        {"attacker_init", T::Text, {"kmeans++", "kmeans"}, "attacker initialization"},
        {"runs", T::UInt, {}, "experiment repetitions"},
        {"label_source", T::Text, {"trainset", "validationset"}, "k-means label source"},
        {"rnn_count", T::UInt, {}, "random NN subset size"},
    };
    return schema;
}

const ConfigKey* find_key(const std::string& name)
{
    for (const auto& k : config_schema())
        if (k.name == name) return &k;
    return nullptr;
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("unknown config key '" + key + "'");
    const std::string v = trim(value);
    check_value(*k, v);
    values_[key] = v;
}

void RunConfig::merge(const RunConfig& other)
{
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string RunConfig::text(const std::string& key, const std::string& fallback) const
{
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::uint64_t RunConfig::uint(const std::string& key, std::uint64_t fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    parse_uint(it->second, v);
    return v;
}

double RunConfig::real(const std::string& key, double fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    parse_real(it->second, v);
    return v;
}

bool RunConfig::flag(const std::string& key, bool fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    bool v = false;
    parse_bool(it->second, v);
    return v;
}

std::vector<std::size_t> RunConfig::uint_list(const std::string& key, std::vector<std::size_t> fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    for (const auto& s : split_list(it->second)) {
        std::uint64_t v = 0;
        parse_uint(s, v);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<double> RunConfig::real_list(const std::string& key, std::vector<double> fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& s : split_list(it->second)) {
        double v = 0.0;
        parse_real(s, v);
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> RunConfig::text_list(const std::string& key, std::vector<std::string> fallback) const
{
    auto it = values_.find(key);
    return it == values_.end() ? fallback : split_list(it->second);
}

std::string RunConfig::require(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required setting '" + key + "'");
    return it->second;
}

std::string RunConfig::to_text() const
{
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

RunConfig parse_config(const std::string& text)
{
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

MixtureSpec mixture_from_json(const nlohmann::json& doc)
{
    MixtureSpec spec;
    try {
        for (const auto& c : doc.at("components")) {
            MixtureComponent m;
            m.mean = c.at("mean").get<std::vector<double>>();
            m.stddev = c.at("stddev").get<double>();
            m.count = c.at("count").get<std::size_t>();
            m.label = c.at("label").get<int>();
            spec.components.push_back(std::move(m));
        }
        spec.seed = doc.value("seed", std::uint64_t{0});
        spec.validate();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed mixture document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid mixture: ") + e.what());
    }
    return spec;
}

MixtureSpec mixture_from_config(const RunConfig& cfg)
{
    const std::string source = cfg.text("mixture", "benchmark");
    MixtureSpec spec = source == "benchmark" ? benchmark_mixture(cfg.uint("n", 10000), 0)
                                             : mixture_from_json(load_json(source));
    spec.seed = cfg.uint("seed", 0);
    return spec;
}

ExperimentConfig experiment_from_config(const RunConfig& cfg)
{
    ExperimentConfig e;
    if (cfg.has("in")) {
        e.csv_path = cfg.text("in", "");
        const std::string col = cfg.text("label_column", "label");
        std::uint64_t idx = 0;
        if (parse_uint(col, idx))
            e.csv.label_column = static_cast<std::size_t>(idx);
        else
            e.csv.label_column = col;
        e.csv.has_header = cfg.flag("has_header", true);
    } else {
        e.mixture = mixture_from_config(cfg);
    }
    e.standardize = cfg.flag("standardize", e.standardize);
    e.setup = static_cast<int>(cfg.uint("setup", static_cast<std::uint64_t>(e.setup)));
    e.attacks = cfg.text_list("attack", e.attacks);
    e.budget_fracs = cfg.real_list("budget_frac", e.budget_fracs);
    e.models = cfg.text_list("models", e.models);
    e.k_values = cfg.uint_list("k", e.k_values);
    e.attacker = cfg.text("attacker_kind", e.attacker);
    e.attacker_k = cfg.uint("attacker_k", e.attacker_k);
    e.attacker_init = parse_init_method(cfg.text("attacker_init", to_string(e.attacker_init)));
    e.select = parse_select_method(cfg.text("select", to_string(e.select)));
    e.nnar_k = cfg.uint("nnar_k", e.nnar_k);
    if (cfg.has("flip_components")) {
        e.flip_components.clear();
        for (std::size_t c : cfg.uint_list("flip_components", {})) e.flip_components.push_back(static_cast<int>(c));
    }
    e.knn_k = cfg.uint("knn_k", e.knn_k);
    e.lambda = cfg.real("lambda", e.lambda);
    e.prune = cfg.flag("prune", e.prune);
    e.max_em_iters = cfg.uint("max_em_iters", e.max_em_iters);
    e.optimizer.mu_grid = cfg.real_list("mu_grid", e.optimizer.mu_grid);
    e.optimizer.sgd_epochs = cfg.uint("sgd_epochs", e.optimizer.sgd_epochs);
    e.optimizer.sgd_step = cfg.real("sgd_step", e.optimizer.sgd_step);
    e.seed = cfg.uint("seed", 0);
    e.runs = cfg.uint("runs", e.runs);
    try {
        e.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    return e;
}

}  // namespace flipguard
