#include "flipguard/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flipguard/baselines.hpp"
#include "flipguard/rng.hpp"

namespace flipguard {

DetectionMetrics detection_metrics(std::span<const std::size_t> detected, std::span<const std::size_t> truth)
{
    const std::set<std::size_t> det(detected.begin(), detected.end());
    const std::set<std::size_t> tru(truth.begin(), truth.end());
    DetectionMetrics m;
    m.detected = det.size();
    m.truth = tru.size();
    for (std::size_t i : det) m.hits += tru.count(i);
    m.recall = m.truth ? static_cast<double>(m.hits) / static_cast<double>(m.truth) : 0.0;
    m.vacuous = m.detected == 0;
    m.tp_ratio = m.vacuous ? 1.0 : static_cast<double>(m.hits) / static_cast<double>(m.detected);
    return m;
}

std::size_t budget_from_fraction(double fraction, std::size_t n_train)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("budget fraction must be in [0, 1]");
    // The small slack keeps e.g. 0.1 * 2000 from flooring to 199.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_train) + 1e-9));
}

MixtureSpec benchmark_mixture(std::size_t n, std::uint64_t seed)
{
    struct Part {
        double x, y, sd, weight;
        int label;
    };
    // Three heavy components, three light ones, and two satellites that share
    // a class with the light component next to them.
    static const Part parts[] = {
        {0.0, 0.0, 1.0, 0.24, 0},  {9.0, 0.0, 1.0, 0.24, 1},  {18.0, 0.0, 1.0, 0.24, 2},
        {0.0, 9.0, 1.0, 0.06, 3},  {9.0, 9.0, 1.0, 0.06, 4},  {18.0, 9.0, 1.0, 0.06, 0},
        {0.0, 10.2, 0.4, 0.05, 3}, {9.0, 10.2, 0.4, 0.05, 4},
    };
    if (n < std::size(parts)) throw std::invalid_argument("benchmark needs at least one sample per component");
    MixtureSpec spec;
    spec.seed = seed;
    std::size_t assigned = 0;
    for (const auto& p : parts) {
        MixtureComponent c;
        c.mean = {p.x, p.y};
        c.stddev = p.sd;
        c.count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(p.weight * static_cast<double>(n))));
        c.label = p.label;
        assigned += c.count;
        spec.components.push_back(c);
    }
    if (assigned < n) spec.components.front().count += n - assigned;
    return spec;
}

SplitSpec setup_split(int setup, std::uint64_t seed)
{
    SplitSpec s;
    s.seed = seed;
    if (setup == 1) {
        s.train_fraction = 0.2;
        s.val_fraction = 0.016;
        s.test_fraction = 0.784;
    } else if (setup == 2) {
        s.train_fraction = 0.8;
        s.val_fraction = 0.064;
        s.test_fraction = 0.136;
    } else {
        throw std::invalid_argument("setup must be 1 or 2");
    }
    return s;
}

namespace {

const std::set<std::string> kAttacks = {"none", "modality", "ncar", "nnar", "component"};
const std::set<std::string> kModels = {"srnn", "rsrnn", "kmeans", "kmeans-val", "knn", "rnn"};

bool uses_k(const std::string& model) { return model != "knn"; }

nlohmann::json stat_json(const Stat& s)
{
    return {{"mean", s.mean}, {"sd", s.sd}, {"values", s.values}};
}

std::string csv_number(double v) { return format_double(v); }

// Keeps the timed calls observable.
volatile std::size_t timing_sink = 0;

}  // namespace

void ExperimentConfig::validate() const
{
    if (setup != 1 && setup != 2) throw std::invalid_argument("setup must be 1 or 2");
    if (attacks.empty()) throw std::invalid_argument("no attack kinds given");
    for (const auto& a : attacks)
        if (!kAttacks.count(a)) throw std::invalid_argument("unknown attack '" + a + "'");
    if (models.empty()) throw std::invalid_argument("no models given");
    for (const auto& m : models)
        if (!kModels.count(m)) throw std::invalid_argument("unknown model '" + m + "'");
    if (budget_fracs.empty()) throw std::invalid_argument("no budget fractions given");
    for (double f : budget_fracs)
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("budget fraction must be in [0, 1]");
    if (k_values.empty()) throw std::invalid_argument("no K values given");
    for (std::size_t k : k_values)
        if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (attacker != "srnn" && attacker != "oracle") throw std::invalid_argument("attacker must be srnn or oracle");
    if (attacker == "oracle" && !csv_path.empty()) throw std::invalid_argument("oracle attacker needs a mixture source");
    if (attacker_k < 1 || nnar_k < 1 || knn_k < 1) throw std::invalid_argument("neighbor and centroid counts must be >= 1");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (max_em_iters < 1) throw std::invalid_argument("max_em_iters must be >= 1");
    if (runs < 1) throw std::invalid_argument("runs must be >= 1");
    if (csv_path.empty()) mixture.validate();
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg)
{
    nlohmann::json doc;
    if (!cfg.csv_path.empty()) {
        doc["csv_path"] = cfg.csv_path;
        doc["csv_has_header"] = cfg.csv.has_header;
        if (const auto* name = std::get_if<std::string>(&cfg.csv.label_column))
            doc["csv_label_column"] = *name;
        else
            doc["csv_label_column"] = std::get<std::size_t>(cfg.csv.label_column);
    } else {
        auto comps = nlohmann::json::array();
        for (const auto& c : cfg.mixture.components)
            comps.push_back({{"mean", c.mean}, {"stddev", c.stddev}, {"count", c.count}, {"label", c.label}});
        doc["mixture"] = comps;
    }
    doc["standardize"] = cfg.standardize;
    doc["setup"] = cfg.setup;
    doc["attacks"] = cfg.attacks;
    doc["budget_fracs"] = cfg.budget_fracs;
    doc["models"] = cfg.models;
    doc["k_values"] = cfg.k_values;
    doc["attacker"] = cfg.attacker;
    doc["attacker_k"] = cfg.attacker_k;
    doc["attacker_init"] = to_string(cfg.attacker_init);
    doc["select"] = to_string(cfg.select);
    doc["nnar_k"] = cfg.nnar_k;
    doc["flip_components"] = cfg.flip_components;
    doc["knn_k"] = cfg.knn_k;
    doc["lambda"] = cfg.lambda;
    doc["prune"] = cfg.prune;
    doc["max_em_iters"] = cfg.max_em_iters;
    doc["mu_grid"] = cfg.optimizer.mu_grid;
    doc["sgd_epochs"] = cfg.optimizer.sgd_epochs;
    doc["sgd_step"] = cfg.optimizer.sgd_step;
    doc["runs"] = cfg.runs;
    return doc;
}

std::uint64_t run_seed(std::uint64_t seed, std::size_t run) { return derive_seed(seed, "run-" + std::to_string(run)); }

Stat summarize(std::vector<double> values)
{
    Stat s;
    s.values = std::move(values);
    if (s.values.empty()) return s;
    double sum = 0.0;
    for (double v : s.values) sum += v;
    s.mean = sum / static_cast<double>(s.values.size());
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.values.size()));
    return s;
}

const Cell* ExperimentReport::find(const std::string& attack, const std::string& model, std::optional<std::size_t> k,
                                   std::optional<double> budget_frac) const
{
    for (const auto& c : cells) {
        if (c.attack != attack || c.model != model) continue;
        if (k && c.k != *k) continue;
        if (budget_frac && c.budget_frac != *budget_frac) continue;
        return &c;
    }
    return nullptr;
}

std::string fnv1a_hex(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct RunData {
    Dataset train, val, test, attacker_set;
    std::vector<MixtureComponent> components;  // standardized means
};

RunData prepare_run(const ExperimentConfig& cfg, const Dataset* csv_data, std::uint64_t seed)
{
    Dataset full;
    MixtureSpec spec = cfg.mixture;
    if (csv_data) {
        full = *csv_data;
    } else {
        spec.seed = derive_seed(seed, "data");
        full = gen_mixture(spec);
    }
    auto parts = split(full, setup_split(cfg.setup, derive_seed(seed, "split")));
    RunData run;
    if (cfg.setup == 1) {
        const std::size_t n_att = std::max<std::size_t>(parts.train.size(), full.size() * 4 / 5);
        std::vector<std::size_t> idx(parts.indices.order.begin(),
                                     parts.indices.order.begin() + static_cast<std::ptrdiff_t>(n_att));
        run.attacker_set = full.subset(idx);
    } else {
        run.attacker_set = parts.train;
    }
    run.components = spec.components;
    if (cfg.standardize) {
        auto st = standardize(parts.train);
        run.train = std::move(st.transformed);
        run.val = st.scaler.apply(parts.val);
        run.test = st.scaler.apply(parts.test);
        run.attacker_set = st.scaler.apply(run.attacker_set);
        for (auto& c : run.components) c.mean = st.scaler.apply(c.mean);
    } else {
        run.train = std::move(parts.train);
        run.val = std::move(parts.val);
        run.test = std::move(parts.test);
    }
    return run;
}

SrnnModel oracle_attacker(const std::vector<MixtureComponent>& comps, const Dataset& train)
{
    SrnnModel m;
    m.dims = train.dims();
    m.class_count = train.class_count();
    m.label_names = train.label_names();
    for (const auto& c : comps) {
        m.centroids.insert(m.centroids.end(), c.mean.begin(), c.mean.end());
        m.labels.push_back(c.label);
    }
    return m;
}

struct Measurement {
    double test_error = 0.0;
    double train_error = 0.0;
    std::optional<double> val_error;
    std::optional<DetectionMetrics> detection;
    std::optional<double> cutoff;
};

Measurement measure(const ExperimentConfig& cfg, const std::string& model, std::size_t k, const Dataset& poisoned,
                    const RunData& run, std::span<const std::size_t> flipped, std::uint64_t seed)
{
    Measurement out;
    const std::uint64_t model_seed = derive_seed(seed, "model-" + model);
    if (model == "srnn") {
        TrainConfig tc;
        tc.k = k;
        tc.seed = model_seed;
        tc.max_em_iters = cfg.max_em_iters;
        tc.optimizer = cfg.optimizer;
        const auto m = train_srnn(poisoned, tc);
        out.test_error = error_ratio(m, run.test);
        out.train_error = error_ratio(m, poisoned);
    } else if (model == "rsrnn") {
        DefenseConfig dc;
        dc.k = k;
        dc.lambda = cfg.lambda;
        dc.optimizer = cfg.optimizer;
        dc.max_em_iters = cfg.max_em_iters;
        dc.prune_enabled = cfg.prune;
        dc.seed = model_seed;
        const auto r = train_rsrnn(poisoned, run.val, dc);
        out.test_error = rsrnn_error_ratio(r.model, run.test);
        out.train_error = rsrnn_error_ratio(r.model, poisoned);
        out.val_error = static_cast<double>(r.val_errors) / static_cast<double>(run.val.size());
        out.detection = detection_metrics(r.detection.detected, flipped);
        out.cutoff = r.model.chosen_cutoff;
    } else if (model == "kmeans" || model == "kmeans-val") {
        const bool val = model == "kmeans-val";
        const auto c = train_kmeans_classifier(poisoned, val ? run.val : poisoned, k, model_seed,
                                               val ? LabelSource::Validationset : LabelSource::Trainset);
        out.test_error = error_ratio(c.model, run.test);
        out.train_error = error_ratio(c.model, poisoned);
    } else if (model == "knn") {
        const auto c = make_knn(poisoned, cfg.knn_k);
        out.test_error = knn_error_ratio(c, run.test);
        out.train_error = knn_error_ratio(c, poisoned);
    } else {
        const auto c = make_random_nn(poisoned, std::min(k, poisoned.size()), model_seed);
        out.test_error = knn_error_ratio(c, run.test);
        out.train_error = knn_error_ratio(c, poisoned);
    }
    return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    ExperimentReport report;
    report.config = experiment_config_to_json(cfg);
    report.config_hash = fnv1a_hex(report.config.dump());
    report.seed = cfg.seed;

    std::optional<Dataset> csv_data;
    if (!cfg.csv_path.empty()) csv_data = load_csv(cfg.csv_path, cfg.csv);

    // Cell layout: attack x budget x model x K, knn once per (attack, budget).
    for (const auto& attack : cfg.attacks)
        for (double frac : cfg.budget_fracs)
            for (const auto& model : cfg.models) {
                if (!uses_k(model)) {
                    Cell c;
                    c.attack = attack;
                    c.budget_frac = frac;
                    c.model = model;
                    c.k = cfg.knn_k;
                    report.cells.push_back(c);
                    continue;
                }
                for (std::size_t k : cfg.k_values) {
                    Cell c;
                    c.attack = attack;
                    c.budget_frac = frac;
                    c.model = model;
                    c.k = k;
                    report.cells.push_back(c);
                }
            }

    struct Accum {
        std::vector<double> test, train, val, recall, tp;
    };
    std::vector<Accum> acc(report.cells.size());
    std::set<std::string> warned;

    const bool need_attacker =
        std::find(cfg.attacks.begin(), cfg.attacks.end(), "modality") != cfg.attacks.end();
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const std::uint64_t seed = run_seed(cfg.seed, r);
        report.run_seeds.push_back(seed);
        const RunData run = prepare_run(cfg, csv_data ? &*csv_data : nullptr, seed);

        SrnnModel attacker;
        if (need_attacker) {
            if (cfg.attacker == "oracle") {
                attacker = oracle_attacker(run.components, run.train);
            } else {
                TrainConfig tc;
                tc.k = cfg.attacker_k;
                tc.seed = derive_seed(seed, "attacker");
                tc.init = cfg.attacker_init;
                tc.max_em_iters = cfg.max_em_iters;
                tc.optimizer = cfg.optimizer;
                attacker = train_srnn(run.attacker_set, tc);
            }
        }

        std::size_t cell = 0;
        for (const auto& attack : cfg.attacks)
            for (double frac : cfg.budget_fracs) {
                const std::size_t budget = budget_from_fraction(frac, run.train.size());
                if (frac > 0.0 && budget == 0) {
                    const std::string w = "budget fraction " + format_double(frac) + " gives no flips";
                    if (warned.insert(w).second) report.warnings.push_back(w);
                }
                const std::uint64_t attack_seed = derive_seed(seed, "attack-" + attack);
                AttackPlan plan;
                plan.budget = budget;
                if (attack == "modality")
                    plan = craft_modality_attack(run.train, attacker, budget, cfg.select, attack_seed);
                else if (attack == "ncar")
                    plan = ncar_attack(run.train, budget, attack_seed);
                else if (attack == "component")
                    plan = component_flip_attack(run.train, cfg.flip_components, budget, attack_seed);
                else if (attack == "nnar")
                    plan = nnar_attack(run.train, budget, std::min(cfg.nnar_k, run.train.size() - 1), attack_seed);
                const Dataset poisoned = apply_attack(run.train, plan);
                const auto flipped = flipped_indices(poisoned);

                const std::size_t per_budget = [&] {
                    std::size_t n = 0;
                    for (const auto& m : cfg.models) n += uses_k(m) ? cfg.k_values.size() : 1;
                    return n;
                }();
                for (std::size_t c = cell; c < cell + per_budget; ++c) {
                    Cell& out = report.cells[c];
                    const auto t0 = std::chrono::steady_clock::now();
                    const auto m = measure(cfg, out.model, out.k, poisoned, run, flipped, seed);
                    const auto t1 = std::chrono::steady_clock::now();
                    out.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
                    out.budget.push_back(budget);
                    out.flips_used.push_back(plan.flips.size());
                    acc[c].test.push_back(m.test_error);
                    acc[c].train.push_back(m.train_error);
                    if (m.val_error) acc[c].val.push_back(*m.val_error);
                    if (m.detection) {
                        acc[c].recall.push_back(m.detection->recall);
                        acc[c].tp.push_back(m.detection->tp_ratio);
                        out.vacuous_runs += m.detection->vacuous;
                    }
                    if (out.model == "rsrnn") out.cutoff.push_back(m.cutoff);
                }
                cell += per_budget;
            }
    }

    for (std::size_t c = 0; c < report.cells.size(); ++c) {
        Cell& out = report.cells[c];
        out.test_error = summarize(acc[c].test);
        out.train_error = summarize(acc[c].train);
        if (out.model == "rsrnn") {
            out.val_error = summarize(acc[c].val);
            out.recall = summarize(acc[c].recall);
            out.tp_ratio = summarize(acc[c].tp);
        }
    }
    return report;
}

nlohmann::json report_to_json(const ExperimentReport& report)
{
    nlohmann::json doc;
    doc["config"] = report.config;
    doc["config_hash"] = report.config_hash;
    doc["seed"] = report.seed;
    doc["run_seeds"] = report.run_seeds;
    auto cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
        nlohmann::json j;
        j["attack"] = c.attack;
        j["budget_frac"] = c.budget_frac;
        j["model"] = c.model;
        j["k"] = c.k;
        j["budget"] = c.budget;
        j["flips_used"] = c.flips_used;
        j["test_error"] = stat_json(c.test_error);
        j["train_error"] = stat_json(c.train_error);
        if (c.val_error) j["val_error"] = stat_json(*c.val_error);
        if (c.recall) j["recall"] = stat_json(*c.recall);
        if (c.tp_ratio) {
            j["tp_ratio"] = stat_json(*c.tp_ratio);
            j["vacuous_runs"] = c.vacuous_runs;
            auto cut = nlohmann::json::array();
            for (const auto& v : c.cutoff) cut.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
            j["cutoff"] = cut;
        }
        cells.push_back(std::move(j));
    }
    doc["cells"] = std::move(cells);
    doc["warnings"] = report.warnings;
    return doc;
}

std::string report_to_csv(const ExperimentReport& report)
{
    std::ostringstream out;
    out << "attack,budget_frac,model,k,runs,budget_mean,flips_used_max,test_error_mean,test_error_sd,"
           "train_error_mean,train_error_sd,val_error_mean,recall_mean,recall_sd,tp_ratio_mean,tp_ratio_sd,"
           "vacuous_runs\n";
    for (const auto& c : report.cells) {
        double budget_mean = 0.0;
        for (std::size_t b : c.budget) budget_mean += static_cast<double>(b);
        if (!c.budget.empty()) budget_mean /= static_cast<double>(c.budget.size());
        const std::size_t flips_max =
            c.flips_used.empty() ? 0 : *std::max_element(c.flips_used.begin(), c.flips_used.end());
        out << c.attack << ',' << csv_number(c.budget_frac) << ',' << c.model << ',' << c.k << ','
            << c.test_error.values.size() << ',' << csv_number(budget_mean) << ',' << flips_max << ','
            << csv_number(c.test_error.mean) << ',' << csv_number(c.test_error.sd) << ','
            << csv_number(c.train_error.mean) << ',' << csv_number(c.train_error.sd) << ',';
        if (c.val_error) out << csv_number(c.val_error->mean);
        out << ',';
        if (c.recall) out << csv_number(c.recall->mean) << ',' << csv_number(c.recall->sd);
        else out << ',';
        out << ',';
        if (c.tp_ratio) out << csv_number(c.tp_ratio->mean) << ',' << csv_number(c.tp_ratio->sd) << ',' << c.vacuous_runs;
        else out << ",,";
        out << '\n';
    }
    return out.str();
}

nlohmann::json timings_to_json(const ExperimentReport& report)
{
    auto cells = nlohmann::json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"attack", c.attack},
                         {"budget_frac", c.budget_frac},
                         {"model", c.model},
                         {"k", c.k},
                         {"seconds", c.seconds}});
    return {{"config_hash", report.config_hash}, {"seed", report.seed}, {"cells", cells}};
}

std::string report_basename(const ExperimentReport& report)
{
    return "report_" + report.config_hash + "_s" + std::to_string(report.seed);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("line fit needs >= 2 paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("line fit needs distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

ScalingResult scaling_probe(const MixtureSpec& templ, std::span<const std::size_t> sizes, const ScalingOptions& options)
{
    if (sizes.size() < 4) throw std::invalid_argument("scaling probe needs at least 4 sizes");
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    if (*lo == 0 || *hi < 16 * *lo) throw std::invalid_argument("scaling probe sizes must span a factor of 16");
    templ.validate();
    if (options.batches < 1) throw std::invalid_argument("scaling probe needs >= 1 batch");

    std::size_t total = 0;
    for (const auto& c : templ.components) total += c.count;

    using clock = std::chrono::steady_clock;
    ScalingResult res;
    for (std::size_t n : sizes) {
        MixtureSpec spec = templ;
        spec.seed = derive_seed(options.seed, "scaling-" + std::to_string(n));
        std::size_t assigned = 0;
        for (auto& c : spec.components) {
            c.count = std::max<std::size_t>(1, c.count * n / total);
            assigned += c.count;
        }
        if (assigned < n) spec.components.front().count += n - assigned;
        const Dataset ds = gen_mixture(spec);
        const SrnnModel attacker = init_srnn(ds, std::min(options.attacker_k, ds.size()), spec.seed);
        const std::size_t budget = budget_from_fraction(options.budget_frac, ds.size());

        std::size_t reps = 1;
        std::size_t sink = 0;
        auto batch = [&](std::size_t count) {
            const auto t0 = clock::now();
            for (std::size_t t = 0; t < count; ++t)
                sink += craft_modality_attack(ds, attacker, budget, SelectMethod::Greedy, spec.seed).flips.size();
            return std::chrono::duration<double>(clock::now() - t0).count();
        };
        while (batch(reps) < options.min_batch_seconds && reps < (1u << 20)) reps *= 2;
        std::vector<double> means;
        for (std::size_t b = 0; b < options.batches; ++b) means.push_back(batch(reps) / static_cast<double>(reps));
        const Stat s = summarize(means);
        res.sizes.push_back(n);
        res.seconds.push_back(*std::min_element(means.begin(), means.end()));
        res.cv.push_back(s.mean > 0.0 ? s.sd / s.mean : 0.0);
        timing_sink = sink;
    }
    std::vector<double> xs(res.sizes.begin(), res.sizes.end());
    const auto fit = fit_line(xs, res.seconds);
    res.slope = fit.slope;
    res.intercept = fit.intercept;
    res.r2 = fit.r2;
    return res;
}

}  // namespace flipguard
