#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "flipguard/attack.hpp"
#include "flipguard/baselines.hpp"
#include "flipguard/config.hpp"
#include "flipguard/data.hpp"
#include "flipguard/defense.hpp"
#include "flipguard/eval.hpp"
#include "flipguard/rng.hpp"
#include "flipguard/srnn.hpp"

namespace fs = std::filesystem;
using namespace flipguard;

namespace {

// Flags of one subcommand, each bound to a config key.
struct Command {
    Command(CLI::App& root, const std::string& name, const std::string& help)
    {
        app = root.add_subcommand(name, help);
        app->add_option("--config", config_path, "key = value settings file");
        app->add_option("--set", sets, "extra key=value setting (repeatable)");
    }
    Command(const Command&) = delete;
    Command& operator=(const Command&) = delete;

    CLI::App* app = nullptr;
    std::string config_path;
    std::vector<std::string> sets;
    std::deque<std::pair<std::string, std::string>> bound;  // key, raw value
    std::vector<std::pair<CLI::Option*, std::size_t>> options;

    void flag(const std::string& name, const std::string& key, const std::string& help)
    {
        bound.emplace_back(key, std::string());
        options.emplace_back(app->add_option(name, bound.back().second, help), bound.size() - 1);
    }

    // Config file first, then --set pairs, then named flags.
    RunConfig resolve() const
    {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        RunConfig over;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            over.set(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [opt, idx] : options)
            if (opt->count() > 0) over.set(bound[idx].first, bound[idx].second);
        cfg.merge(over);
        return cfg;
    }
};

void add_common(Command& c)
{
    c.flag("--seed", "seed", "random seed");
    c.flag("--out", "out", "output directory");
}

CsvOptions csv_options(const RunConfig& cfg, std::vector<std::string> known = {})
{
    CsvOptions o;
    const std::string col = cfg.text("label_column", "label");
    if (!col.empty() && col.find_first_not_of("0123456789") == std::string::npos)
        o.label_column = static_cast<std::size_t>(std::stoull(col));
    else
        o.label_column = col;
    o.has_header = cfg.flag("has_header", true);
    o.known_labels = std::move(known);
    return o;
}

fs::path sidecar_path(const fs::path& csv)
{
    return csv.parent_path() / (csv.stem().string() + "_truth.csv");
}

// Loads a CSV and attaches its truth sidecar: the explicit one, or
// "<stem>_truth.csv" next to the file when it exists.
Dataset load_input(const RunConfig& cfg, const std::string& key, std::vector<std::string> known,
                   const std::string& truth_key = "")
{
    const fs::path path = cfg.require(key);
    Dataset ds = load_csv(path, csv_options(cfg, std::move(known)));
    fs::path truth;
    if (!truth_key.empty() && cfg.has(truth_key))
        truth = cfg.text(truth_key, "");
    else if (fs::exists(sidecar_path(path)))
        truth = sidecar_path(path);
    if (!truth.empty()) ds = ds.with_truth(load_truth_csv(truth, ds));
    return ds;
}

fs::path out_dir(const RunConfig& cfg)
{
    fs::path dir = cfg.text("out", ".");
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::size_t single_k(const RunConfig& cfg, std::size_t fallback)
{
    const auto ks = cfg.uint_list("k", {fallback});
    if (ks.size() != 1) throw ConfigError("this command takes a single k");
    return ks.front();
}

double single_budget(const RunConfig& cfg)
{
    const auto fr = cfg.real_list("budget_frac", {0.1});
    if (fr.size() != 1) throw ConfigError("this command takes a single budget_frac");
    return fr.front();
}

SurrogateOptions optimizer_from(const RunConfig& cfg)
{
    SurrogateOptions o;
    o.mu_grid = cfg.real_list("mu_grid", o.mu_grid);
    o.sgd_epochs = cfg.uint("sgd_epochs", o.sgd_epochs);
    o.sgd_step = cfg.real("sgd_step", o.sgd_step);
    return o;
}

std::string ratio(double r)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", r);
    return buf;
}

// Nearest-prototype view of any stored model kind.
struct LoadedModel {
    std::string kind;
    SrnnModel srnn;
    RsrnnModel rsrnn;
    KnnClassifier knn;

    const std::vector<std::string>& label_names() const
    {
        if (kind == "knn") return knn.samples.label_names();
        if (kind == "rsrnn") return rsrnn.base.label_names;
        return srnn.label_names;
    }
    double error(const Dataset& ds) const
    {
        if (kind == "knn") return knn_error_ratio(knn, ds);
        if (kind == "rsrnn") return rsrnn_error_ratio(rsrnn, ds);
        return error_ratio(srnn, ds);
    }
};

LoadedModel load_model(const fs::path& path)
{
    const auto doc = load_json(path);
    LoadedModel m;
    m.kind = doc.value("kind", std::string("srnn"));
    if (m.kind == "srnn")
        m.srnn = srnn_from_json(doc);
    else if (m.kind == "kmeans")
        m.srnn = kmeans_from_json(doc).model;
    else if (m.kind == "rsrnn")
        m.rsrnn = rsrnn_from_json(doc);
    else if (m.kind == "knn")
        m.knn = knn_from_json(doc);
    else
        throw DataError(path.string() + ": unknown model kind '" + m.kind + "'");
    return m;
}

void echo(const RunConfig& cfg, const fs::path& dir, const std::string& name)
{
    write_text(dir / (name + ".cfg"), cfg.to_text());
}

int cmd_generate(RunConfig cfg)
{
    if (!cfg.has("seed")) cfg.set("seed", "0");
    const fs::path dir = out_dir(cfg);
    const Dataset ds = gen_mixture(mixture_from_config(cfg));
    write_csv(ds, dir / "data.csv");
    write_truth_csv(ds, dir / "data_truth.csv");
    std::string extra;
    if (cfg.has("setup") || cfg.has("split")) {
        SplitSpec spec = setup_split(static_cast<int>(cfg.uint("setup", 1)), derive_seed(cfg.uint("seed", 0), "split"));
        if (cfg.has("split")) {
            const auto f = cfg.real_list("split", {});
            if (f.size() != 3) throw ConfigError("split takes three fractions");
            spec.train_fraction = f[0];
            spec.val_fraction = f[1];
            spec.test_fraction = f[2];
        }
        auto parts = split(ds, spec);
        if (cfg.flag("standardize", true)) {
            auto st = standardize(parts.train);
            parts.val = st.scaler.apply(parts.val);
            parts.test = st.scaler.apply(parts.test);
            parts.train = std::move(st.transformed);
            nlohmann::json sc;
            sc["mean"] = st.scaler.mean;
            sc["scale"] = st.scaler.scale;
            save_json(sc, dir / "scaler.json");
        }
        for (const auto& [name, part] : {std::pair<std::string, const Dataset*>{"train", &parts.train},
                                         {"val", &parts.val},
                                         {"test", &parts.test}}) {
            write_csv(*part, dir / (name + ".csv"));
            write_truth_csv(*part, dir / (name + "_truth.csv"));
        }
        extra = ", split " + std::to_string(parts.train.size()) + "/" + std::to_string(parts.val.size()) + "/" +
                std::to_string(parts.test.size());
    }
    echo(cfg, dir, "generate");
    std::cout << "generated " << ds.size() << " samples, " << ds.dims() << " dims, " << ds.class_count()
              << " classes" << extra << " -> " << dir.string() << "\n";
    return 0;
}

int cmd_train(RunConfig cfg)
{
    if (!cfg.has("seed")) cfg.set("seed", "0");
    if (!cfg.has("kind")) cfg.set("kind", "srnn");
    const std::string kind = cfg.text("kind", "srnn");
    const Dataset train = load_input(cfg, "in", {});
    const std::uint64_t seed = cfg.uint("seed", 0);
    const fs::path dir = out_dir(cfg);
    nlohmann::json doc;
    double train_err = 0.0;
    std::string shape;
    if (kind == "srnn") {
        TrainConfig tc;
        tc.k = single_k(cfg, tc.k);
        tc.seed = seed;
        tc.max_em_iters = cfg.uint("max_em_iters", tc.max_em_iters);
        tc.init = parse_init_method(cfg.text("init", to_string(tc.init)));
        tc.optimizer = optimizer_from(cfg);
        TrainTrace trace;
        const auto m = train_srnn(train, tc, &trace);
        doc = srnn_to_json(m);
        train_err = error_ratio(m, train);
        shape = "K=" + std::to_string(tc.k) + ", " + std::to_string(trace.iterations) + " EM iterations";
    } else if (kind == "kmeans") {
        const std::string source = cfg.text("label_source", "trainset");
        const bool val = source == "validationset";
        const Dataset label_set = val ? load_input(cfg, "val", train.label_names()) : train;
        const std::size_t k = single_k(cfg, 8);
        const auto c = train_kmeans_classifier(train, label_set, k, seed,
                                               val ? LabelSource::Validationset : LabelSource::Trainset);
        doc = kmeans_to_json(c);
        train_err = error_ratio(c.model, train);
        shape = "K=" + std::to_string(k) + ", labels from " + source;
    } else if (kind == "knn") {
        const auto c = make_knn(train, cfg.uint("knn_k", 1));
        doc = knn_to_json(c);
        train_err = knn_error_ratio(c, train);
        shape = "k=" + std::to_string(c.k);
    } else {
        const auto c = make_random_nn(train, cfg.uint("rnn_count", single_k(cfg, 8)), seed);
        doc = knn_to_json(c);
        train_err = knn_error_ratio(c, train);
        shape = std::to_string(c.samples.size()) + " random prototypes";
    }
    save_json(doc, dir / "model.json");
    echo(cfg, dir, "train");
    std::cout << "trained " << kind << " (" << shape << "), train error " << ratio(train_err) << " -> "
              << (dir / "model.json").string() << "\n";
    return 0;
}

int cmd_attack(RunConfig cfg)
{
    if (!cfg.has("seed")) cfg.set("seed", "0");
    if (!cfg.has("attack")) cfg.set("attack", "modality");
    if (!cfg.has("budget_frac")) cfg.set("budget_frac", "0.1");
    const auto kinds = cfg.text_list("attack", {});
    if (kinds.size() != 1 || kinds.front() == "none") throw ConfigError("attack takes one attack kind");
    const AttackKind kind = parse_attack_kind(kinds.front());

    // --out may name the plan file itself.
    fs::path dir = cfg.text("out", ".");
    fs::path plan_path = dir / "plan.csv";
    if (dir.extension() == ".csv") {
        plan_path = dir;
        dir = dir.parent_path().empty() ? fs::path(".") : dir.parent_path();
    }
    fs::create_directories(dir);

    std::optional<LoadedModel> attacker;
    if (kind == AttackKind::Modality) attacker = load_model(cfg.require("attacker"));
    const Dataset train =
        load_input(cfg, "in", attacker ? attacker->label_names() : std::vector<std::string>{}, "truth");
    const std::uint64_t seed = cfg.uint("seed", 0);
    const std::size_t budget = budget_from_fraction(single_budget(cfg), train.size());

    AttackPlan plan;
    switch (kind) {
    case AttackKind::Modality: {
        if (attacker->kind == "knn") throw ConfigError("the modality attack needs a prototype attacker model");
        const SrnnModel& m = attacker->kind == "rsrnn" ? attacker->rsrnn.base : attacker->srnn;
        plan = craft_modality_attack(train, m, budget, parse_select_method(cfg.text("select", "greedy")), seed);
        break;
    }
    case AttackKind::Ncar:
        plan = ncar_attack(train, budget, seed);
        break;
    case AttackKind::Nnar:
        plan = nnar_attack(train, budget, std::min<std::size_t>(cfg.uint("nnar_k", 10), train.size() - 1), seed);
        break;
    case AttackKind::Component: {
        std::vector<int> comps;
        for (std::size_t c : cfg.uint_list("flip_components", {6, 7})) comps.push_back(static_cast<int>(c));
        if (!train.truth().cluster_id) throw DataError("the component attack needs a truth sidecar with cluster ids");
        plan = component_flip_attack(train, comps, budget, seed);
        break;
    }
    }
    plan.validate(train);
    const Dataset poisoned = apply_attack(train, plan);
    write_text(plan_path, plan_to_csv(plan));
    fs::path summary_path = plan_path;
    summary_path.replace_extension(".json");
    save_json(plan_summary_json(plan), summary_path);
    write_csv(poisoned, dir / "poisoned.csv");
    write_truth_csv(poisoned, dir / "poisoned_truth.csv");
    echo(cfg, dir, "attack");
    std::cout << to_string(kind) << " attack: " << plan.flips.size() << " flips of budget " << budget;
    if (kind == AttackKind::Modality)
        std::cout << ", " << plan.selected_clusters.size() << " clusters, cost " << plan.selected_cost();
    std::cout << " -> " << plan_path.string() << "\n";
    return 0;
}

int cmd_defend(RunConfig cfg)
{
    if (!cfg.has("seed")) cfg.set("seed", "0");
    const Dataset train = load_input(cfg, "in", {}, "truth");
    const Dataset val = load_input(cfg, "val", train.label_names());
    DefenseConfig dc;
    dc.k = single_k(cfg, dc.k);
    dc.lambda = cfg.real("lambda", dc.lambda);
    dc.alpha = cfg.real("alpha", dc.alpha);
    dc.optimizer = optimizer_from(cfg);
    dc.max_em_iters = cfg.uint("max_em_iters", dc.max_em_iters);
    dc.prune_grid = cfg.real_list("prune_grid", dc.prune_grid);
    dc.prune_enabled = cfg.flag("prune", dc.prune_enabled);
    dc.infinite_radii = cfg.flag("infinite_radii", dc.infinite_radii);
    dc.seed = cfg.uint("seed", 0);
    const auto r = train_rsrnn(train, val, dc);

    const fs::path dir = out_dir(cfg);
    save_json(rsrnn_to_json(r.model), dir / "rsrnn.json");
    write_text(dir / "detection.csv", detection_to_csv(r.detection));
    write_csv(r.cleaned_train, dir / "cleaned.csv");
    echo(cfg, dir, "defend");
    std::cout << "rsrnn K=" << dc.k << ": " << r.detection.detected.size() << " samples detected, val error "
              << ratio(static_cast<double>(r.val_errors) / static_cast<double>(val.size()));
    if (train.truth().original_labels) {
        const auto m = detection_metrics(r.detection.detected, flipped_indices(train));
        std::cout << ", recall " << ratio(m.recall) << ", tp ratio " << ratio(m.tp_ratio);
    }
    std::cout << " -> " << dir.string() << "\n";
    return 0;
}

std::vector<std::size_t> read_detection(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<std::size_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        const auto comma = line.find(',');
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(line.substr(0, comma))));
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed sample index");
        }
    }
    return out;
}

int cmd_eval(RunConfig cfg)
{
    const LoadedModel model = load_model(cfg.require("model"));
    const Dataset ds = load_input(cfg, "in", model.label_names(), "truth");
    const double err = model.error(ds);
    nlohmann::json doc;
    doc["model_kind"] = model.kind;
    doc["samples"] = ds.size();
    doc["error_ratio"] = err;
    std::cout << model.kind << " error ratio " << ratio(err) << " on " << ds.size() << " samples";
    if (cfg.has("detection")) {
        if (!ds.truth().original_labels) throw DataError("detection metrics need a truth sidecar");
        const auto m = detection_metrics(read_detection(cfg.text("detection", "")), flipped_indices(ds));
        doc["recall"] = m.recall;
        doc["tp_ratio"] = m.tp_ratio;
        doc["detected"] = m.detected;
        doc["flipped"] = m.truth;
        std::cout << ", recall " << ratio(m.recall) << ", tp ratio " << ratio(m.tp_ratio);
    }
    if (cfg.has("out")) {
        const fs::path dir = out_dir(cfg);
        save_json(doc, dir / "eval.json");
        echo(cfg, dir, "eval");
    }
    std::cout << "\n";
    return 0;
}

int cmd_experiment(RunConfig cfg)
{
    if (!cfg.has("seed")) cfg.set("seed", "0");
    const ExperimentConfig ec = experiment_from_config(cfg);
    const auto report = run_experiment(ec);
    const fs::path dir = out_dir(cfg);
    const std::string base = report_basename(report);
    write_text(dir / (base + ".json"), report_to_json(report).dump(2) + "\n");
    write_text(dir / (base + ".csv"), report_to_csv(report));
    write_text(dir / (base + "_timings.json"), timings_to_json(report).dump(2) + "\n");
    echo(cfg, dir, "experiment");
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "experiment: " << report.cells.size() << " cells x " << ec.runs << " runs -> "
              << (dir / (base + ".json")).string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Label-flipping attacks and defenses for prototype nearest-neighbor classifiers"};
    app.require_subcommand(1);

    Command gen(app, "generate", "sample a Gaussian mixture, optionally split it");
    add_common(gen);
    gen.flag("--mixture", "mixture", "\"benchmark\" or a mixture JSON file");
    gen.flag("--n", "n", "benchmark size");
    gen.flag("--setup", "setup", "split setup 1|2");
    gen.flag("--split", "split", "train,val,test fractions");
    gen.flag("--standardize", "standardize", "scale splits by trainset statistics (true|false)");

    Command train(app, "train", "train a classifier");
    add_common(train);
    train.flag("--in", "in", "training CSV");
    train.flag("--val", "val", "validation CSV (kmeans labels from validationset)");
    train.flag("--kind", "kind", "srnn|kmeans|knn|rnn");
    train.flag("--k", "k", "centroid count");
    train.flag("--init", "init", "kmeans++|kmeans");
    train.flag("--knn-k", "knn_k", "k-NN neighbor count");
    train.flag("--label-source", "label_source", "trainset|validationset");
    train.flag("--label-column", "label_column", "label column name or index");

    Command attack(app, "attack", "craft a label-flipping attack");
    add_common(attack);
    attack.flag("--in", "in", "training CSV");
    attack.flag("--truth", "truth", "truth sidecar CSV");
    attack.flag("--attack,--kind", "attack", "modality|ncar|nnar|component");
    attack.flag("--budget-frac", "budget_frac", "budget as a fraction of the trainset");
    attack.flag("--select", "select", "greedy|exact");
    attack.flag("--attacker", "attacker", "attacker model JSON (modality)");
    attack.flag("--nnar-k", "nnar_k", "NNAR neighbor count");
    attack.flag("--flip-components", "flip_components", "components flipped by the component attack");
    attack.flag("--label-column", "label_column", "label column name or index");

    Command defend(app, "defend", "train the RSRNN defense and report detections");
    add_common(defend);
    defend.flag("--in", "in", "possibly poisoned training CSV");
    defend.flag("--val", "val", "clean validation CSV");
    defend.flag("--truth", "truth", "truth sidecar CSV");
    defend.flag("--k", "k", "centroid count");
    defend.flag("--lambda", "lambda", "radius penalty");
    defend.flag("--prune", "prune", "run the pruning step (true|false)");
    defend.flag("--infinite-radii", "infinite_radii", "force infinite radii (true|false)");
    defend.flag("--max-em-iters", "max_em_iters", "EM iteration cap");
    defend.flag("--label-column", "label_column", "label column name or index");

    Command eval(app, "eval", "error ratio of a stored model, detection metrics");
    add_common(eval);
    eval.flag("--model", "model", "model JSON");
    eval.flag("--in", "in", "dataset CSV");
    eval.flag("--truth", "truth", "truth sidecar CSV");
    eval.flag("--detection", "detection", "detection CSV");
    eval.flag("--label-column", "label_column", "label column name or index");

    Command exp(app, "experiment", "run the attack x model experiment grid");
    add_common(exp);
    exp.flag("--setup", "setup", "split setup 1|2");
    exp.flag("--budget-frac", "budget_frac", "budget fraction(s)");
    exp.flag("--k", "k", "centroid count(s)");
    exp.flag("--lambda", "lambda", "radius penalty");
    exp.flag("--attack", "attack", "attack kind(s)");
    exp.flag("--select", "select", "greedy|exact");
    exp.flag("--models", "models", "model list");
    exp.flag("--runs", "runs", "repetitions");
    exp.flag("--in", "in", "dataset CSV instead of the mixture");
    exp.flag("--n", "n", "benchmark size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen.app->parsed()) return cmd_generate(gen.resolve());
        if (train.app->parsed()) return cmd_train(train.resolve());
        if (attack.app->parsed()) return cmd_attack(attack.resolve());
        if (defend.app->parsed()) return cmd_defend(defend.resolve());
        if (eval.app->parsed()) return cmd_eval(eval.resolve());
        if (exp.app->parsed()) return cmd_experiment(exp.resolve());
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
