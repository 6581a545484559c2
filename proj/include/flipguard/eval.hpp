#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flipguard/attack.hpp"
#include "flipguard/data.hpp"
#include "flipguard/defense.hpp"

namespace flipguard {

struct DetectionMetrics {
    double recall = 0.0;
    double tp_ratio = 1.0;
    std::size_t hits = 0;
    std::size_t detected = 0;
    std::size_t truth = 0;
    bool vacuous = false;  // nothing detected, tp_ratio defined as 1
};

DetectionMetrics detection_metrics(std::span<const std::size_t> detected, std::span<const std::size_t> truth);

// floor(fraction * n_train); fractions outside [0, 1] are rejected.
std::size_t budget_from_fraction(double fraction, std::size_t n_train);

// Desk-scale benchmark: 2-D, 8 components, 5 classes; two minority
// components of 5% mass each sit next to a larger component of the same class.
MixtureSpec benchmark_mixture(std::size_t n, std::uint64_t seed);

// Fractions (train, val, test) for the two experiment setups.
SplitSpec setup_split(int setup, std::uint64_t seed);

struct ExperimentConfig {
    // Data source: a CSV file when csv_path is set, otherwise the mixture
    // (regenerated for every run with the run seed).
    std::string csv_path;
    CsvOptions csv;
    MixtureSpec mixture = benchmark_mixture(10000, 0);
    bool standardize = true;

    int setup = 1;
    std::vector<std::string> attacks = {"none", "modality", "ncar", "nnar"};
    std::vector<double> budget_fracs = {0.1};
    std::vector<std::string> models = {"srnn", "rsrnn", "kmeans", "knn"};
    std::vector<std::size_t> k_values = {8};

    // "srnn" trains the attacker's SRNN; "oracle" uses the generating
    // component means (mixture sources only).
    std::string attacker = "srnn";
    std::size_t attacker_k = 8;
    InitMethod attacker_init = InitMethod::KMeansPlusPlus;
    SelectMethod select = SelectMethod::Greedy;
    std::size_t nnar_k = 10;
    // Ground-truth components flipped by the "component" attack.
    std::vector<int> flip_components = {6, 7};
    std::size_t knn_k = 1;

    double lambda = 0.01;
    bool prune = true;
    std::size_t max_em_iters = 100;
    SurrogateOptions optimizer;

    std::uint64_t seed = 0;
    std::size_t runs = 10;

    void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

// Seed of run r; runs are independent given it.
std::uint64_t run_seed(std::uint64_t seed, std::size_t run);

struct Stat {
    double mean = 0.0;
    double sd = 0.0;  // population standard deviation over runs
    std::vector<double> values;
};

Stat summarize(std::vector<double> values);

struct Cell {
    std::string attack;
    double budget_frac = 0.0;
    std::string model;
    std::size_t k = 0;

    std::vector<std::size_t> budget;
    std::vector<std::size_t> flips_used;
    Stat test_error;
    Stat train_error;
    // RSRNN only.
    std::optional<Stat> val_error;
    std::optional<Stat> recall;
    std::optional<Stat> tp_ratio;
    std::vector<std::optional<double>> cutoff;
    std::size_t vacuous_runs = 0;

    std::vector<double> seconds;
};

struct ExperimentReport {
    nlohmann::json config;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> run_seeds;
    std::vector<Cell> cells;
    std::vector<std::string> warnings;

    const Cell* find(const std::string& attack, const std::string& model, std::optional<std::size_t> k = {},
                     std::optional<double> budget_frac = {}) const;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Timings are left out so identical configs give identical documents.
nlohmann::json report_to_json(const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);
nlohmann::json timings_to_json(const ExperimentReport& report);
// Base name "report_<hash>_s<seed>".
std::string report_basename(const ExperimentReport& report);

// 16 hex digits of FNV-1a over the text.
std::string fnv1a_hex(const std::string& text);

struct ScalingResult {
    std::vector<std::size_t> sizes;
    std::vector<double> seconds;  // best batch mean per size
    std::vector<double> cv;       // coefficient of variation of batch means
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

struct ScalingOptions {
    std::size_t attacker_k = 8;
    InitMethod attacker_init = InitMethod::KMeansPlusPlus;
    double budget_frac = 0.1;
    std::size_t batches = 5;
    double min_batch_seconds = 0.005;
    std::uint64_t seed = 0;
};

// Times craft_modality_attack (attacker model built beforehand) at each size;
// the template's component counts are rescaled to each N. Needs >= 4 sizes
// spanning at least a factor of 16.
ScalingResult scaling_probe(const MixtureSpec& templ, std::span<const std::size_t> sizes,
                            const ScalingOptions& options = {});

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace flipguard
