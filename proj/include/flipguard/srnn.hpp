#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flipguard/data.hpp"

namespace flipguard {

class Rng;

double distance(std::span<const double> a, std::span<const double> b);

// K labeled prototypes; prediction is the label of the nearest one.
struct SrnnModel {
    std::vector<double> centroids;  // K x D, row-major
    std::size_t dims = 0;
    std::vector<int> labels;
    int class_count = 0;
    std::vector<std::string> label_names;

    std::size_t size() const { return labels.size(); }
    std::span<const double> centroid(std::size_t j) const
    {
        return {centroids.data() + j * dims, dims};
    }
    std::span<double> centroid(std::size_t j) { return {centroids.data() + j * dims, dims}; }

    void validate() const;
};

struct Assignment {
    std::vector<std::size_t> owner;
    std::vector<double> distance;
};

// Nearest centroid by Euclidean distance, lowest index on ties.
std::size_t nearest_centroid(const SrnnModel& model, std::span<const double> x, double* dist = nullptr);
Assignment assign(const Dataset& ds, const SrnnModel& model);

// Most frequent label, lowest class id on ties; nullopt for no samples.
std::optional<int> mode_label(std::span<const int> labels, int class_count);

// Options for the surrogate centroid optimizer shared by the SRNN and RSRNN trainers.
struct SurrogateOptions {
    std::vector<double> mu_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t sgd_epochs = 50;
    double sgd_step = 0.1;
};

// KMeansPlusPlus places centroids on k-means++ seeds; KMeans runs Lloyd
// iterations from those seeds first.
enum class InitMethod { KMeansPlusPlus, KMeans };

std::string to_string(InitMethod method);
InitMethod parse_init_method(const std::string& text);

struct TrainConfig {
    std::size_t k = 8;
    std::size_t max_em_iters = 100;
    std::uint64_t seed = 0;
    InitMethod init = InitMethod::KMeansPlusPlus;
    SurrogateOptions optimizer;
};

struct TrainTrace {
    // Training objective after initialization and after every EM iteration.
    std::vector<double> objective;
    std::size_t iterations = 0;
    bool converged = false;
};

// k-means++ seeding over features only. Returns K distinct sample indices when
// the data has at least K distinct points.
std::vector<std::size_t> kmeanspp_seeds(const Dataset& ds, std::size_t k, Rng& rng);

struct KmeansOptions {
    std::size_t max_iters = 300;
    // Independent k-means++ starts; the lowest within-cluster sum of squares wins.
    std::size_t restarts = 10;
};

// Lloyd iterations from k-means++ seeds until assignments stop changing (or
// max_iters). An empty cluster keeps its previous position.
SrnnModel kmeans_centroids(const Dataset& train, std::size_t k, std::uint64_t seed, const KmeansOptions& options = {},
                           std::size_t* iterations = nullptr);

// Seeds via k-means++ and labels each centroid with the mode of its cluster
// (lowest class id for an empty cluster).
SrnnModel init_srnn(const Dataset& train, std::size_t k, std::uint64_t seed,
                    InitMethod method = InitMethod::KMeansPlusPlus);

SrnnModel train_srnn(const Dataset& train, const TrainConfig& cfg, TrainTrace* trace = nullptr);
// EM from a supplied initial model; labels of `initial` are recomputed.
SrnnModel fit_srnn(const Dataset& train, SrnnModel initial, const TrainConfig& cfg,
                   TrainTrace* trace = nullptr);

int predict(const SrnnModel& model, std::span<const double> x);
std::size_t error_count(const SrnnModel& model, const Dataset& ds);
double error_ratio(const SrnnModel& model, const Dataset& ds);

// Eq.-1 style 0-1 training loss of the nearest-centroid rule.
std::size_t srnn_loss(const SrnnModel& model, const Dataset& ds);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json srnn_to_json(const SrnnModel& model);
SrnnModel srnn_from_json(const nlohmann::json& doc);
void save_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace flipguard
