#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "flipguard/data.hpp"
#include "flipguard/srnn.hpp"

namespace flipguard {

inline constexpr double kInfiniteRadius = std::numeric_limits<double>::infinity();

// Returned by predict_rsrnn when the query lies outside its nearest centroid's
// confidence radius.
inline constexpr int kMalicious = -1;

// SRNN plus a confidence radius per centroid. A sample is in range of its
// nearest centroid j when distance <= radii[j].
struct RsrnnModel {
    SrnnModel base;
    std::vector<double> radii;
    double lambda = 0.0;
    double alpha = 0.0;
    std::optional<double> chosen_cutoff;

    std::size_t size() const { return base.size(); }
    void validate() const;
};

RsrnnModel with_infinite_radii(SrnnModel base);
// Radius of each centroid set to the largest distance among its assigned samples.
RsrnnModel with_covering_radii(SrnnModel base, const Dataset& train);

int predict_rsrnn(const RsrnnModel& model, std::span<const double> x);

// Misclassified or out-of-range samples.
std::size_t rsrnn_loss(const RsrnnModel& model, const Dataset& ds);
// Loss plus lambda times the sum of radii; infinite radii contribute nothing
// when lambda is zero.
double rsrnn_objective(const RsrnnModel& model, const Dataset& ds);
double rsrnn_error_ratio(const RsrnnModel& model, const Dataset& ds);

double gini(std::span<const int> labels, int class_count);

struct RadiusSolution {
    double radius = 0.0;
    double objective = 0.0;
};

// Minimizes (#wrong with d <= r) + (#d > r) + lambda * r over r >= 0 by a
// sorted sweep; the smallest minimizing candidate is returned.
RadiusSolution optimal_radius(std::span<const double> distances, std::span<const std::uint8_t> wrong,
                              double lambda);

struct AssignmentStepResult {
    Assignment assignment;
    std::vector<int> labels;
    std::vector<std::size_t> reseeded;
};

// Nearest-centroid clusters and in-range mode labels (falling back to the mode
// of the whole cluster). Empty clusters are re-seeded at the sample farthest
// from its owner when that does not raise the training objective.
AssignmentStepResult assignment_step(const Dataset& train, RsrnnModel& model);

// Nearest and second-nearest centroid of every sample; the rival of centroid
// j is the nearest centroid other than j.
class RivalCache {
public:
    RivalCache(const Dataset& train, const RsrnnModel& model);
    void refresh(const Dataset& train, const RsrnnModel& model);

    std::size_t rival(std::size_t i, std::size_t j) const { return best_[i] == j ? second_[i] : best_[i]; }
    double rival_distance(std::size_t i, std::size_t j) const
    {
        return best_[i] == j ? second_dist_[i] : best_dist_[i];
    }
    std::size_t owner(std::size_t i) const { return best_[i]; }
    double owner_distance(std::size_t i) const { return best_dist_[i]; }

private:
    std::vector<std::size_t> best_, second_;
    std::vector<double> best_dist_, second_dist_;
};

enum class ScenarioRole { Ignored, Pull, Push };

// Update-step scenario table: a sample wrong at j but right and in range
// elsewhere is pushed away; a sample right at j that would otherwise be
// wrong or flagged is pulled in; everything else is ignored.
ScenarioRole scenario_role(bool wrong_at_j, bool wrong_at_rival, bool rival_malicious);
// Row number 1..8 of the scenario table for the three factors.
int scenario_row(bool wrong_at_j, bool wrong_at_rival, bool rival_malicious);

struct ScenarioSets {
    std::vector<std::size_t> s_star;
    std::vector<double> s_star_distance;
    std::vector<std::size_t> s_c_star;
    std::vector<double> s_c_star_distance;
    std::vector<double> rival_distance;
};

// Throws std::invalid_argument when the model has a single centroid.
ScenarioSets classify_scenarios(const Dataset& train, const RsrnnModel& model, std::size_t j,
                                const RivalCache& rivals);

// Points of the pull and push sets, detached from the dataset.
struct SurrogateProblem {
    std::size_t dims = 0;
    std::vector<double> pull;  // n_pull x D
    std::vector<double> push;  // n_push x D
    std::vector<double> push_rival;

    static SurrogateProblem from_sets(const Dataset& train, const ScenarioSets& sets);
    std::size_t pull_count() const { return dims ? pull.size() / dims : 0; }
    std::size_t push_count() const { return dims ? push.size() / dims : 0; }
};

struct SurrogateEval {
    double value = 0.0;
    std::vector<double> gradient;
};

// sum_pull min(|c-x|, r) + sum_push relu(mu * rival - |c-x|) and its subgradient.
SurrogateEval surrogate_value_and_gradient(std::span<const double> centroid,
                                           const SurrogateProblem& problem, double mu, double radius);

// Training loss when centroid j is moved to `position` and everything else is held fixed.
std::size_t centroid_loss(const Dataset& train, const RsrnnModel& model, std::size_t j,
                          const RivalCache& rivals, std::span<const double> position);

struct CentroidUpdate {
    std::vector<double> position;
    bool accepted = false;
    std::size_t loss_before = 0;
    std::size_t loss_after = 0;
};

CentroidUpdate update_centroid(const Dataset& train, const RsrnnModel& model, std::size_t j,
                               const RivalCache& rivals, const SurrogateOptions& options);

struct EmOptions {
    SurrogateOptions optimizer;
    std::size_t max_em_iters = 100;
    bool optimize_radii = true;
};

// Alternates assignment and update steps until an iteration changes nothing
// or max_em_iters is reached. The objective never increases.
RsrnnModel run_em(const Dataset& train, RsrnnModel model, const EmOptions& options,
                  TrainTrace* trace = nullptr);

struct DefenseConfig {
    std::size_t k = 30;
    double lambda = 0.01;
    double alpha = 0.0;
    SurrogateOptions optimizer;
    std::size_t max_em_iters = 100;
    std::vector<double> prune_grid = default_prune_grid();
    bool prune_enabled = true;
    // Forces every radius to infinity and skips the radius solver.
    bool infinite_radii = false;
    std::uint64_t seed = 0;

    static std::vector<double> default_prune_grid();
    void validate() const;
};

struct DetectionResult {
    std::vector<std::size_t> pruned_samples;
    std::vector<std::size_t> out_of_range_samples;
    std::vector<std::size_t> detected;
};

// Out-of-range samples of `model` on `train` merged with `pruned`.
DetectionResult make_detection(const RsrnnModel& model, const Dataset& train,
                               std::vector<std::size_t> pruned);

struct PruneCandidate {
    std::optional<double> cutoff;  // nullopt: no pruning
    bool feasible = true;
    std::size_t pruned_centroids = 0;
    std::size_t removed_samples = 0;
    std::size_t val_errors = 0;
};

struct PruneResult {
    RsrnnModel model;
    std::optional<double> cutoff;
    std::vector<std::size_t> pruned_centroids;
    std::vector<std::size_t> pruned_samples;
    std::vector<std::size_t> kept_samples;
    Dataset cleaned_train;
    std::size_t val_errors_before = 0;
    std::size_t val_errors_after = 0;
    std::vector<PruneCandidate> candidates;
};

// Removes impure centroids and their samples at the cut-off with the fewest
// validation errors; Malicious predictions count as errors.
PruneResult prune(const RsrnnModel& model, const Dataset& train, const Dataset& val,
                  const DefenseConfig& cfg);

enum class RetrainChoice { None, Continue, Restart };

struct DefenseResult {
    RsrnnModel model;
    DetectionResult detection;
    Dataset cleaned_train;
    std::vector<std::size_t> kept_samples;
    TrainTrace trace;
    std::optional<PruneResult> pruning;
    RetrainChoice retrain = RetrainChoice::None;
    std::size_t val_errors = 0;
};

DefenseResult train_rsrnn(const Dataset& train, const Dataset& val, const DefenseConfig& cfg);

nlohmann::json rsrnn_to_json(const RsrnnModel& model);
RsrnnModel rsrnn_from_json(const nlohmann::json& doc);

std::string detection_to_csv(const DetectionResult& detection);

}  // namespace flipguard
