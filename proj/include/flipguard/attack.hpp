#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flipguard/data.hpp"
#include "flipguard/srnn.hpp"

namespace flipguard {

enum class AttackKind { Modality, Ncar, Nnar, Component };
enum class SelectMethod { Greedy, Exact };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);
std::string to_string(SelectMethod method);
SelectMethod parse_select_method(const std::string& text);

struct Flip {
    std::size_t index = 0;
    int old_label = 0;
    int new_label = 0;
    int cluster = -1;  // attacker cluster for modality flips, -1 otherwise
};

struct AttackPlan {
    AttackKind kind = AttackKind::Modality;
    std::vector<Flip> flips;
    std::map<int, std::size_t> per_cluster_cost;
    std::vector<int> selected_clusters;
    std::size_t budget = 0;
    std::uint64_t seed = 0;

    std::size_t selected_cost() const;
    // Throws std::invalid_argument if the plan breaks its budget or flip invariants for `ds`.
    void validate(const Dataset& ds) const;
};

// Flips needed to overturn a cluster's majority: floor(n/2) + 1.
std::size_t cluster_flip_cost(std::size_t cluster_size);

// Subset of clusters whose total cost stays strictly below `budget`.
// Greedy walks costs ascending (ties by id) and stops at the first one that
// does not fit; Exact maximizes the total by dynamic programming.
std::vector<int> select_clusters(const std::map<int, std::size_t>& costs, std::size_t budget, SelectMethod method);

AttackPlan craft_modality_attack(const Dataset& train, const SrnnModel& attacker, std::size_t budget,
                                 SelectMethod method, std::uint64_t seed);

AttackPlan ncar_attack(const Dataset& train, std::size_t budget, std::uint64_t seed);

struct NnarScore {
    double confidence = 0.0;
    int target = 0;
};
// Per-sample k-NN vote confidence and flip target (ties by class id; a
// neighborhood with no other class present gets a random other class).
std::vector<NnarScore> nnar_scores(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed);
AttackPlan nnar_attack(const Dataset& train, std::size_t budget, std::size_t k_neighbors, std::uint64_t seed);

// Flips every sample of the listed ground-truth components to (label + 1) mod M,
// at most `budget` of them (a seeded uniform subset when the budget is short).
// Needs truth.cluster_id.
AttackPlan component_flip_attack(const Dataset& train, std::span<const int> components, std::size_t budget,
                                 std::uint64_t seed);

// Poisoned copy with truth.original_labels holding the pre-flip labels.
Dataset apply_attack(const Dataset& ds, const AttackPlan& plan);
// Indices whose label differs from truth.original_labels.
std::vector<std::size_t> flipped_indices(const Dataset& poisoned);

struct TheoremCheck {
    std::size_t errors_before = 0;
    std::size_t errors_after = 0;
    long long delta_error = 0;
    std::size_t bound = 0;
    bool holds = true;
};

// With centroids frozen, relabels by cluster mode on clean and on poisoned
// labels and compares errors on the clean labels against 2 x selected cost.
TheoremCheck theorem1_check(const Dataset& train, const SrnnModel& attacker, const AttackPlan& plan);

std::string plan_to_csv(const AttackPlan& plan);
nlohmann::json plan_summary_json(const AttackPlan& plan);
// Rebuilds a plan from its CSV rows and JSON summary.
AttackPlan plan_from_files(const std::string& csv_text, const nlohmann::json& summary);

}  // namespace flipguard
