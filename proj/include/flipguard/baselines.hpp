#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "flipguard/data.hpp"
#include "flipguard/srnn.hpp"

namespace flipguard {

enum class LabelSource { Trainset, Validationset };

std::string to_string(LabelSource source);

// Unsupervised k-means on features; centroid labels are filled in afterwards
// from whichever labeled set is supplied.
struct KmeansClassifier {
    SrnnModel model;
    LabelSource label_source = LabelSource::Trainset;
    std::size_t lloyd_iterations = 0;
};

// Relabels every centroid with the mode of `label_set` samples assigned to it;
// centroids that receive none get class 0.
void relabel_by_mode(SrnnModel& model, const Dataset& label_set);

KmeansClassifier train_kmeans_classifier(const Dataset& train, const Dataset& label_set, std::size_t k,
                                         std::uint64_t seed, LabelSource source = LabelSource::Trainset,
                                         const KmeansOptions& options = {});

struct KnnClassifier {
    Dataset samples;
    std::size_t k = 1;

    void validate() const;
};

KnnClassifier make_knn(const Dataset& train, std::size_t k);
// 1-NN over `count` samples drawn without replacement.
KnnClassifier make_random_nn(const Dataset& train, std::size_t count, std::uint64_t seed);

int knn_predict(const KnnClassifier& model, std::span<const double> x);
std::size_t knn_error_count(const KnnClassifier& model, const Dataset& ds);
double knn_error_ratio(const KnnClassifier& model, const Dataset& ds);

nlohmann::json kmeans_to_json(const KmeansClassifier& model);
KmeansClassifier kmeans_from_json(const nlohmann::json& doc);
nlohmann::json knn_to_json(const KnnClassifier& model);
KnnClassifier knn_from_json(const nlohmann::json& doc);

}  // namespace flipguard
