#include "flipguard/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "flipguard/rng.hpp"

namespace flipguard {

std::string to_string(LabelSource source)
{
    return source == LabelSource::Trainset ? "trainset" : "validationset";
}

void relabel_by_mode(SrnnModel& model, const Dataset& label_set)
{
    if (label_set.dims() != model.dims) throw std::invalid_argument("dimension mismatch between label set and model");
    std::vector<std::vector<std::size_t>> counts(model.size(),
                                                 std::vector<std::size_t>(static_cast<std::size_t>(model.class_count)));
    for (std::size_t i = 0; i < label_set.size(); ++i) {
        const int y = label_set.label(i);
        if (y >= model.class_count) throw std::invalid_argument("label set has more classes than the model");
        ++counts[nearest_centroid(model, label_set.row(i))][y];
    }
    for (std::size_t j = 0; j < model.size(); ++j)
        model.labels[j] = static_cast<int>(std::max_element(counts[j].begin(), counts[j].end()) - counts[j].begin());
}

KmeansClassifier train_kmeans_classifier(const Dataset& train, const Dataset& label_set, std::size_t k,
                                         std::uint64_t seed, LabelSource source, const KmeansOptions& options)
{
    KmeansClassifier c;
    c.model = kmeans_centroids(train, k, seed, options, &c.lloyd_iterations);
    c.model.class_count = std::max(train.class_count(), label_set.class_count());
    if (c.model.label_names.size() != static_cast<std::size_t>(c.model.class_count)) c.model.label_names.clear();
    relabel_by_mode(c.model, label_set);
    c.label_source = source;
    return c;
}

void KnnClassifier::validate() const
{
    if (k < 1 || k > samples.size()) throw std::invalid_argument("k-NN needs 1 <= k <= N");
}

KnnClassifier make_knn(const Dataset& train, std::size_t k)
{
    KnnClassifier c{train, k};
    c.validate();
    return c;
}

KnnClassifier make_random_nn(const Dataset& train, std::size_t count, std::uint64_t seed)
{
    if (count < 1 || count > train.size()) throw std::invalid_argument("random NN subset size out of range");
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "random-nn"));
    for (std::size_t t = 0; t < count; ++t) std::swap(idx[t], idx[t + rng.below(idx.size() - t)]);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return make_knn(train.subset(idx), 1);
}

int knn_predict(const KnnClassifier& model, std::span<const double> x)
{
    const Dataset& s = model.samples;
    if (x.size() != s.dims()) throw std::invalid_argument("dimension mismatch between sample and model");
    if (model.k == 1) {
        std::size_t best = 0;
        double best_d = distance(x, s.row(0));
        for (std::size_t i = 1; i < s.size(); ++i) {
            const double d = distance(x, s.row(i));
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return s.label(best);
    }
    std::vector<std::pair<double, std::size_t>> dist(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) dist[i] = {distance(x, s.row(i)), i};
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(model.k - 1), dist.end());
    std::vector<std::size_t> votes(static_cast<std::size_t>(s.class_count()));
    for (std::size_t t = 0; t < model.k; ++t) ++votes[s.label(dist[t].second)];
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::size_t knn_error_count(const KnnClassifier& model, const Dataset& ds)
{
    std::size_t errors = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) errors += knn_predict(model, ds.row(i)) != ds.label(i);
    return errors;
}

double knn_error_ratio(const KnnClassifier& model, const Dataset& ds)
{
    return static_cast<double>(knn_error_count(model, ds)) / static_cast<double>(ds.size());
}

nlohmann::json kmeans_to_json(const KmeansClassifier& model)
{
    auto doc = srnn_to_json(model.model);
    doc["kind"] = "kmeans";
    doc["label_source"] = to_string(model.label_source);
    return doc;
}

KmeansClassifier kmeans_from_json(const nlohmann::json& doc)
{
    KmeansClassifier c;
    c.model = srnn_from_json(doc);
    const auto source = doc.value("label_source", std::string("trainset"));
    if (source == "trainset")
        c.label_source = LabelSource::Trainset;
    else if (source == "validationset")
        c.label_source = LabelSource::Validationset;
    else
        throw DataError("unknown label_source '" + source + "'");
    return c;
}

nlohmann::json knn_to_json(const KnnClassifier& model)
{
    SrnnModel stored;
    stored.dims = model.samples.dims();
    stored.class_count = model.samples.class_count();
    stored.label_names = model.samples.label_names();
    stored.centroids.assign(model.samples.features().begin(), model.samples.features().end());
    stored.labels.assign(model.samples.labels().begin(), model.samples.labels().end());
    auto doc = srnn_to_json(stored);
    doc["kind"] = "knn";
    doc["k"] = model.k;
    return doc;
}

KnnClassifier knn_from_json(const nlohmann::json& doc)
{
    const SrnnModel stored = srnn_from_json(doc);
    try {
        KnnClassifier c{Dataset(stored.centroids, stored.dims, stored.labels, stored.class_count, {}, stored.label_names),
                        doc.at("k").get<std::size_t>()};
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed k-NN document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid k-NN model: ") + e.what());
    }
}

}  // namespace flipguard
