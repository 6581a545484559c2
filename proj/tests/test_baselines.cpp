#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "flipguard/baselines.hpp"
#include "support.hpp"

using namespace flipguard;
using testing::make_ds;

namespace {

// Brute-force k-NN vote: sort by (distance, index), first k, most votes, smallest class on ties.
int knn_oracle(const Dataset& s, std::span<const double> x, std::size_t k)
{
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < s.size(); ++i) d.push_back({distance(x, s.row(i)), i});
    std::sort(d.begin(), d.end());
    std::map<int, std::size_t> votes;
    for (std::size_t t = 0; t < k; ++t) ++votes[s.label(d[t].second)];
    int best = -1;
    std::size_t count = 0;
    for (const auto& [y, c] : votes)
        if (c > count) {
            best = y;
            count = c;
        }
    return best;
}

std::vector<double> flat(const Dataset& ds) { return {ds.features().begin(), ds.features().end()}; }

}  // namespace

TEST_CASE("knn votes")
{
    const auto ds = make_ds({{0.0}, {1.0}, {2.0}, {10.0}}, {0, 0, 1, 1}, 2);
    CHECK(knn_predict(make_knn(ds, 3), std::vector<double>{0.5}) == 0);
    CHECK(knn_predict(make_knn(ds, 1), std::vector<double>{2.2}) == 1);
    // k = N returns the global mode; a 2-2 split goes to the smaller class id.
    CHECK(knn_predict(make_knn(ds, 4), std::vector<double>{10.0}) == 0);
    CHECK_THROWS_AS(make_knn(ds, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_knn(ds, 5), std::invalid_argument);
}

TEST_CASE("property: knn matches a brute-force vote")
{
    Rng rng(21);
    for (int t = 0; t < 200; ++t) {
        // Integer coordinates make distance ties common.
        const std::size_t n = 1 + rng.below(40);
        std::vector<std::vector<double>> rows;
        std::vector<int> y;
        for (std::size_t i = 0; i < n; ++i) {
            rows.push_back({static_cast<double>(rng.below(5)), static_cast<double>(rng.below(5))});
            y.push_back(static_cast<int>(rng.below(3)));
        }
        y[0] = 0;
        if (n > 1) y[1] = 1;
        const auto ds = make_ds(rows, y, 3);
        const std::size_t k = 1 + rng.below(n);
        const auto model = make_knn(ds, k);
        for (int q = 0; q < 10; ++q) {
            const std::vector<double> x{static_cast<double>(rng.below(6)) - 0.5 * rng.below(2),
                                        static_cast<double>(rng.below(6))};
            CHECK(knn_predict(model, x) == knn_oracle(ds, x, k));
        }
    }
}

TEST_CASE("property: 1-NN equals SRNN with one centroid per sample")
{
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const auto ds = testing::random_dataset(rng, 2 + rng.below(60), 1 + rng.below(3), 3);
        SrnnModel m;
        m.dims = ds.dims();
        m.class_count = ds.class_count();
        m.centroids.assign(ds.features().begin(), ds.features().end());
        m.labels.assign(ds.labels().begin(), ds.labels().end());
        const auto knn = make_knn(ds, 1);
        const auto probe = testing::random_dataset(rng, 50, ds.dims(), 3);
        for (std::size_t i = 0; i < probe.size(); ++i) CHECK(knn_predict(knn, probe.row(i)) == predict(m, probe.row(i)));
        CHECK(knn_error_count(knn, probe) == error_count(m, probe));
    }
}

TEST_CASE("kmeans classifier on separable blobs")
{
    MixtureSpec spec;
    spec.components = {{{0.0, 0.0}, 0.5, 200, 0}, {{10.0, 10.0}, 0.5, 200, 1}};
    spec.seed = 3;
    const auto train = gen_mixture(spec);
    const auto c = train_kmeans_classifier(train, train, 2, 7);
    CHECK(error_ratio(c.model, train) == 0.0);
    CHECK(c.lloyd_iterations >= 1);

    const auto again = train_kmeans_classifier(train, train, 2, 7);
    CHECK(again.model.centroids == c.model.centroids);
    CHECK(again.model.labels == c.model.labels);

    // One centroid predicts the global mode everywhere.
    spec.components[1].count = 100;
    const auto skewed = gen_mixture(spec);
    const auto one = train_kmeans_classifier(skewed, skewed, 1, 1);
    CHECK(one.model.labels == std::vector<int>{0});
    CHECK(error_count(one.model, skewed) == 100);
}

TEST_CASE("label source decides centroid labels")
{
    const auto train = make_ds({{0.0}, {0.1}, {5.0}, {5.1}}, {0, 0, 1, 1}, 2);
    const auto val = make_ds({{0.05}, {5.05}}, {1, 0}, 2);
    const auto c = train_kmeans_classifier(train, val, 2, 0, LabelSource::Validationset);
    const std::size_t low = c.model.centroid(0)[0] < c.model.centroid(1)[0] ? 0 : 1;
    CHECK(c.model.labels[low] == 1);
    CHECK(c.model.labels[1 - low] == 0);

    // Centroids without label-set samples fall back to class 0.
    SrnnModel m = c.model;
    relabel_by_mode(m, make_ds({{5.0}, {5.2}}, {1, 1}, 2));
    CHECK(m.labels[low] == 0);
    CHECK(m.labels[1 - low] == 1);
}

TEST_CASE("property: kmeans prediction agrees with nearest-centroid assignment")
{
    Rng rng(77);
    for (int t = 0; t < 30; ++t) {
        const auto ds = gen_mixture(testing::random_mixture(rng, 3 + rng.below(3), 100 + rng.below(100), 2, 3));
        const auto c = train_kmeans_classifier(ds, ds, 2 + rng.below(6), rng.next_u64());
        const auto a = assign(ds, c.model);
        for (std::size_t i = 0; i < ds.size(); ++i) CHECK(predict(c.model, ds.row(i)) == c.model.labels[a.owner[i]]);
    }
}

TEST_CASE("random NN subset")
{
    Rng rng(4);
    const auto ds = testing::random_dataset(rng, 100, 2, 3);
    const auto a = make_random_nn(ds, 20, 9);
    const auto b = make_random_nn(ds, 20, 9);
    CHECK(a.samples.size() == 20);
    CHECK(a.k == 1);
    CHECK(flat(a.samples) == flat(b.samples));
    CHECK(flat(make_random_nn(ds, 20, 10).samples) != flat(a.samples));
    // Every retained row is a distinct training row.
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const std::vector<double> r(a.samples.row(i).begin(), a.samples.row(i).end());
        bool found = false;
        for (std::size_t s = 0; s < ds.size() && !found; ++s)
            found = std::equal(r.begin(), r.end(), ds.row(s).begin()) && a.samples.label(i) == ds.label(s);
        CHECK(found);
        rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end());
    CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
    CHECK_THROWS_AS(make_random_nn(ds, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_random_nn(ds, 101, 1), std::invalid_argument);
}

TEST_CASE("baseline json round trips")
{
    Rng rng(12);
    const auto ds = testing::random_dataset(rng, 60, 3, 3);
    const auto probe = testing::random_dataset(rng, 40, 3, 3);

    const auto km = train_kmeans_classifier(ds, ds, 5, 2, LabelSource::Validationset);
    const auto kb = kmeans_from_json(nlohmann::json::parse(kmeans_to_json(km).dump()));
    CHECK(kb.model.centroids == km.model.centroids);
    CHECK(kb.model.labels == km.model.labels);
    CHECK(kb.label_source == LabelSource::Validationset);

    const auto nn = make_knn(ds, 5);
    const auto nb = knn_from_json(nlohmann::json::parse(knn_to_json(nn).dump()));
    CHECK(nb.k == 5);
    for (std::size_t i = 0; i < probe.size(); ++i) CHECK(knn_predict(nb, probe.row(i)) == knn_predict(nn, probe.row(i)));

    auto bad = knn_to_json(nn);
    bad["k"] = 1000;
    CHECK_THROWS_AS(knn_from_json(bad), DataError);
    auto src = kmeans_to_json(km);
    src["label_source"] = "elsewhere";
    CHECK_THROWS_AS(kmeans_from_json(src), DataError);
}
