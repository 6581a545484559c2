#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <numeric>

#include "flipguard/srnn.hpp"
#include "support.hpp"

using namespace flipguard;
using testing::make_ds;

namespace {

SrnnModel make_model(const std::vector<std::vector<double>>& centroids, const std::vector<int>& labels, int classes)
{
    SrnnModel m;
    m.dims = centroids.front().size();
    for (const auto& c : centroids) m.centroids.insert(m.centroids.end(), c.begin(), c.end());
    m.labels = labels;
    m.class_count = classes;
    return m;
}

Dataset two_blobs(std::uint64_t seed, std::size_t per_blob = 50)
{
    MixtureSpec spec;
    spec.components = {{{0.0, 0.0}, 0.5, per_blob, 0}, {{20.0, 0.0}, 0.5, per_blob, 1}};
    spec.seed = seed;
    return gen_mixture(spec);
}

bool same_bits(const SrnnModel& a, const SrnnModel& b)
{
    return a.labels == b.labels && a.dims == b.dims && a.centroids.size() == b.centroids.size() &&
           std::memcmp(a.centroids.data(), b.centroids.data(), a.centroids.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("assign geometry and ties")
{
    const auto m = make_model({{0.0, 0.0}, {10.0, 0.0}}, {0, 1}, 2);
    const auto ds = make_ds({{1.0, 0.0}, {5.0, 0.0}, {9.0, 0.0}}, {0, 0, 1}, 2);
    const auto a = assign(ds, m);
    CHECK(a.owner == std::vector<std::size_t>{0, 0, 1});
    CHECK(a.distance[0] == 1.0);
    CHECK(a.distance[1] == 5.0);

    const auto one = make_model({{3.0, 3.0}}, {1}, 2);
    for (auto o : assign(ds, one).owner) CHECK(o == 0);
}

TEST_CASE("property: assign agrees with a brute-force scan")
{
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        const std::size_t dims = 1 + rng.below(4);
        const auto ds = testing::random_dataset(rng, 20 + rng.below(80), dims, 3);
        const std::size_t k = 1 + rng.below(10);
        SrnnModel m;
        m.dims = dims;
        m.class_count = 3;
        for (std::size_t j = 0; j < k; ++j) {
            // Snap to a coarse grid so exact ties happen.
            for (std::size_t d = 0; d < dims; ++d) m.centroids.push_back(static_cast<double>(rng.below(5)) - 2.0);
            m.labels.push_back(static_cast<int>(rng.below(3)));
        }
        const auto a = assign(ds, m);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::size_t best = 0;
            double best_sq = 1e300;
            for (std::size_t j = 0; j < k; ++j) {
                double sq = 0.0;
                for (std::size_t d = 0; d < dims; ++d) {
                    const double diff = ds.row(i)[d] - m.centroid(j)[d];
                    sq += diff * diff;
                }
                if (sq < best_sq) {
                    best_sq = sq;
                    best = j;
                }
            }
            CHECK(a.owner[i] == best);
            CHECK(a.distance[i] == doctest::Approx(std::sqrt(best_sq)).epsilon(1e-12));
        }
    }
}

TEST_CASE("mode_label")
{
    CHECK(mode_label(std::vector<int>{1, 1, 2}, 3) == 1);
    CHECK(mode_label(std::vector<int>{1, 2}, 3) == 1);
    CHECK(mode_label(std::vector<int>{2, 1}, 3) == 1);
    CHECK_FALSE(mode_label(std::vector<int>{}, 3).has_value());
}

TEST_CASE("predict")
{
    const auto m = make_model({{0.0, 0.0}, {4.0, 4.0}, {-3.0, 1.0}}, {0, 2, 1}, 3);
    CHECK(predict(m, std::vector<double>{4.0, 4.0}) == 2);
    const auto one = make_model({{1.0}}, {1}, 2);
    CHECK(predict(one, std::vector<double>{-100.0}) == 1);
    CHECK(predict(one, std::vector<double>{100.0}) == 1);
}

TEST_CASE("property: prediction is translation invariant")
{
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        SrnnModel m;
        m.dims = 2;
        m.class_count = 4;
        const std::size_t k = 1 + rng.below(6);
        for (std::size_t j = 0; j < k; ++j) {
            m.centroids.push_back(rng.uniform() * 10);
            m.centroids.push_back(rng.uniform() * 10);
            m.labels.push_back(static_cast<int>(rng.below(4)));
        }
        // Power-of-two offsets keep the shifted coordinates exact.
        const double shift_x = static_cast<double>(rng.below(64)) - 32.0;
        const double shift_y = static_cast<double>(rng.below(64)) - 32.0;
        SrnnModel moved = m;
        for (std::size_t j = 0; j < k; ++j) {
            moved.centroids[2 * j] += shift_x;
            moved.centroids[2 * j + 1] += shift_y;
        }
        for (int q = 0; q < 20; ++q) {
            const std::vector<double> x{rng.uniform() * 10, rng.uniform() * 10};
            const std::vector<double> y{x[0] + shift_x, x[1] + shift_y};
            CHECK(predict(m, x) == predict(moved, y));
        }
    }
}

TEST_CASE("error_ratio")
{
    const auto m = make_model({{0.0}, {10.0}}, {0, 1}, 2);
    CHECK(error_ratio(m, make_ds({{0.0}, {1.0}, {10.0}, {9.0}}, {0, 0, 1, 1}, 2)) == 0.0);
    CHECK(error_ratio(m, make_ds({{0.0}, {1.0}, {10.0}, {9.0}}, {0, 0, 1, 0}, 2)) == 0.25);
    const auto constant = make_model({{0.0}}, {2}, 3);
    CHECK(error_ratio(constant, make_ds({{0.0}, {5.0}}, {0, 1}, 3)) == 1.0);
}

TEST_CASE("train_srnn on separable blobs reaches zero error")
{
    // Oracle: the two blobs are 40 standard deviations apart, so the optimal
    // two-prototype partition is the blob partition with pure labels.
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto ds = two_blobs(s);
        TrainConfig cfg;
        cfg.k = 2;
        cfg.seed = s;
        const auto m = train_srnn(ds, cfg);
        CHECK(error_ratio(m, ds) == 0.0);
    }
}

TEST_CASE("K=1 on a balanced two-class set")
{
    Rng rng(8);
    auto ds = testing::random_dataset(rng, 40, 2, 2);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>(i % 2);
    ds = ds.with_labels(y);
    TrainConfig cfg;
    cfg.k = 1;
    const auto m = train_srnn(ds, cfg);
    CHECK(m.labels[0] == 0);
    CHECK(error_ratio(m, ds) == 0.5);
}

TEST_CASE("K=N memorizes the training set")
{
    Rng rng(12);
    const auto ds = testing::random_dataset(rng, 25, 2, 3);
    TrainConfig cfg;
    cfg.k = ds.size();
    const auto m = train_srnn(ds, cfg);
    CHECK(error_ratio(m, ds) == 0.0);
}

TEST_CASE("property: EM objective is non-increasing and terminates")
{
    Rng rng(99);
    for (int t = 0; t < 50; ++t) {
        const auto spec = testing::random_mixture(rng, 3 + rng.below(6), 100 + rng.below(200), 2, 2 + rng.below(3));
        const auto ds = gen_mixture(spec);
        TrainConfig cfg;
        cfg.k = 2 + rng.below(10);
        cfg.seed = rng.next_u64();
        cfg.max_em_iters = 1 + rng.below(20);
        TrainTrace trace;
        const auto m = train_srnn(ds, cfg, &trace);
        CHECK(trace.iterations <= cfg.max_em_iters);
        REQUIRE(trace.objective.size() == trace.iterations + 1);
        for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1]);
        CHECK(static_cast<double>(srnn_loss(m, ds)) == trace.objective.back());
    }
}

TEST_CASE("training is deterministic")
{
    Rng rng(5);
    const auto ds = gen_mixture(testing::random_mixture(rng, 5, 300, 2, 3));
    TrainConfig cfg;
    cfg.k = 6;
    cfg.seed = 77;
    CHECK(same_bits(train_srnn(ds, cfg), train_srnn(ds, cfg)));
    cfg.init = InitMethod::KMeans;
    CHECK(same_bits(train_srnn(ds, cfg), train_srnn(ds, cfg)));
}

TEST_CASE("property: fits from a fixed initial model are permutation equivariant")
{
    Rng rng(31);
    for (int t = 0; t < 20; ++t) {
        const auto ds = gen_mixture(testing::random_mixture(rng, 4 + rng.below(4), 150 + rng.below(150), 2, 3));
        TrainConfig cfg;
        cfg.k = 3 + rng.below(6);
        const auto init = init_srnn(ds, cfg.k, rng.next_u64());
        std::vector<std::size_t> perm(ds.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(perm));
        const auto a = fit_srnn(ds, init, cfg);
        const auto b = fit_srnn(ds.subset(perm), init, cfg);
        CHECK(same_bits(a, b));
    }
}

TEST_CASE("k-means++ seeds are distinct samples")
{
    Rng rng(2);
    const auto ds = testing::random_dataset(rng, 100, 3, 2);
    Rng seeder(1);
    auto seeds = kmeanspp_seeds(ds, 10, seeder);
    CHECK(seeds.size() == 10);
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("k-means centroids are cluster means at convergence")
{
    const auto ds = two_blobs(3, 40);
    std::size_t iters = 0;
    const auto m = kmeans_centroids(ds, 2, 0, {}, &iters);
    CHECK(iters >= 1);
    const auto a = assign(ds, m);
    for (std::size_t j = 0; j < 2; ++j) {
        double sx = 0.0, sy = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (a.owner[i] == j) {
                sx += ds.row(i)[0];
                sy += ds.row(i)[1];
                ++n;
            }
        REQUIRE(n == 40);
        CHECK(m.centroid(j)[0] == doctest::Approx(sx / n));
        CHECK(m.centroid(j)[1] == doctest::Approx(sy / n));
    }
}

TEST_CASE("model JSON round trip is bit exact")
{
    Rng rng(6);
    SrnnModel m;
    m.dims = 3;
    m.class_count = 4;
    for (int j = 0; j < 7; ++j) {
        for (int d = 0; d < 3; ++d) m.centroids.push_back((rng.uniform() - 0.5) * 1e3 / 7.0);
        m.labels.push_back(static_cast<int>(rng.below(4)));
    }
    m.label_names = {"a", "b", "c", "d"};
    const auto text = srnn_to_json(m).dump();
    const auto back = srnn_from_json(nlohmann::json::parse(text));
    CHECK(same_bits(m, back));
    CHECK(back.label_names == m.label_names);
    CHECK(back.class_count == 4);

    auto doc = srnn_to_json(m);
    doc["centroids"].erase(0);
    CHECK_THROWS_AS(srnn_from_json(doc), DataError);
    doc = srnn_to_json(m);
    doc["centroid_labels"][0] = 9;
    CHECK_THROWS_AS(srnn_from_json(doc), DataError);
}

TEST_CASE("training contracts")
{
    const auto ds = two_blobs(0, 5);
    TrainConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(train_srnn(ds, cfg), std::invalid_argument);
    cfg.k = 2;
    cfg.max_em_iters = 0;
    CHECK_THROWS_AS(train_srnn(ds, cfg), std::invalid_argument);
    CHECK(parse_init_method("kmeans") == InitMethod::KMeans);
    CHECK_THROWS(parse_init_method("random"));
}
