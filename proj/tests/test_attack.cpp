#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "flipguard/attack.hpp"
#include "support.hpp"

using namespace flipguard;
using testing::make_ds;

namespace {

SrnnModel single_centroid(std::vector<double> at, int label, int classes)
{
    SrnnModel m;
    m.dims = at.size();
    m.centroids = std::move(at);
    m.labels = {label};
    m.class_count = classes;
    return m;
}

std::size_t cost_of(const std::map<int, std::size_t>& costs, const std::vector<int>& ids)
{
    std::size_t s = 0;
    for (int id : ids) s += costs.at(id);
    return s;
}

// Largest achievable total strictly below the budget, by enumeration.
std::size_t brute_best(const std::map<int, std::size_t>& costs, std::size_t budget)
{
    std::vector<std::size_t> c;
    for (const auto& [id, v] : costs) c.push_back(v);
    std::size_t best = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << c.size()); ++mask) {
        std::size_t s = 0;
        for (std::size_t b = 0; b < c.size(); ++b)
            if (mask >> b & 1) s += c[b];
        if (s < budget) best = std::max(best, s);
    }
    return best;
}

// Walk (cost, id) ascending and stop at the first cluster that does not fit.
std::vector<int> greedy_oracle(const std::map<int, std::size_t>& costs, std::size_t budget)
{
    std::vector<std::pair<std::size_t, int>> order;
    for (const auto& [id, v] : costs) order.emplace_back(v, id);
    std::sort(order.begin(), order.end());
    std::vector<int> out;
    std::size_t total = 0;
    for (const auto& [v, id] : order) {
        if (total + v >= budget) break;
        total += v;
        out.push_back(id);
    }
    return out;
}

void check_plan_invariants(const Dataset& ds, const AttackPlan& plan)
{
    CHECK(plan.flips.size() <= plan.budget);
    std::set<std::size_t> seen;
    for (const auto& f : plan.flips) {
        CHECK(f.index < ds.size());
        CHECK(seen.insert(f.index).second);
        CHECK(f.old_label == ds.label(f.index));
        CHECK(f.new_label != f.old_label);
        CHECK(f.new_label >= 0);
        CHECK(f.new_label < ds.class_count());
    }
    if (plan.kind == AttackKind::Modality) CHECK(plan.selected_cost() < std::max<std::size_t>(plan.budget, 1));
    CHECK_NOTHROW(plan.validate(ds));
}

}  // namespace

TEST_CASE("cluster flip cost is half plus one")
{
    CHECK(cluster_flip_cost(10) == 6);
    CHECK(cluster_flip_cost(1) == 1);
    CHECK(cluster_flip_cost(5) == 3);
    CHECK_THROWS_AS(cluster_flip_cost(0), std::invalid_argument);
}

TEST_CASE("select_clusters examples")
{
    const std::map<int, std::size_t> abc{{0, 2}, {1, 3}, {2, 7}};
    CHECK(select_clusters(abc, 6, SelectMethod::Greedy) == std::vector<int>{0, 1});
    CHECK(brute_best(abc, 6) == 5);

    const std::map<int, std::size_t> abc2{{0, 4}, {1, 5}, {2, 7}};
    CHECK(select_clusters(abc2, 8, SelectMethod::Greedy) == std::vector<int>{0});
    CHECK(select_clusters(abc2, 8, SelectMethod::Exact) == std::vector<int>{2});
    CHECK(brute_best(abc2, 8) == 7);

    CHECK(select_clusters({{0, 1}, {1, 4}}, 1, SelectMethod::Greedy).empty());
    CHECK(select_clusters({{0, 1}, {1, 4}}, 0, SelectMethod::Exact).empty());
}

TEST_CASE("property: exact selection matches brute force, greedy follows its rule")
{
    Rng rng(2024);
    for (int t = 0; t < 2000; ++t) {
        std::map<int, std::size_t> costs;
        const std::size_t n = rng.below(16);
        for (std::size_t c = 0; c < n; ++c) costs[static_cast<int>(c * 3 + rng.below(3))] = 1 + rng.below(40);
        const std::size_t budget = rng.below(200);
        const auto exact = select_clusters(costs, budget, SelectMethod::Exact);
        const auto greedy = select_clusters(costs, budget, SelectMethod::Greedy);
        CHECK(cost_of(costs, exact) == brute_best(costs, budget));
        if (budget > 0) {
            CHECK(cost_of(costs, exact) < budget);
            CHECK(cost_of(costs, greedy) < budget);
        } else {
            CHECK(exact.empty());
            CHECK(greedy.empty());
        }
        auto g = greedy;
        auto o = greedy_oracle(costs, budget);
        std::sort(g.begin(), g.end());
        std::sort(o.begin(), o.end());
        CHECK(g == o);
        CHECK(std::set<int>(exact.begin(), exact.end()).size() == exact.size());
    }
}

TEST_CASE("modality attack on one cluster flips its majority")
{
    const auto ds = make_ds({{0.0}, {0.1}, {0.2}, {0.3}, {0.4}}, {0, 0, 0, 1, 1}, 2);
    const auto attacker = single_centroid({0.2}, 0, 2);
    const auto plan = craft_modality_attack(ds, attacker, 4, SelectMethod::Greedy, 1);
    REQUIRE(plan.flips.size() == 3);
    for (const auto& f : plan.flips) CHECK(f.new_label == 1);
    const auto poisoned = apply_attack(ds, plan);
    CHECK(mode_label(poisoned.labels(), 2) == 1);

    // Every way of moving three of the five labels to the target leaves it the mode.
    for (std::size_t mask = 0; mask < 32; ++mask) {
        if (__builtin_popcountll(mask) != 3) continue;
        std::vector<int> y(ds.labels().begin(), ds.labels().end());
        for (std::size_t b = 0; b < 5; ++b)
            if (mask >> b & 1) y[b] = 1;
        CHECK(mode_label(y, 2) == 1);
    }
}

TEST_CASE("modality attack skips clusters that do not fit")
{
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 4; ++i) {
        rows.push_back({0.0 + 0.01 * i});
        y.push_back(i == 0 ? 1 : 0);
    }
    for (int i = 0; i < 100; ++i) {
        rows.push_back({100.0 + 0.01 * i});
        y.push_back(i < 10 ? 0 : 1);
    }
    const auto ds = make_ds(rows, y, 2);
    SrnnModel attacker;
    attacker.dims = 1;
    attacker.centroids = {0.0, 100.0};
    attacker.labels = {0, 1};
    attacker.class_count = 2;
    const auto plan = craft_modality_attack(ds, attacker, 5, SelectMethod::Greedy, 0);
    CHECK(plan.per_cluster_cost.at(0) == 3);
    CHECK(plan.per_cluster_cost.at(1) == 51);
    CHECK(plan.selected_clusters == std::vector<int>{0});
    CHECK(plan.flips.size() == 3);
    for (const auto& f : plan.flips) CHECK(f.index < 4);
}

TEST_CASE("zero budget gives empty plans")
{
    Rng rng(1);
    const auto ds = testing::random_dataset(rng, 30, 2, 3);
    const auto attacker = single_centroid({0.0, 0.0}, 0, 3);
    CHECK(craft_modality_attack(ds, attacker, 0, SelectMethod::Exact, 0).flips.empty());
    CHECK(ncar_attack(ds, 0, 0).flips.empty());
    CHECK(nnar_attack(ds, 0, 5, 0).flips.empty());
}

TEST_CASE("ncar")
{
    Rng rng(3);
    const auto ds = testing::random_dataset(rng, 10, 2, 3);
    const auto plan = ncar_attack(ds, 3, 5);
    CHECK(plan.flips.size() == 3);
    check_plan_invariants(ds, plan);
    const auto binary = testing::random_dataset(rng, 50, 2, 2);
    for (const auto& f : ncar_attack(binary, 20, 9).flips) CHECK(f.new_label == 1 - f.old_label);
}

TEST_CASE("nnar confidence is the top vote share")
{
    // Two groups of 11 far apart; each point's 10 neighbors are the rest of its group.
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    rows.push_back({0.0});
    y.push_back(0);
    for (int i = 1; i <= 10; ++i) {
        rows.push_back({0.01 * i});
        y.push_back(i <= 5 ? 0 : 1);
    }
    rows.push_back({100.0});
    y.push_back(0);
    for (int i = 1; i <= 10; ++i) {
        rows.push_back({100.0 + 0.01 * i});
        y.push_back(i <= 9 ? 0 : 1);
    }
    const auto ds = make_ds(rows, y, 2);
    const auto scores = nnar_scores(ds, 10, 0);
    CHECK(scores[0].confidence == doctest::Approx(0.5));
    CHECK(scores[11].confidence == doctest::Approx(0.9));
    const auto plan = nnar_attack(ds, ds.size(), 10, 0);
    auto pos = [&](std::size_t i) {
        for (std::size_t t = 0; t < plan.flips.size(); ++t)
            if (plan.flips[t].index == i) return t;
        return plan.flips.size();
    };
    CHECK(pos(0) < pos(11));
}

TEST_CASE("nnar flips the lone boundary point first")
{
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) {
        rows.push_back({0.0, 0.1 * i});
        y.push_back(0);
    }
    for (int i = 0; i < 10; ++i) {
        rows.push_back({10.0, 0.1 * i});
        y.push_back(1);
    }
    rows.push_back({5.0, 0.45});
    y.push_back(0);
    const auto ds = make_ds(rows, y, 2);
    // Direct vote count: the midpoint's 10 neighbors split between the blobs,
    // blob points see at most one vote from the other side.
    const auto scores = nnar_scores(ds, 10, 0);
    for (std::size_t i = 0; i < 20; ++i) CHECK(scores[i].confidence >= 0.9);
    CHECK(scores[20].confidence < 0.9);
    const auto plan = nnar_attack(ds, 1, 10, 0);
    REQUIRE(plan.flips.size() == 1);
    CHECK(plan.flips[0].index == 20);
    CHECK(plan.flips[0].new_label == 1);
}

TEST_CASE("nnar on a single-label set flips to other classes")
{
    Rng rng(4);
    auto ds = testing::random_dataset(rng, 30, 2, 3);
    ds = ds.with_labels(std::vector<int>(30, 2));
    const auto plan = nnar_attack(ds, 10, 5, 1);
    CHECK(plan.flips.size() == 10);
    for (const auto& f : plan.flips) CHECK(f.new_label != 2);
}

TEST_CASE("component attack flips listed components")
{
    MixtureSpec spec;
    spec.components = {{{0.0}, 1.0, 30, 0}, {{10.0}, 1.0, 10, 1}, {{20.0}, 1.0, 10, 2}};
    const auto ds = gen_mixture(spec);
    const std::vector<int> comps{1, 2};
    const auto full = component_flip_attack(ds, comps, 25, 0);
    CHECK(full.flips.size() == 20);
    for (const auto& f : full.flips) {
        CHECK((*ds.truth().cluster_id)[f.index] >= 1);
        CHECK(f.new_label == (f.old_label + 1) % 3);
    }
    const auto part = component_flip_attack(ds, comps, 7, 0);
    CHECK(part.flips.size() == 7);
    check_plan_invariants(ds, part);
    CHECK_THROWS_AS(component_flip_attack(testing::make_ds({{0.0}, {1.0}}, {0, 1}, 2), comps, 1, 0),
                    std::invalid_argument);
}

TEST_CASE("apply_attack")
{
    const auto ds = make_ds({{0.0}, {1.0}, {2.0}, {3.0}}, {0, 0, 0, 1}, 2);
    AttackPlan empty;
    const auto same = apply_attack(ds, empty);
    CHECK(std::equal(same.labels().begin(), same.labels().end(), ds.labels().begin()));
    CHECK(flipped_indices(same).empty());

    AttackPlan plan;
    plan.kind = AttackKind::Ncar;
    plan.budget = 1;
    plan.flips = {{2, 0, 1, -1}};
    const auto p = apply_attack(ds, plan);
    for (std::size_t i = 0; i < 4; ++i) CHECK((p.label(i) != ds.label(i)) == (i == 2));
    CHECK(flipped_indices(p) == std::vector<std::size_t>{2});
    const auto restored = p.with_labels(*p.truth().original_labels);
    CHECK(std::equal(restored.labels().begin(), restored.labels().end(), ds.labels().begin()));

    AttackPlan bad = plan;
    bad.flips = {{2, 0, 0, -1}};
    CHECK_THROWS_AS(bad.validate(ds), std::invalid_argument);
    bad.flips = {{1, 0, 1, -1}, {2, 0, 1, -1}};
    CHECK_THROWS_AS(bad.validate(ds), std::invalid_argument);
    bad.budget = 2;
    bad.flips = {{2, 0, 1, -1}, {2, 0, 1, -1}};
    CHECK_THROWS_AS(bad.validate(ds), std::invalid_argument);
}

TEST_CASE("theorem check on a four-sample cluster")
{
    const auto ds = make_ds({{0.0}, {0.1}, {0.2}, {0.3}}, {0, 0, 0, 0}, 2);
    const auto attacker = single_centroid({0.15}, 0, 2);
    const auto plan = craft_modality_attack(ds, attacker, 4, SelectMethod::Greedy, 3);
    REQUIRE(plan.flips.size() == 3);
    const auto r = theorem1_check(ds, attacker, plan);
    CHECK(r.errors_before == 0);
    CHECK(r.errors_after == 4);
    CHECK(r.delta_error == 4);
    CHECK(r.bound == 6);
    CHECK(r.holds);

    const auto none = theorem1_check(ds, attacker, AttackPlan{});
    CHECK(none.delta_error == 0);
    CHECK(none.holds);
}

TEST_CASE("property: modality plans keep the budget, flip majorities, satisfy the bound")
{
    Rng rng(77);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 200 + rng.below(800);
        const auto ds = gen_mixture(testing::random_mixture(rng, 4 + rng.below(9), n, 2, 2 + rng.below(4)));
        const std::size_t k = 4 + rng.below(9);
        const auto attacker = init_srnn(ds, k, rng.next_u64());
        const std::size_t budget = n * (5 + rng.below(16)) / 100;
        const auto method = rng.below(2) ? SelectMethod::Exact : SelectMethod::Greedy;
        const auto plan = craft_modality_attack(ds, attacker, budget, method, rng.next_u64());
        check_plan_invariants(ds, plan);
        CHECK(plan.selected_cost() < budget);

        const auto poisoned = apply_attack(ds, plan);
        const auto a = assign(ds, attacker);
        for (int j : plan.selected_clusters) {
            std::vector<int> before, after;
            for (std::size_t i = 0; i < ds.size(); ++i)
                if (a.owner[i] == static_cast<std::size_t>(j)) {
                    before.push_back(ds.label(i));
                    after.push_back(poisoned.label(i));
                }
            int target = -1;
            for (const auto& f : plan.flips)
                if (f.cluster == j) target = f.new_label;
            REQUIRE(target >= 0);
            CHECK(target != *mode_label(before, ds.class_count()));
            CHECK(mode_label(after, ds.class_count()) == target);
        }
        CHECK(theorem1_check(ds, attacker, plan).holds);
    }
}

TEST_CASE("property: every attack respects its budget")
{
    Rng rng(5150);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 50 + rng.below(300);
        const auto ds = gen_mixture(testing::random_mixture(rng, 3 + rng.below(6), n, 2, 2 + rng.below(3)));
        const std::size_t budget = rng.below(n / 3 + 1);
        const auto attacker = init_srnn(ds, 2 + rng.below(8), rng.next_u64());
        std::vector<int> comps{0, 2};
        for (const auto& plan :
             {craft_modality_attack(ds, attacker, budget, SelectMethod::Greedy, t),
              craft_modality_attack(ds, attacker, budget, SelectMethod::Exact, t), ncar_attack(ds, budget, t),
              nnar_attack(ds, budget, std::min<std::size_t>(10, n - 1), t),
              component_flip_attack(ds, comps, budget, t)}) {
            CHECK(plan.budget == budget);
            check_plan_invariants(ds, plan);
        }
    }
}

TEST_CASE("plan serialization round trip")
{
    Rng rng(8);
    const auto ds = gen_mixture(testing::random_mixture(rng, 6, 400, 2, 3));
    const auto attacker = init_srnn(ds, 6, 1);
    const auto plan = craft_modality_attack(ds, attacker, 60, SelectMethod::Exact, 12);
    const auto summary = plan_summary_json(plan);
    CHECK(summary["attack_kind"] == "modality");
    CHECK(summary["flips_used"] == plan.flips.size());
    CHECK(summary["budget"] == 60);
    const auto back = plan_from_files(plan_to_csv(plan), summary);
    CHECK(back.kind == plan.kind);
    CHECK(back.budget == plan.budget);
    CHECK(back.seed == plan.seed);
    CHECK(back.selected_clusters == plan.selected_clusters);
    CHECK(back.per_cluster_cost == plan.per_cluster_cost);
    REQUIRE(back.flips.size() == plan.flips.size());
    for (std::size_t i = 0; i < plan.flips.size(); ++i) {
        CHECK(back.flips[i].index == plan.flips[i].index);
        CHECK(back.flips[i].new_label == plan.flips[i].new_label);
        CHECK(back.flips[i].cluster == plan.flips[i].cluster);
    }
    CHECK_THROWS_AS(plan_from_files("sample_index,old_label,new_label,cluster_id\n1,x,2,0\n", summary), DataError);
    CHECK(parse_attack_kind("nnar") == AttackKind::Nnar);
    CHECK_THROWS(parse_attack_kind("bogus"));
    CHECK(to_string(SelectMethod::Exact) == "exact");
}

TEST_CASE("attacks are deterministic in the seed")
{
    Rng rng(10);
    const auto ds = gen_mixture(testing::random_mixture(rng, 5, 300, 2, 3));
    const auto attacker = init_srnn(ds, 5, 2);
    auto same = [](const AttackPlan& a, const AttackPlan& b) {
        if (a.flips.size() != b.flips.size()) return false;
        for (std::size_t i = 0; i < a.flips.size(); ++i)
            if (a.flips[i].index != b.flips[i].index || a.flips[i].new_label != b.flips[i].new_label) return false;
        return true;
    };
    CHECK(same(craft_modality_attack(ds, attacker, 40, SelectMethod::Greedy, 4),
               craft_modality_attack(ds, attacker, 40, SelectMethod::Greedy, 4)));
    CHECK(same(ncar_attack(ds, 40, 4), ncar_attack(ds, 40, 4)));
    CHECK(!same(ncar_attack(ds, 40, 4), ncar_attack(ds, 40, 5)));
}
