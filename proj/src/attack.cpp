#include "flipguard/attack.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flipguard/rng.hpp"

namespace flipguard {

std::string to_string(AttackKind kind)
{
    switch (kind) {
    case AttackKind::Modality: return "modality";
    case AttackKind::Ncar: return "ncar";
    case AttackKind::Nnar: return "nnar";
    case AttackKind::Component: return "component";
    }
    return "?";
}

AttackKind parse_attack_kind(const std::string& text)
{
    if (text == "modality") return AttackKind::Modality;
    if (text == "ncar") return AttackKind::Ncar;
    if (text == "nnar") return AttackKind::Nnar;
    if (text == "component") return AttackKind::Component;
    throw std::invalid_argument("unknown attack kind '" + text + "'");
}

std::string to_string(SelectMethod method) { return method == SelectMethod::Greedy ? "greedy" : "exact"; }

SelectMethod parse_select_method(const std::string& text)
{
    if (text == "greedy") return SelectMethod::Greedy;
    if (text == "exact") return SelectMethod::Exact;
    throw std::invalid_argument("unknown selection method '" + text + "'");
}

std::size_t AttackPlan::selected_cost() const
{
    std::size_t sum = 0;
    for (int c : selected_clusters) sum += per_cluster_cost.at(c);
    return sum;
}

void AttackPlan::validate(const Dataset& ds) const
{
    if (flips.size() > budget) throw std::invalid_argument("plan exceeds its budget");
    if (kind == AttackKind::Modality && !selected_clusters.empty() && selected_cost() >= budget)
        throw std::invalid_argument("selected cluster cost must stay below the budget");
    std::set<std::size_t> seen;
    for (const auto& f : flips) {
        if (f.index >= ds.size()) throw std::invalid_argument("flip index out of range");
        if (!seen.insert(f.index).second) throw std::invalid_argument("duplicate flip index");
        if (f.old_label != ds.label(f.index)) throw std::invalid_argument("flip old label does not match dataset");
        if (f.new_label == f.old_label) throw std::invalid_argument("flip keeps the current label");
        if (f.new_label < 0 || f.new_label >= ds.class_count()) throw std::invalid_argument("flip label out of range");
    }
}

std::size_t cluster_flip_cost(std::size_t cluster_size)
{
    if (cluster_size == 0) throw std::invalid_argument("flip cost of an empty cluster");
    return cluster_size / 2 + 1;
}

std::vector<int> select_clusters(const std::map<int, std::size_t>& costs, std::size_t budget, SelectMethod method)
{
    for (const auto& [id, c] : costs)
        if (c < 1) throw std::invalid_argument("cluster costs must be >= 1");
    std::vector<int> chosen;
    if (budget == 0) return chosen;

    if (method == SelectMethod::Greedy) {
        std::vector<std::pair<std::size_t, int>> order;
        for (const auto& [id, c] : costs) order.emplace_back(c, id);
        std::sort(order.begin(), order.end());
        std::size_t total = 0;
        for (const auto& [c, id] : order) {
            if (total + c >= budget) break;
            total += c;
            chosen.push_back(id);
        }
        return chosen;
    }

    // 0/1 subset sum over capacity budget-1, items in id order.
    const std::size_t cap = budget - 1;
    std::vector<std::pair<int, std::size_t>> items(costs.begin(), costs.end());
    const std::size_t n = items.size();
    std::vector<std::vector<std::uint8_t>> reach(n + 1, std::vector<std::uint8_t>(cap + 1, 0));
    reach[0][0] = 1;
    for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t c = items[i - 1].second;
        for (std::size_t s = 0; s <= cap; ++s)
            reach[i][s] = reach[i - 1][s] || (s >= c && reach[i - 1][s - c]);
    }
    std::size_t s = cap;
    while (!reach[n][s]) --s;
    for (std::size_t i = n; i >= 1; --i) {
        if (reach[i - 1][s]) continue;
        chosen.push_back(items[i - 1].first);
        s -= items[i - 1].second;
    }
    std::reverse(chosen.begin(), chosen.end());
    return chosen;
}

AttackPlan craft_modality_attack(const Dataset& train, const SrnnModel& attacker, std::size_t budget,
                                 SelectMethod method, std::uint64_t seed)
{
    AttackPlan plan;
    plan.kind = AttackKind::Modality;
    plan.budget = budget;
    plan.seed = seed;

    const std::size_t k = attacker.size();
    const int m = train.class_count();
    const auto a = assign(train, attacker);

    // Bucket members by cluster (counting sort keeps this linear in N).
    std::vector<std::size_t> start(k + 1, 0);
    for (std::size_t j : a.owner) ++start[j + 1];
    std::partial_sum(start.begin(), start.end(), start.begin());
    std::vector<std::size_t> members(train.size());
    {
        auto fill = start;
        for (std::size_t i = 0; i < train.size(); ++i) members[fill[a.owner[i]]++] = i;
    }
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t size = start[j + 1] - start[j];
        if (size > 0) plan.per_cluster_cost[static_cast<int>(j)] = cluster_flip_cost(size);
    }
    plan.selected_clusters = select_clusters(plan.per_cluster_cost, budget, method);

    Rng rng(derive_seed(seed, "modality"));
    std::vector<std::size_t> counts(static_cast<std::size_t>(m));
    for (int cluster : plan.selected_clusters) {
        const auto first = members.begin() + static_cast<std::ptrdiff_t>(start[cluster]);
        const auto last = members.begin() + static_cast<std::ptrdiff_t>(start[cluster + 1]);
        std::fill(counts.begin(), counts.end(), 0);
        for (auto it = first; it != last; ++it) ++counts[train.label(*it)];
        const int mode = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

        // Least frequent label present other than the mode; for a pure cluster,
        // the lowest class id other than the mode.
        int target = -1;
        for (int c = 0; c < m; ++c) {
            if (c == mode || counts[c] == 0) continue;
            if (target < 0 || counts[c] < counts[target]) target = c;
        }
        if (target < 0) target = mode == 0 ? 1 : 0;

        std::vector<std::size_t> pool;
        for (auto it = first; it != last; ++it)
            if (train.label(*it) != target) pool.push_back(*it);
        const std::size_t want = std::min(plan.per_cluster_cost.at(cluster), pool.size());
        // Partial Fisher-Yates: the first `want` entries are a uniform draw.
        for (std::size_t t = 0; t < want; ++t) {
            const std::size_t pick = t + rng.below(pool.size() - t);
            std::swap(pool[t], pool[pick]);
            plan.flips.push_back({pool[t], train.label(pool[t]), target, cluster});
        }
    }
    return plan;
}

AttackPlan ncar_attack(const Dataset& train, std::size_t budget, std::uint64_t seed)
{
    const std::size_t n = train.size();
    if (budget > n) throw std::invalid_argument("NCAR budget exceeds the number of samples");
    AttackPlan plan;
    plan.kind = AttackKind::Ncar;
    plan.budget = budget;
    plan.seed = seed;
    Rng rng(derive_seed(seed, "ncar"));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto m = static_cast<std::uint64_t>(train.class_count());
    for (std::size_t t = 0; t < budget; ++t) {
        const std::size_t pick = t + rng.below(n - t);
        std::swap(idx[t], idx[pick]);
        const int old = train.label(idx[t]);
        const int r = static_cast<int>(rng.below(m - 1));
        plan.flips.push_back({idx[t], old, r < old ? r : r + 1, -1});
    }
    return plan;
}

std::vector<NnarScore> nnar_scores(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed)
{
    const std::size_t n = train.size();
    if (k_neighbors < 1 || k_neighbors >= n) throw std::invalid_argument("NNAR needs 1 <= k_neighbors < N");
    const int m = train.class_count();
    Rng rng(derive_seed(seed, "nnar"));
    std::vector<NnarScore> scores(n);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    std::vector<std::size_t> votes(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < n; ++i) {
        dist.clear();
        for (std::size_t q = 0; q < n; ++q)
            if (q != i) dist.emplace_back(distance(train.row(i), train.row(q)), q);
        // (distance, index) order: distance ties resolve to the lower index.
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_neighbors - 1), dist.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t t = 0; t < k_neighbors; ++t) ++votes[train.label(dist[t].second)];

        std::vector<int> ranked;
        for (int c = 0; c < m; ++c)
            if (votes[c] > 0) ranked.push_back(c);
        std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) { return votes[a] > votes[b]; });
        const int own = train.label(i);
        scores[i].confidence = static_cast<double>(votes[ranked[0]]) / static_cast<double>(k_neighbors);
        int target = -1;
        if (ranked.size() >= 2 && ranked[1] != own) {
            target = ranked[1];
        } else {
            for (int c : ranked)
                if (c != own) {
                    target = c;
                    break;
                }
        }
        if (target < 0) {
            const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(m - 1)));
            target = r < own ? r : r + 1;
        }
        scores[i].target = target;
    }
    return scores;
}

AttackPlan nnar_attack(const Dataset& train, std::size_t budget, std::size_t k_neighbors, std::uint64_t seed)
{
    if (budget > train.size()) throw std::invalid_argument("NNAR budget exceeds the number of samples");
    AttackPlan plan;
    plan.kind = AttackKind::Nnar;
    plan.budget = budget;
    plan.seed = seed;
    if (budget == 0) return plan;
    const auto scores = nnar_scores(train, k_neighbors, seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a].confidence < scores[b].confidence; });
    for (std::size_t t = 0; t < budget; ++t) {
        const std::size_t i = order[t];
        plan.flips.push_back({i, train.label(i), scores[i].target, -1});
    }
    return plan;
}

AttackPlan component_flip_attack(const Dataset& train, std::span<const int> components, std::size_t budget,
                                 std::uint64_t seed)
{
    const auto& cluster = train.truth().cluster_id;
    if (!cluster) throw std::invalid_argument("component attack needs ground-truth cluster ids");
    AttackPlan plan;
    plan.kind = AttackKind::Component;
    plan.budget = budget;
    plan.seed = seed;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (std::find(components.begin(), components.end(), (*cluster)[i]) != components.end()) pool.push_back(i);
    if (pool.size() > budget) {
        Rng rng(derive_seed(seed, "component"));
        for (std::size_t t = 0; t < budget; ++t) std::swap(pool[t], pool[t + rng.below(pool.size() - t)]);
        pool.resize(budget);
        std::sort(pool.begin(), pool.end());
    }
    const int m = train.class_count();
    for (std::size_t i : pool) plan.flips.push_back({i, train.label(i), (train.label(i) + 1) % m, (*cluster)[i]});
    return plan;
}

Dataset apply_attack(const Dataset& ds, const AttackPlan& plan)
{
    std::vector<int> labels(ds.labels().begin(), ds.labels().end());
    std::vector<bool> seen(ds.size(), false);
    for (const auto& f : plan.flips) {
        if (f.index >= ds.size()) throw std::invalid_argument("flip index out of range");
        if (seen[f.index]) throw std::invalid_argument("duplicate flip index");
        seen[f.index] = true;
        if (f.new_label == labels[f.index]) throw std::invalid_argument("flip keeps the current label");
        if (f.new_label < 0 || f.new_label >= ds.class_count()) throw std::invalid_argument("flip label out of range");
        labels[f.index] = f.new_label;
    }
    Truth t = ds.truth();
    if (!t.original_labels) t.original_labels = std::vector<int>(ds.labels().begin(), ds.labels().end());
    return Dataset(std::vector<double>(ds.features().begin(), ds.features().end()), ds.dims(), std::move(labels),
                   ds.class_count(), std::move(t), ds.label_names());
}

std::vector<std::size_t> flipped_indices(const Dataset& poisoned)
{
    std::vector<std::size_t> out;
    const auto& orig = poisoned.truth().original_labels;
    if (!orig) return out;
    for (std::size_t i = 0; i < poisoned.size(); ++i)
        if ((*orig)[i] != poisoned.label(i)) out.push_back(i);
    return out;
}

TheoremCheck theorem1_check(const Dataset& train, const SrnnModel& attacker, const AttackPlan& plan)
{
    plan.validate(train);
    const Dataset poisoned = apply_attack(train, plan);
    const auto a = assign(train, attacker);
    const std::size_t k = attacker.size();

    auto relabel = [&](const Dataset& ds) {
        std::vector<std::vector<int>> members(k);
        for (std::size_t i = 0; i < ds.size(); ++i) members[a.owner[i]].push_back(ds.label(i));
        SrnnModel m = attacker;
        for (std::size_t j = 0; j < k; ++j)
            if (auto y = mode_label(members[j], ds.class_count())) m.labels[j] = *y;
        return m;
    };
    auto errors = [&](const SrnnModel& m) {
        std::size_t e = 0;
        for (std::size_t i = 0; i < train.size(); ++i) e += m.labels[a.owner[i]] != train.label(i);
        return e;
    };

    TheoremCheck r;
    r.errors_before = errors(relabel(train));
    r.errors_after = errors(relabel(poisoned));
    r.delta_error = static_cast<long long>(r.errors_after) - static_cast<long long>(r.errors_before);
    r.bound = 2 * plan.selected_cost();
    r.holds = r.delta_error <= static_cast<long long>(r.bound);
    return r;
}

std::string plan_to_csv(const AttackPlan& plan)
{
    std::ostringstream out;
    out << "sample_index,old_label,new_label,cluster_id\n";
    for (const auto& f : plan.flips) out << f.index << ',' << f.old_label << ',' << f.new_label << ',' << f.cluster << '\n';
    return out.str();
}

nlohmann::json plan_summary_json(const AttackPlan& plan)
{
    nlohmann::json doc;
    doc["attack_kind"] = to_string(plan.kind);
    doc["budget"] = plan.budget;
    doc["flips_used"] = plan.flips.size();
    doc["selected_clusters"] = plan.selected_clusters;
    doc["seed"] = plan.seed;
    auto costs = nlohmann::json::object();
    for (const auto& [id, c] : plan.per_cluster_cost) costs[std::to_string(id)] = c;
    doc["per_cluster_cost"] = std::move(costs);
    return doc;
}

AttackPlan plan_from_files(const std::string& csv_text, const nlohmann::json& summary)
{
    AttackPlan plan;
    try {
        plan.kind = parse_attack_kind(summary.at("attack_kind").get<std::string>());
        plan.budget = summary.at("budget").get<std::size_t>();
        plan.seed = summary.at("seed").get<std::uint64_t>();
        plan.selected_clusters = summary.at("selected_clusters").get<std::vector<int>>();
        if (summary.contains("per_cluster_cost"))
            for (const auto& [id, c] : summary["per_cluster_cost"].items())
                plan.per_cluster_cost[std::stoi(id)] = c.get<std::size_t>();
    } catch (const std::exception& e) {
        throw DataError(std::string("malformed plan summary: ") + e.what());
    }
    std::istringstream in(csv_text);
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Flip f;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream row(line);
        if (!(row >> f.index >> c1 >> f.old_label >> c2 >> f.new_label >> c3 >> f.cluster) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            throw DataError("plan CSV line " + std::to_string(line_no) + ": malformed row");
        plan.flips.push_back(f);
    }
    if (summary.contains("flips_used") && summary["flips_used"].get<std::size_t>() != plan.flips.size())
        throw DataError("plan CSV row count differs from flips_used");
    return plan;
}

}  // namespace flipguard
