#include "flipguard/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flipguard/rng.hpp"

namespace flipguard {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);
constexpr double kSingularDistance = 1e-12;

// Lexicographic order on (features, label); makes set iteration order
// independent of how the training samples are numbered.
bool canonical_less(const Dataset& ds, std::size_t a, std::size_t b)
{
    auto ra = ds.row(a);
    auto rb = ds.row(b);
    for (std::size_t d = 0; d < ra.size(); ++d)
        if (ra[d] != rb[d]) return ra[d] < rb[d];
    return ds.label(a) < ds.label(b);
}

std::vector<int> in_range_mode_labels(const Dataset& train, const RsrnnModel& model, const Assignment& a)
{
    const std::size_t k = model.size();
    std::vector<std::vector<int>> all(k), in_range(k);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::size_t j = a.owner[i];
        all[j].push_back(train.label(i));
        if (a.distance[i] <= model.radii[j]) in_range[j].push_back(train.label(i));
    }
    std::vector<int> labels = model.base.labels;
    for (std::size_t j = 0; j < k; ++j) {
        if (auto m = mode_label(in_range[j], model.base.class_count)) {
            labels[j] = *m;
        } else if (auto f = mode_label(all[j], model.base.class_count)) {
            labels[j] = *f;
        }
    }
    return labels;
}

}  // namespace

void RsrnnModel::validate() const
{
    base.validate();
    if (radii.size() != base.size()) throw std::invalid_argument("radii length differs from K");
    for (double r : radii)
        if (std::isnan(r) || r < 0.0) throw std::invalid_argument("radii must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
}

RsrnnModel with_infinite_radii(SrnnModel base)
{
    RsrnnModel m;
    m.radii.assign(base.size(), kInfiniteRadius);
    m.base = std::move(base);
    return m;
}

RsrnnModel with_covering_radii(SrnnModel base, const Dataset& train)
{
    const auto a = assign(train, base);
    RsrnnModel m;
    m.radii.assign(base.size(), 0.0);
    for (std::size_t i = 0; i < train.size(); ++i)
        m.radii[a.owner[i]] = std::max(m.radii[a.owner[i]], a.distance[i]);
    m.base = std::move(base);
    return m;
}

int predict_rsrnn(const RsrnnModel& model, std::span<const double> x)
{
    double d = 0.0;
    const std::size_t j = nearest_centroid(model.base, x, &d);
    return d <= model.radii[j] ? model.base.labels[j] : kMalicious;
}

std::size_t rsrnn_loss(const RsrnnModel& model, const Dataset& ds)
{
    std::size_t loss = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) loss += predict_rsrnn(model, ds.row(i)) != ds.label(i);
    return loss;
}

double rsrnn_objective(const RsrnnModel& model, const Dataset& ds)
{
    double penalty = 0.0;
    if (model.lambda > 0.0) {
        double sum = 0.0;
        for (double r : model.radii) sum += r;
        penalty = model.lambda * sum;
    }
    return static_cast<double>(rsrnn_loss(model, ds)) + penalty;
}

double rsrnn_error_ratio(const RsrnnModel& model, const Dataset& ds)
{
    return static_cast<double>(rsrnn_loss(model, ds)) / static_cast<double>(ds.size());
}

double gini(std::span<const int> labels, int class_count)
{
    if (labels.empty()) throw std::invalid_argument("gini of an empty cluster");
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    const double n = static_cast<double>(labels.size());
    double sum = 0.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / n;
        sum += p * p;
    }
    return 1.0 - sum;
}

RadiusSolution optimal_radius(std::span<const double> distances, std::span<const std::uint8_t> wrong,
                              double lambda)
{
    if (distances.size() != wrong.size()) throw std::invalid_argument("distances and flags differ in length");
    if (distances.empty()) return {0.0, 0.0};
    std::vector<std::size_t> order(distances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return distances[a] < distances[b];
    });

    // Sweep candidates 0, d_(1) < d_(2) < ... ; at each, absorb the samples at that distance.
    std::size_t out = distances.size();
    std::size_t wrong_in = 0;
    std::size_t pos = 0;
    RadiusSolution best{0.0, std::numeric_limits<double>::infinity()};
    auto absorb = [&](double r) {
        while (pos < order.size() && distances[order[pos]] <= r) {
            --out;
            wrong_in += wrong[order[pos]] ? 1 : 0;
            ++pos;
        }
        const double value = static_cast<double>(wrong_in + out) + lambda * r;
        if (value < best.objective) best = {r, value};
    };
    absorb(0.0);
    while (pos < order.size()) absorb(distances[order[pos]]);
    return best;
}

AssignmentStepResult assignment_step(const Dataset& train, RsrnnModel& model)
{
    AssignmentStepResult res;
    res.assignment = assign(train, model.base);
    model.base.labels = in_range_mode_labels(train, model, res.assignment);

    const std::size_t k = model.size();
    for (std::size_t j = 0; j < k; ++j) {
        const auto& owner = res.assignment.owner;
        if (std::find(owner.begin(), owner.end(), j) != owner.end()) continue;

        std::size_t far = kNone;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (res.assignment.distance[i] <= 0.0) continue;
            if (far == kNone || res.assignment.distance[i] > res.assignment.distance[far] ||
                (res.assignment.distance[i] == res.assignment.distance[far] && canonical_less(train, i, far)))
                far = i;
        }
        if (far == kNone) continue;

        RsrnnModel trial = model;
        auto c = trial.base.centroid(j);
        std::copy(train.row(far).begin(), train.row(far).end(), c.begin());
        auto trial_assign = assign(train, trial.base);
        if (!std::isinf(trial.radii[j])) {
            double r = 0.0;
            for (std::size_t i = 0; i < train.size(); ++i)
                if (trial_assign.owner[i] == j) r = std::max(r, trial_assign.distance[i]);
            trial.radii[j] = r;
        }
        trial.base.labels = in_range_mode_labels(train, trial, trial_assign);
        if (rsrnn_objective(trial, train) <= rsrnn_objective(model, train)) {
            model = std::move(trial);
            res.assignment = std::move(trial_assign);
            res.reseeded.push_back(j);
        }
    }
    return res;
}

RivalCache::RivalCache(const Dataset& train, const RsrnnModel& model) { refresh(train, model); }

void RivalCache::refresh(const Dataset& train, const RsrnnModel& model)
{
    const std::size_t n = train.size();
    best_.assign(n, kNone);
    second_.assign(n, kNone);
    best_dist_.assign(n, std::numeric_limits<double>::infinity());
    second_dist_.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < model.size(); ++j) {
            const double d = distance(train.row(i), model.base.centroid(j));
            if (d < best_dist_[i]) {
                second_[i] = best_[i];
                second_dist_[i] = best_dist_[i];
                best_[i] = j;
                best_dist_[i] = d;
            } else if (d < second_dist_[i]) {
                second_[i] = j;
                second_dist_[i] = d;
            }
        }
    }
}

ScenarioRole scenario_role(bool wrong_at_j, bool wrong_at_rival, bool rival_malicious)
{
    if (wrong_at_j) return (!wrong_at_rival && !rival_malicious) ? ScenarioRole::Push : ScenarioRole::Ignored;
    return (wrong_at_rival || rival_malicious) ? ScenarioRole::Pull : ScenarioRole::Ignored;
}

int scenario_row(bool wrong_at_j, bool wrong_at_rival, bool rival_malicious)
{
    return 1 + (wrong_at_j ? 0 : 4) + (wrong_at_rival ? 0 : 2) + (rival_malicious ? 0 : 1);
}

ScenarioSets classify_scenarios(const Dataset& train, const RsrnnModel& model, std::size_t j,
                                const RivalCache& rivals)
{
    if (model.size() < 2) throw std::invalid_argument("scenario sets need at least two centroids");
    if (j >= model.size()) throw std::invalid_argument("centroid index out of range");
    std::vector<std::size_t> pull, push;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::size_t r = rivals.rival(i, j);
        const double rd = rivals.rival_distance(i, j);
        const int y = train.label(i);
        const auto role = scenario_role(y != model.base.labels[j], y != model.base.labels[r],
                                        rd > model.radii[r]);
        if (role == ScenarioRole::Pull) pull.push_back(i);
        // A push sample sitting on its rival can never be pushed into range.
        if (role == ScenarioRole::Push && rd > 0.0) push.push_back(i);
    }
    auto less = [&](std::size_t a, std::size_t b) { return canonical_less(train, a, b); };
    std::stable_sort(pull.begin(), pull.end(), less);
    std::stable_sort(push.begin(), push.end(), less);

    ScenarioSets s;
    const auto c = model.base.centroid(j);
    for (std::size_t i : pull) {
        s.s_star.push_back(i);
        s.s_star_distance.push_back(distance(train.row(i), c));
    }
    for (std::size_t i : push) {
        s.s_c_star.push_back(i);
        s.s_c_star_distance.push_back(distance(train.row(i), c));
        s.rival_distance.push_back(rivals.rival_distance(i, j));
    }
    return s;
}

SurrogateProblem SurrogateProblem::from_sets(const Dataset& train, const ScenarioSets& sets)
{
    SurrogateProblem p;
    p.dims = train.dims();
    for (std::size_t i : sets.s_star) p.pull.insert(p.pull.end(), train.row(i).begin(), train.row(i).end());
    for (std::size_t i : sets.s_c_star) p.push.insert(p.push.end(), train.row(i).begin(), train.row(i).end());
    p.push_rival = sets.rival_distance;
    return p;
}

SurrogateEval surrogate_value_and_gradient(std::span<const double> centroid,
                                           const SurrogateProblem& problem, double mu, double radius)
{
    const std::size_t dims = problem.dims;
    if (centroid.size() != dims) throw std::invalid_argument("centroid dimension mismatch");
    SurrogateEval out;
    out.gradient.assign(dims, 0.0);

    for (std::size_t p = 0; p < problem.pull_count(); ++p) {
        std::span<const double> x(problem.pull.data() + p * dims, dims);
        const double r = distance(centroid, x);
        if (r < radius) {
            out.value += r;
            if (r >= kSingularDistance)
                for (std::size_t d = 0; d < dims; ++d) out.gradient[d] += (centroid[d] - x[d]) / r;
        } else {
            out.value += radius;
        }
    }
    for (std::size_t p = 0; p < problem.push_count(); ++p) {
        std::span<const double> x(problem.push.data() + p * dims, dims);
        const double r = distance(centroid, x);
        const double slack = mu * problem.push_rival[p] - r;
        if (slack > 0.0) {
            out.value += slack;
            if (r >= kSingularDistance)
                for (std::size_t d = 0; d < dims; ++d) out.gradient[d] -= (centroid[d] - x[d]) / r;
        }
    }
    return out;
}

std::size_t centroid_loss(const Dataset& train, const RsrnnModel& model, std::size_t j,
                          const RivalCache& rivals, std::span<const double> position)
{
    const auto& labels = model.base.labels;
    std::size_t loss = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const double r = distance(train.row(i), position);
        const std::size_t rv = rivals.rival(i, j);
        const double rd = rivals.rival_distance(i, j);
        const bool owned = rv == kNone || r < rd || (r == rd && j < rv);
        const int y = train.label(i);
        if (owned)
            loss += r <= model.radii[j] ? (y != labels[j]) : 1;
        else
            loss += rd <= model.radii[rv] ? (y != labels[rv]) : 1;
    }
    return loss;
}

CentroidUpdate update_centroid(const Dataset& train, const RsrnnModel& model, std::size_t j,
                               const RivalCache& rivals, const SurrogateOptions& options)
{
    const auto incumbent = model.base.centroid(j);
    CentroidUpdate res;
    res.position.assign(incumbent.begin(), incumbent.end());
    res.loss_before = centroid_loss(train, model, j, rivals, incumbent);
    res.loss_after = res.loss_before;

    const auto sets = classify_scenarios(train, model, j, rivals);
    const std::size_t members = sets.s_star.size() + sets.s_c_star.size();
    if (members == 0) return res;
    const auto problem = SurrogateProblem::from_sets(train, sets);
    const double radius = model.radii[j];
    // The surrogate is a sum over members; steps use its mean so one step size
    // fits clusters of any size. The minimizer is unchanged.
    const double scale = 1.0 / static_cast<double>(members);

    std::vector<double> c = res.position;
    std::vector<double> best;
    std::size_t best_loss = std::numeric_limits<std::size_t>::max();
    for (double mu : options.mu_grid) {
        for (std::size_t t = 0; t < options.sgd_epochs; ++t) {
            const auto eval = surrogate_value_and_gradient(c, problem, mu, radius);
            const double step = options.sgd_step / (1.0 + static_cast<double>(t)) * scale;
            for (std::size_t d = 0; d < c.size(); ++d) c[d] -= step * eval.gradient[d];
        }
        const std::size_t loss = centroid_loss(train, model, j, rivals, c);
        if (loss < best_loss) {
            best_loss = loss;
            best = c;
        }
    }
    if (best_loss < res.loss_before) {
        res.position = std::move(best);
        res.accepted = true;
        res.loss_after = best_loss;
    }
    return res;
}

RsrnnModel run_em(const Dataset& train, RsrnnModel model, const EmOptions& options, TrainTrace* trace)
{
    model.validate();
    if (train.dims() != model.base.dims) throw std::invalid_argument("dimension mismatch between dataset and model");
    if (options.max_em_iters < 1) throw std::invalid_argument("max_em_iters must be >= 1");
    const std::size_t k = model.size();
    TrainTrace local;
    TrainTrace& tr = trace ? *trace : local;
    tr = {};
    tr.objective.push_back(rsrnn_objective(model, train));

    for (std::size_t iter = 0; iter < options.max_em_iters; ++iter) {
        const auto labels_before = model.base.labels;
        const auto step = assignment_step(train, model);
        bool changed = labels_before != model.base.labels || !step.reseeded.empty();

        RivalCache rivals(train, model);
        for (std::size_t j = 0; j < k; ++j) {
            if (k >= 2) {
                auto upd = update_centroid(train, model, j, rivals, options.optimizer);
                if (upd.accepted) {
                    auto c = model.base.centroid(j);
                    std::copy(upd.position.begin(), upd.position.end(), c.begin());
                    rivals.refresh(train, model);
                    changed = true;
                }
            }
            if (options.optimize_radii) {
                std::vector<double> dist;
                std::vector<std::uint8_t> wrong;
                for (std::size_t i = 0; i < train.size(); ++i) {
                    if (rivals.owner(i) != j) continue;
                    dist.push_back(rivals.owner_distance(i));
                    wrong.push_back(train.label(i) != model.base.labels[j]);
                }
                const auto sol = optimal_radius(dist, wrong, model.lambda);
                if (sol.radius != model.radii[j]) {
                    model.radii[j] = sol.radius;
                    changed = true;
                }
            }
        }
        tr.objective.push_back(rsrnn_objective(model, train));
        tr.iterations = iter + 1;
        if (!changed) {
            tr.converged = true;
            break;
        }
    }
    return model;
}

std::vector<double> DefenseConfig::default_prune_grid()
{
    std::vector<double> grid;
    for (int step = 0; step <= 14; ++step) grid.push_back(0.20 + 0.05 * step);
    return grid;
}

void DefenseConfig::validate() const
{
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (max_em_iters < 1 || optimizer.sgd_epochs < 1) throw std::invalid_argument("iteration counts must be >= 1");
    if (optimizer.mu_grid.empty()) throw std::invalid_argument("mu grid must not be empty");
    auto check_grid = [](const std::vector<double>& g, const char* what) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(g[i] >= 0.0 && g[i] <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
            if (i > 0 && !(g[i] > g[i - 1])) throw std::invalid_argument(std::string(what) + " must be ascending");
        }
    };
    check_grid(optimizer.mu_grid, "mu grid");
    check_grid(prune_grid, "prune grid");
    if (prune_enabled && prune_grid.empty()) throw std::invalid_argument("prune grid must not be empty");
}

DetectionResult make_detection(const RsrnnModel& model, const Dataset& train, std::vector<std::size_t> pruned)
{
    DetectionResult d;
    std::sort(pruned.begin(), pruned.end());
    d.pruned_samples = std::move(pruned);
    const auto a = assign(train, model.base);
    for (std::size_t i = 0; i < train.size(); ++i)
        if (a.distance[i] > model.radii[a.owner[i]]) d.out_of_range_samples.push_back(i);
    std::set_union(d.pruned_samples.begin(), d.pruned_samples.end(), d.out_of_range_samples.begin(),
                   d.out_of_range_samples.end(), std::back_inserter(d.detected));
    return d;
}

PruneResult prune(const RsrnnModel& model, const Dataset& train, const Dataset& val, const DefenseConfig& cfg)
{
    const std::size_t k = model.size();
    const auto a = assign(train, model.base);
    std::vector<std::vector<int>> members(k);
    for (std::size_t i = 0; i < train.size(); ++i) members[a.owner[i]].push_back(train.label(i));
    std::vector<double> impurity(k, 0.0);
    for (std::size_t j = 0; j < k; ++j)
        if (!members[j].empty()) impurity[j] = gini(members[j], train.class_count());

    PruneResult res;
    res.model = model;
    res.cleaned_train = train;
    res.kept_samples.resize(train.size());
    std::iota(res.kept_samples.begin(), res.kept_samples.end(), std::size_t{0});
    res.val_errors_before = rsrnn_loss(model, val);
    res.val_errors_after = res.val_errors_before;
    res.candidates.push_back({std::nullopt, true, 0, 0, res.val_errors_before});

    struct Best {
        double cutoff;
        std::size_t errors;
        RsrnnModel model;
        std::vector<std::size_t> centroids, removed, kept;
    };
    std::optional<Best> best;

    for (double cutoff : cfg.prune_grid) {
        std::vector<std::size_t> pruned;
        for (std::size_t j = 0; j < k; ++j)
            if (!members[j].empty() && impurity[j] > cutoff) pruned.push_back(j);
        PruneCandidate cand{cutoff, true, pruned.size(), 0, res.val_errors_before};
        if (pruned.empty()) {
            res.candidates.push_back(cand);
            continue;
        }
        std::vector<bool> drop(k, false);
        for (std::size_t j : pruned) drop[j] = true;
        std::vector<std::size_t> removed, kept;
        for (std::size_t i = 0; i < train.size(); ++i) (drop[a.owner[i]] ? removed : kept).push_back(i);
        cand.removed_samples = removed.size();
        if (pruned.size() == k || kept.empty()) {
            cand.feasible = false;
            res.candidates.push_back(cand);
            continue;
        }
        const Dataset cleaned = train.subset(kept);
        const std::size_t k_left = std::min(k - pruned.size(), cleaned.size());
        SrnnModel init = init_srnn(cleaned, k_left, derive_seed(cfg.seed, "prune-init"));
        RsrnnModel candidate = cfg.infinite_radii ? with_infinite_radii(std::move(init))
                                                  : with_covering_radii(std::move(init), cleaned);
        candidate.lambda = model.lambda;
        candidate.alpha = model.alpha;
        cand.val_errors = rsrnn_loss(candidate, val);
        res.candidates.push_back(cand);
        // Ascending grid: "<=" prefers the larger cut-off on ties.
        if (!best || cand.val_errors <= best->errors)
            best = Best{cutoff, cand.val_errors, std::move(candidate), std::move(pruned), std::move(removed),
                        std::move(kept)};
    }

    if (best && best->errors < res.val_errors_before) {
        res.cutoff = best->cutoff;
        res.model = std::move(best->model);
        res.model.chosen_cutoff = best->cutoff;
        res.pruned_centroids = std::move(best->centroids);
        res.pruned_samples = std::move(best->removed);
        res.kept_samples = std::move(best->kept);
        res.cleaned_train = train.subset(res.kept_samples);
        res.val_errors_after = best->errors;
    }
    return res;
}

DefenseResult train_rsrnn(const Dataset& train, const Dataset& val, const DefenseConfig& cfg)
{
    cfg.validate();
    if (val.size() == 0) throw std::invalid_argument("validation set is empty");
    if (val.dims() != train.dims()) throw std::invalid_argument("validation set dimension differs from trainset");
    if (cfg.k > train.size()) throw std::invalid_argument("K exceeds the number of training samples");

    TrainConfig tc;
    tc.k = cfg.k;
    tc.max_em_iters = cfg.max_em_iters;
    tc.seed = cfg.seed;
    tc.optimizer = cfg.optimizer;

    EmOptions em;
    em.optimizer = cfg.optimizer;
    em.max_em_iters = cfg.max_em_iters;
    em.optimize_radii = !cfg.infinite_radii;

    DefenseResult out;
    const SrnnModel srnn = train_srnn(train, tc, &out.trace);
    RsrnnModel model;
    if (cfg.infinite_radii) {
        model = with_infinite_radii(srnn);
    } else {
        model = with_covering_radii(srnn, train);
        model.lambda = cfg.lambda;
        model.alpha = cfg.alpha;
        model = run_em(train, std::move(model), em, &out.trace);
    }
    model.alpha = cfg.alpha;

    out.kept_samples.resize(train.size());
    std::iota(out.kept_samples.begin(), out.kept_samples.end(), std::size_t{0});
    if (!cfg.prune_enabled) {
        out.model = std::move(model);
        out.detection = make_detection(out.model, train, {});
        out.cleaned_train = train;
        out.val_errors = rsrnn_loss(out.model, val);
        return out;
    }

    auto pr = prune(model, train, val, cfg);

    // Continue from the surviving centroids, or restart a plain SRNN on the cleaned data.
    RsrnnModel cont;
    RsrnnModel restart;
    if (pr.cutoff) {
        std::vector<bool> drop(model.size(), false);
        for (std::size_t j : pr.pruned_centroids) drop[j] = true;
        RsrnnModel kept = model;
        kept.base.centroids.clear();
        kept.base.labels.clear();
        kept.radii.clear();
        for (std::size_t j = 0; j < model.size(); ++j) {
            if (drop[j]) continue;
            auto c = model.base.centroid(j);
            kept.base.centroids.insert(kept.base.centroids.end(), c.begin(), c.end());
            kept.base.labels.push_back(model.base.labels[j]);
            kept.radii.push_back(model.radii[j]);
        }
        cont = run_em(pr.cleaned_train, std::move(kept), em);
        TrainConfig rc = tc;
        rc.k = std::min(cont.size(), pr.cleaned_train.size());
        restart = with_infinite_radii(train_srnn(pr.cleaned_train, rc));
    } else {
        cont = model;
        restart = with_infinite_radii(srnn);
    }
    restart.lambda = model.lambda;
    restart.alpha = model.alpha;

    const std::size_t cont_err = rsrnn_loss(cont, val);
    const std::size_t restart_err = rsrnn_loss(restart, val);
    if (restart_err < cont_err) {
        out.model = std::move(restart);
        out.retrain = RetrainChoice::Restart;
        out.val_errors = restart_err;
    } else {
        out.model = std::move(cont);
        out.retrain = RetrainChoice::Continue;
        out.val_errors = cont_err;
    }
    out.model.chosen_cutoff = pr.cutoff;
    out.detection = make_detection(out.model, train, pr.pruned_samples);
    out.cleaned_train = pr.cleaned_train;
    out.kept_samples = pr.kept_samples;
    out.pruning = std::move(pr);
    return out;
}

nlohmann::json rsrnn_to_json(const RsrnnModel& model)
{
    auto doc = srnn_to_json(model.base);
    doc["kind"] = "rsrnn";
    auto radii = nlohmann::json::array();
    for (double r : model.radii) radii.push_back(std::isinf(r) ? nlohmann::json(nullptr) : nlohmann::json(r));
    doc["radii"] = std::move(radii);
    doc["lambda"] = model.lambda;
    doc["alpha"] = model.alpha;
    doc["chosen_cutoff"] = model.chosen_cutoff ? nlohmann::json(*model.chosen_cutoff) : nlohmann::json(nullptr);
    return doc;
}

RsrnnModel rsrnn_from_json(const nlohmann::json& doc)
{
    RsrnnModel m;
    m.base = srnn_from_json(doc);
    try {
        if (doc.contains("radii")) {
            for (const auto& r : doc["radii"]) m.radii.push_back(r.is_null() ? kInfiniteRadius : r.get<double>());
        } else {
            m.radii.assign(m.base.size(), kInfiniteRadius);
        }
        m.lambda = doc.value("lambda", 0.0);
        m.alpha = doc.value("alpha", 0.0);
        if (doc.contains("chosen_cutoff") && !doc["chosen_cutoff"].is_null())
            m.chosen_cutoff = doc["chosen_cutoff"].get<double>();
        m.validate();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid model: ") + e.what());
    }
    return m;
}

std::string detection_to_csv(const DetectionResult& detection)
{
    std::vector<std::pair<std::size_t, const char*>> rows;
    for (std::size_t i : detection.pruned_samples) rows.emplace_back(i, "pruned");
    for (std::size_t i : detection.out_of_range_samples) rows.emplace_back(i, "out_of_range");
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::ostringstream out;
    out << "sample_index,reason\n";
    for (const auto& [i, reason] : rows) out << i << ',' << reason << '\n';
    return out.str();
}

}  // namespace flipguard
