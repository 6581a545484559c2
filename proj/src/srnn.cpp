#include "flipguard/srnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flipguard/defense.hpp"
#include "flipguard/rng.hpp"

namespace flipguard {

double distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

void SrnnModel::validate() const
{
    if (labels.empty()) throw std::invalid_argument("model needs K >= 1");
    if (dims == 0 || centroids.size() != labels.size() * dims)
        throw std::invalid_argument("centroid matrix size does not match K x D");
    if (class_count < 2) throw std::invalid_argument("model needs M >= 2");
    for (int y : labels)
        if (y < 0 || y >= class_count) throw std::invalid_argument("centroid label out of range");
    for (double v : centroids)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite centroid");
    if (!label_names.empty() && label_names.size() != static_cast<std::size_t>(class_count))
        throw std::invalid_argument("label_names length differs from M");
}

std::size_t nearest_centroid(const SrnnModel& model, std::span<const double> x, double* dist)
{
    if (x.size() != model.dims) throw std::invalid_argument("dimension mismatch between sample and model");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model.size(); ++j) {
        const double d = distance(x, model.centroid(j));
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

Assignment assign(const Dataset& ds, const SrnnModel& model)
{
    if (ds.dims() != model.dims) throw std::invalid_argument("dimension mismatch between dataset and model");
    Assignment a;
    a.owner.resize(ds.size());
    a.distance.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) a.owner[i] = nearest_centroid(model, ds.row(i), &a.distance[i]);
    return a;
}

std::optional<int> mode_label(std::span<const int> labels, int class_count)
{
    if (labels.empty()) return std::nullopt;
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::string to_string(InitMethod method) { return method == InitMethod::KMeans ? "kmeans" : "kmeans++"; }

InitMethod parse_init_method(const std::string& text)
{
    if (text == "kmeans++") return InitMethod::KMeansPlusPlus;
    if (text == "kmeans") return InitMethod::KMeans;
    throw std::invalid_argument("unknown init method '" + text + "'");
}

std::vector<std::size_t> kmeanspp_seeds(const Dataset& ds, std::size_t k, Rng& rng)
{
    const std::size_t n = ds.size();
    if (k < 1 || k > n) throw std::invalid_argument("k-means++ needs 1 <= K <= N");
    std::vector<std::size_t> seeds;
    seeds.reserve(k);
    std::vector<bool> taken(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    auto add = [&](std::size_t idx) {
        seeds.push_back(idx);
        taken[idx] = true;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = distance(ds.row(i), ds.row(idx));
            d2[i] = std::min(d2[i], d * d);
        }
    };

    add(rng.below(n));
    while (seeds.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i]) total += d2[i];
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || d2[i] <= 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > target) break;
            }
        } else {
            // Only duplicates of chosen points remain: pick uniformly among the untaken.
            std::size_t r = rng.below(n - seeds.size());
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                if (r-- == 0) {
                    pick = i;
                    break;
                }
            }
        }
        add(pick);
    }
    return seeds;
}

namespace {

struct LloydRun {
    SrnnModel model;
    double sse = 0.0;
    std::size_t iterations = 0;
};

LloydRun lloyd(const Dataset& train, std::size_t k, Rng& rng, std::size_t max_iters)
{
    const auto seeds = kmeanspp_seeds(train, k, rng);
    const std::size_t dims = train.dims();
    LloydRun run;
    SrnnModel& m = run.model;
    m.dims = dims;
    m.class_count = train.class_count();
    m.label_names = train.label_names();
    m.labels.assign(k, 0);
    for (std::size_t idx : seeds) {
        auto r = train.row(idx);
        m.centroids.insert(m.centroids.end(), r.begin(), r.end());
    }

    std::vector<std::size_t> owner(train.size(), k);
    std::vector<double> sums(k * dims);
    std::vector<std::size_t> counts(k);
    while (run.iterations < max_iters) {
        bool changed = false;
        for (std::size_t i = 0; i < train.size(); ++i) {
            const std::size_t j = nearest_centroid(m, train.row(i));
            if (j != owner[i]) {
                owner[i] = j;
                changed = true;
            }
        }
        if (!changed) break;
        ++run.iterations;
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < train.size(); ++i) {
            auto r = train.row(i);
            for (std::size_t d = 0; d < dims; ++d) sums[owner[i] * dims + d] += r[d];
            ++counts[owner[i]];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;
            for (std::size_t d = 0; d < dims; ++d)
                m.centroids[j * dims + d] = sums[j * dims + d] / static_cast<double>(counts[j]);
        }
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        double d = 0.0;
        nearest_centroid(m, train.row(i), &d);
        run.sse += d * d;
    }
    return run;
}

}  // namespace

SrnnModel kmeans_centroids(const Dataset& train, std::size_t k, std::uint64_t seed, const KmeansOptions& options,
                           std::size_t* iterations)
{
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (k > train.size()) throw std::invalid_argument("K exceeds the number of training samples");
    if (options.restarts < 1) throw std::invalid_argument("k-means needs at least one start");
    Rng rng(derive_seed(seed, "kmeans"));
    std::optional<LloydRun> best;
    for (std::size_t s = 0; s < options.restarts; ++s) {
        auto run = lloyd(train, k, rng, options.max_iters);
        if (!best || run.sse < best->sse) best = std::move(run);
    }
    if (iterations) *iterations = best->iterations;
    return std::move(best->model);
}

SrnnModel init_srnn(const Dataset& train, std::size_t k, std::uint64_t seed, InitMethod method)
{
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (k > train.size()) throw std::invalid_argument("K exceeds the number of training samples");
    SrnnModel m;
    if (method == InitMethod::KMeans) {
        m = kmeans_centroids(train, k, seed);
    } else {
        Rng rng(derive_seed(seed, "kmeans++"));
        const auto seeds = kmeanspp_seeds(train, k, rng);
        m.dims = train.dims();
        m.class_count = train.class_count();
        m.label_names = train.label_names();
        for (std::size_t idx : seeds) {
            auto r = train.row(idx);
            m.centroids.insert(m.centroids.end(), r.begin(), r.end());
        }
    }
    m.labels.assign(k, 0);
    const auto a = assign(train, m);
    std::vector<std::vector<int>> members(k);
    for (std::size_t i = 0; i < train.size(); ++i) members[a.owner[i]].push_back(train.label(i));
    for (std::size_t j = 0; j < k; ++j) m.labels[j] = mode_label(members[j], m.class_count).value_or(0);
    return m;
}

SrnnModel fit_srnn(const Dataset& train, SrnnModel initial, const TrainConfig& cfg, TrainTrace* trace)
{
    if (cfg.max_em_iters < 1) throw std::invalid_argument("max_em_iters must be >= 1");
    EmOptions opt;
    opt.optimizer = cfg.optimizer;
    opt.max_em_iters = cfg.max_em_iters;
    opt.optimize_radii = false;
    auto fitted = run_em(train, with_infinite_radii(std::move(initial)), opt, trace);
    return std::move(fitted.base);
}

SrnnModel train_srnn(const Dataset& train, const TrainConfig& cfg, TrainTrace* trace)
{
    return fit_srnn(train, init_srnn(train, cfg.k, cfg.seed, cfg.init), cfg, trace);
}

int predict(const SrnnModel& model, std::span<const double> x)
{
    return model.labels[nearest_centroid(model, x)];
}

std::size_t error_count(const SrnnModel& model, const Dataset& ds)
{
    std::size_t errors = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) errors += predict(model, ds.row(i)) != ds.label(i);
    return errors;
}

double error_ratio(const SrnnModel& model, const Dataset& ds)
{
    return static_cast<double>(error_count(model, ds)) / static_cast<double>(ds.size());
}

std::size_t srnn_loss(const SrnnModel& model, const Dataset& ds) { return error_count(model, ds); }

nlohmann::json srnn_to_json(const SrnnModel& model)
{
    nlohmann::json doc;
    doc["version"] = kModelFormatVersion;
    doc["kind"] = "srnn";
    doc["K"] = model.size();
    doc["D"] = model.dims;
    doc["M"] = model.class_count;
    doc["centroids"] = model.centroids;
    doc["centroid_labels"] = model.labels;
    if (!model.label_names.empty()) doc["label_names"] = model.label_names;
    return doc;
}

SrnnModel srnn_from_json(const nlohmann::json& doc)
{
    try {
        if (doc.at("version").get<int>() != kModelFormatVersion)
            throw DataError("unsupported model format version");
        SrnnModel m;
        m.dims = doc.at("D").get<std::size_t>();
        m.class_count = doc.at("M").get<int>();
        m.centroids = doc.at("centroids").get<std::vector<double>>();
        m.labels = doc.at("centroid_labels").get<std::vector<int>>();
        if (doc.contains("label_names")) m.label_names = doc["label_names"].get<std::vector<std::string>>();
        if (doc.at("K").get<std::size_t>() != m.labels.size())
            throw DataError("model K does not match centroid_labels");
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid model: ") + e.what());
    }
}

void save_json(const nlohmann::json& doc, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

nlohmann::json load_json(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace flipguard
