#include "flipguard/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "flipguard/rng.hpp"

namespace flipguard {

Dataset::Dataset(std::vector<double> features, std::size_t dims, std::vector<int> labels,
                 int class_count, Truth truth, std::vector<std::string> label_names)
    : features_(std::move(features)),
      dims_(dims),
      labels_(std::move(labels)),
      class_count_(class_count),
      truth_(std::move(truth)),
      label_names_(std::move(label_names))
{
    validate();
}

void Dataset::validate() const
{
    if (dims_ < 1) throw std::invalid_argument("dataset needs D >= 1");
    if (labels_.empty()) throw std::invalid_argument("dataset needs N >= 1");
    if (class_count_ < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (features_.size() != labels_.size() * dims_)
        throw std::invalid_argument("feature matrix size does not match N x D");
    for (int y : labels_)
        if (y < 0 || y >= class_count_) throw std::invalid_argument("label out of range");
    for (double v : features_)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    if (truth_.original_labels && truth_.original_labels->size() != labels_.size())
        throw std::invalid_argument("original_labels length differs from N");
    if (truth_.cluster_id && truth_.cluster_id->size() != labels_.size())
        throw std::invalid_argument("cluster_id length differs from N");
    if (!label_names_.empty() && label_names_.size() != static_cast<std::size_t>(class_count_))
        throw std::invalid_argument("label_names length differs from M");
}

Dataset Dataset::with_labels(std::vector<int> labels) const
{
    return Dataset(features_, dims_, std::move(labels), class_count_, truth_, label_names_);
}

Dataset Dataset::with_truth(Truth truth) const
{
    return Dataset(features_, dims_, labels_, class_count_, std::move(truth), label_names_);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const
{
    std::vector<double> f;
    f.reserve(indices.size() * dims_);
    std::vector<int> y;
    y.reserve(indices.size());
    Truth t;
    if (truth_.cluster_id) t.cluster_id.emplace();
    if (truth_.original_labels) t.original_labels.emplace();
    for (std::size_t i : indices) {
        if (i >= size()) throw std::invalid_argument("subset index out of range");
        auto r = row(i);
        f.insert(f.end(), r.begin(), r.end());
        y.push_back(labels_[i]);
        if (t.cluster_id) t.cluster_id->push_back((*truth_.cluster_id)[i]);
        if (t.original_labels) t.original_labels->push_back((*truth_.original_labels)[i]);
    }
    return Dataset(std::move(f), dims_, std::move(y), class_count_, std::move(t), label_names_);
}

std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions)
{
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("split fraction must be in (0,1)");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

    std::vector<std::size_t> sizes(fractions.size());
    std::vector<double> remainder(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        const double exact = fractions[k] * static_cast<double>(n);
        sizes[k] = static_cast<std::size_t>(std::floor(exact));
        remainder[k] = exact - static_cast<double>(sizes[k]);
        assigned += sizes[k];
    }
    std::vector<std::size_t> rank(fractions.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[rank[k % rank.size()]];

    for (std::size_t s : sizes)
        if (s == 0) throw std::invalid_argument("split would leave a part empty");
    return sizes;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec)
{
    const double fr[3] = {spec.train_fraction, spec.val_fraction, spec.test_fraction};
    const auto sizes = split_sizes(n, fr);

    SplitIndices out;
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    Rng rng(derive_seed(spec.seed, "split"));
    rng.shuffle(std::span<std::size_t>(out.order));

    auto first = out.order.begin();
    out.train.assign(first, first + sizes[0]);
    out.val.assign(first + sizes[0], first + sizes[0] + sizes[1]);
    out.test.assign(first + sizes[0] + sizes[1], out.order.end());
    return out;
}

SplitResult split(const Dataset& ds, const SplitSpec& spec)
{
    auto idx = split_indices(ds.size(), spec);
    SplitResult r{ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test), {}};
    r.indices = std::move(idx);
    return r;
}

std::vector<double> Scaler::apply(std::span<const double> x) const
{
    if (x.size() != mean.size()) throw std::invalid_argument("scaler dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / scale[d];
    return out;
}

Dataset Scaler::apply(const Dataset& ds) const
{
    if (ds.dims() != mean.size()) throw std::invalid_argument("scaler dimension mismatch");
    std::vector<double> f(ds.features().begin(), ds.features().end());
    const std::size_t dims = ds.dims();
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t d = 0; d < dims; ++d)
            f[i * dims + d] = (f[i * dims + d] - mean[d]) / scale[d];
    std::vector<int> y(ds.labels().begin(), ds.labels().end());
    return Dataset(std::move(f), dims, std::move(y), ds.class_count(), ds.truth(), ds.label_names());
}

StandardizeResult standardize(const Dataset& train)
{
    const std::size_t n = train.size();
    const std::size_t dims = train.dims();
    Scaler s;
    s.mean.assign(dims, 0.0);
    s.scale.assign(dims, 1.0);
    for (std::size_t d = 0; d < dims; ++d) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += train.row(i)[d];
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = train.row(i)[d] - mean;
            ss += c * c;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        s.mean[d] = mean;
        // Relative threshold: a column of equal values can pick up rounding noise.
        if (sd > 1e-12 * std::max(1.0, std::abs(mean))) s.scale[d] = sd;
    }
    auto transformed = s.apply(train);
    return {std::move(s), std::move(transformed)};
}

void MixtureSpec::validate() const
{
    if (components.empty()) throw std::invalid_argument("mixture needs at least one component");
    const std::size_t dims = components.front().mean.size();
    if (dims == 0) throw std::invalid_argument("mixture component mean must be non-empty");
    int max_label = -1;
    std::vector<bool> seen;
    for (const auto& c : components) {
        if (c.mean.size() != dims) throw std::invalid_argument("mixture components differ in D");
        if (!(c.stddev > 0.0) || !std::isfinite(c.stddev))
            throw std::invalid_argument("mixture stddev must be positive");
        if (c.count < 1) throw std::invalid_argument("mixture count must be >= 1");
        if (c.label < 0) throw std::invalid_argument("mixture label must be >= 0");
        for (double v : c.mean)
            if (!std::isfinite(v)) throw std::invalid_argument("mixture mean must be finite");
        max_label = std::max(max_label, c.label);
        if (seen.size() <= static_cast<std::size_t>(c.label)) seen.resize(c.label + 1, false);
        seen[c.label] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw std::invalid_argument("mixture labels must form a contiguous range from 0");
    if (max_label < 1) throw std::invalid_argument("mixture needs at least 2 classes");
}

Dataset gen_mixture(const MixtureSpec& spec)
{
    spec.validate();
    const std::size_t dims = spec.dims();
    Rng rng(derive_seed(spec.seed, "mixture"));
    std::vector<double> f;
    std::vector<int> y;
    std::vector<int> cluster;
    int classes = 0;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
        const auto& c = spec.components[k];
        classes = std::max(classes, c.label + 1);
        for (std::size_t s = 0; s < c.count; ++s) {
            for (std::size_t d = 0; d < dims; ++d) f.push_back(c.mean[d] + c.stddev * rng.normal());
            y.push_back(c.label);
            cluster.push_back(static_cast<int>(k));
        }
    }
    Truth t;
    t.cluster_id = std::move(cluster);
    std::vector<std::string> names;
    for (int k = 0; k < classes; ++k) names.push_back(std::to_string(k));
    return Dataset(std::move(f), dims, std::move(y), classes, std::move(t), std::move(names));
}

namespace {

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && std::isfinite(out);
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvOptions& options)
{
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    std::size_t label_col = 0;
    bool label_resolved = false;

    if (const auto* idx = std::get_if<std::size_t>(&options.label_column)) {
        label_col = *idx;
        label_resolved = true;
    } else if (!options.has_header) {
        throw DataError("label column given by name requires a header row");
    }

    std::vector<double> features;
    std::vector<int> labels;
    std::vector<std::string> names = options.known_labels;
    std::map<std::string, int> name_to_id;
    for (std::size_t k = 0; k < names.size(); ++k) name_to_id.emplace(names[k], static_cast<int>(k));
    std::size_t width = 0;
    std::size_t row = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_fields(line);
        if (options.has_header && header.empty()) {
            header = fields;
            if (!label_resolved) {
                const auto& want = std::get<std::string>(options.label_column);
                auto it = std::find(header.begin(), header.end(), want);
                if (it == header.end()) throw DataError("label column '" + want + "' not in header");
                label_col = static_cast<std::size_t>(it - header.begin());
                label_resolved = true;
            }
            width = header.size();
            continue;
        }
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " fields, found " + std::to_string(fields.size()));
        if (label_col >= width)
            throw DataError("label column index " + std::to_string(label_col) + " out of range");
        for (std::size_t c = 0; c < width; ++c) {
            if (c == label_col) continue;
            double v = 0.0;
            if (!parse_double(fields[c], v))
                throw DataError("non-numeric feature at row " + std::to_string(row) + ", column " +
                                std::to_string(c) + " (line " + std::to_string(line_no) + "): '" +
                                fields[c] + "'");
            features.push_back(v);
        }
        const auto& name = fields[label_col];
        auto [it, inserted] = name_to_id.emplace(name, static_cast<int>(names.size()));
        if (inserted) names.push_back(name);
        labels.push_back(it->second);
        ++row;
    }
    if (labels.empty()) throw DataError("no data rows");
    if (width < 2) throw DataError("need at least one feature column besides the label");
    if (names.size() < 2) throw DataError("fewer than 2 classes");
    const int m = static_cast<int>(names.size());
    return Dataset(std::move(features), width - 1, std::move(labels), m, {}, std::move(names));
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), options);
}

std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string to_csv(const Dataset& ds)
{
    std::string out;
    for (std::size_t d = 0; d < ds.dims(); ++d) out += "x" + std::to_string(d) + ",";
    out += "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.row(i)) out += format_double(v) + ",";
        const int y = ds.label(i);
        out += ds.label_names().empty() ? std::to_string(y) : ds.label_names()[y];
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_csv(ds);
}

void write_truth_csv(const Dataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "index,cluster_id,original_label\n";
    const auto& t = ds.truth();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << i << ',' << (t.cluster_id ? (*t.cluster_id)[i] : -1) << ',';
        if (t.original_labels) {
            const int y = (*t.original_labels)[i];
            out << (ds.label_names().empty() ? std::to_string(y) : ds.label_names()[y]);
        }
        out << '\n';
    }
}

Truth load_truth_csv(const std::filesystem::path& path, const Dataset& ds)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::size_t n = ds.size();
    const auto& names = ds.label_names();
    std::string line;
    std::getline(in, line);
    std::vector<int> cluster(n, -1), original(n, -1);
    std::vector<bool> seen(n, false);
    bool any_cluster = false, any_original = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no);
        auto f = split_fields(line);
        if (f.size() != 3) throw DataError(where + ": expected 3 fields");
        std::size_t idx = 0;
        try {
            idx = std::stoul(f[0]);
            cluster.at(idx) = std::stoi(f[1]);
        } catch (const std::exception&) {
            throw DataError(where + ": malformed index or cluster id");
        }
        if (seen[idx]) throw DataError(where + ": duplicate index");
        seen[idx] = true;
        any_cluster |= cluster[idx] >= 0;
        if (f[2].empty()) continue;
        if (!names.empty()) {
            auto it = std::find(names.begin(), names.end(), f[2]);
            if (it == names.end()) throw DataError(where + ": unknown label '" + f[2] + "'");
            original[idx] = static_cast<int>(it - names.begin());
        } else {
            try {
                original[idx] = std::stoi(f[2]);
            } catch (const std::exception&) {
                throw DataError(where + ": malformed label");
            }
        }
        if (original[idx] < 0 || original[idx] >= ds.class_count())
            throw DataError(where + ": label out of range");
        any_original = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw DataError(path.string() + ": row count differs from dataset");
    Truth t;
    if (any_cluster) t.cluster_id = std::move(cluster);
    if (any_original) {
        if (std::find(original.begin(), original.end(), -1) != original.end())
            throw DataError(path.string() + ": original labels must be given for every row");
        t.original_labels = std::move(original);
    }
    return t;
}

}  // namespace flipguard
