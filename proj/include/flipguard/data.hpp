#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace flipguard {

// Raised for malformed input files and inconsistent data. Contract violations
// by callers (bad sizes, out-of-range parameters) use std::invalid_argument.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ground-truth annotations, present only for synthetic or poisoned data.
struct Truth {
    std::optional<std::vector<int>> cluster_id;
    std::optional<std::vector<int>> original_labels;
};

// N x D row-major features with dense labels in {0..M-1}.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<double> features, std::size_t dims, std::vector<int> labels,
            int class_count, Truth truth = {}, std::vector<std::string> label_names = {});

    std::size_t size() const { return labels_.size(); }
    std::size_t dims() const { return dims_; }
    int class_count() const { return class_count_; }

    std::span<const double> row(std::size_t i) const
    {
        return {features_.data() + i * dims_, dims_};
    }
    std::span<const double> features() const { return features_; }
    std::span<const int> labels() const { return labels_; }
    int label(std::size_t i) const { return labels_[i]; }

    const Truth& truth() const { return truth_; }
    // Original label names indexed by dense id; empty for synthetic data.
    const std::vector<std::string>& label_names() const { return label_names_; }

    // Copy with labels replaced; truth and names carried over.
    Dataset with_labels(std::vector<int> labels) const;
    Dataset with_truth(Truth truth) const;
    // Rows in the given order; truth is subset alongside.
    Dataset subset(std::span<const std::size_t> indices) const;

private:
    void validate() const;

    std::vector<double> features_;
    std::size_t dims_ = 0;
    std::vector<int> labels_;
    int class_count_ = 0;
    Truth truth_;
    std::vector<std::string> label_names_;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.08;
    double test_fraction = 0.12;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
    // Full permutation; train, val and test are consecutive slices of it.
    std::vector<std::size_t> order;
};

struct SplitResult {
    Dataset train, val, test;
    SplitIndices indices;
};

// Part sizes by largest-remainder rounding; throws if any part would be empty.
std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions);
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
SplitResult split(const Dataset& ds, const SplitSpec& spec);

struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale;  // 1 for zero-variance columns

    std::vector<double> apply(std::span<const double> x) const;
    Dataset apply(const Dataset& ds) const;
};

struct StandardizeResult {
    Scaler scaler;
    Dataset transformed;
};

// Population mean/sd per column; zero-variance columns are centered only.
StandardizeResult standardize(const Dataset& train);

struct MixtureComponent {
    std::vector<double> mean;
    double stddev = 1.0;
    std::size_t count = 1;
    int label = 0;
};

struct MixtureSpec {
    std::vector<MixtureComponent> components;
    std::uint64_t seed = 0;

    std::size_t dims() const { return components.empty() ? 0 : components.front().mean.size(); }
    void validate() const;
};

// Samples are emitted component by component; truth.cluster_id is the
// component index and label names are the decimal ids.
Dataset gen_mixture(const MixtureSpec& spec);

using LabelColumn = std::variant<std::string, std::size_t>;

struct CsvOptions {
    LabelColumn label_column = std::size_t{0};
    bool has_header = true;
    // Names that keep ids 0..size-1 (e.g. the training file's mapping); new
    // names are appended in order of first appearance.
    std::vector<std::string> known_labels;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);
Dataset parse_csv(const std::string& text, const CsvOptions& options);

// Label column last, header "x0,...,x{D-1},label". Label names are written
// when present, otherwise the dense ids.
void write_csv(const Dataset& ds, const std::filesystem::path& path);
std::string to_csv(const Dataset& ds);

// Sidecar "index,cluster_id,original_label". A missing cluster id is written
// as -1 and a missing original label as an empty field; original labels use
// the dataset's label names when it has them.
void write_truth_csv(const Dataset& ds, const std::filesystem::path& path);
Truth load_truth_csv(const std::filesystem::path& path, const Dataset& ds);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace flipguard
