#pragma once

#include <cstdint>
#include <vector>

#include "flipguard/data.hpp"
#include "flipguard/rng.hpp"

namespace testing {

using flipguard::Dataset;
using flipguard::MixtureSpec;
using flipguard::Rng;

inline Dataset make_ds(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels, int classes)
{
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Dataset(flat, rows.front().size(), labels, classes);
}

// Uniform features in [-scale, scale], uniform labels; every class appears at least once when n >= classes.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t dims, int classes, double scale = 5.0)
{
    std::vector<double> x(n * dims);
    for (auto& v : x) v = (2.0 * rng.uniform() - 1.0) * scale;
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = i < static_cast<std::size_t>(classes) ? static_cast<int>(i) : static_cast<int>(rng.below(classes));
    return Dataset(x, dims, y, classes);
}

// `components` Gaussian blobs with means in [-10, 10]^dims and labels cycling
// through the classes; counts split n as evenly as possible.
inline MixtureSpec random_mixture(Rng& rng, std::size_t components, std::size_t n, std::size_t dims, int classes)
{
    MixtureSpec spec;
    for (std::size_t c = 0; c < components; ++c) {
        flipguard::MixtureComponent m;
        for (std::size_t d = 0; d < dims; ++d) m.mean.push_back((2.0 * rng.uniform() - 1.0) * 10.0);
        m.stddev = 0.5 + 1.5 * rng.uniform();
        m.count = n / components + (c < n % components ? 1 : 0);
        m.label = static_cast<int>(c % static_cast<std::size_t>(classes));
        spec.components.push_back(m);
    }
    spec.seed = rng.next_u64();
    return spec;
}

}  // namespace testing
