#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "mktphase/error.hpp"

namespace mktphase::stats {

/// Kolmogorov limiting survival function Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x)
{
    if (x <= 0.0) return 1.0;
    if (x < 0.2) return 1.0;   // series is 1 to double precision here
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 ? term : -term);
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the Stephens small-sample correction.
/// Values closer than `tie_tolerance` times the largest magnitude count as ties,
/// so round-off does not split a point mass.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double tie_tolerance = 1e-12)
{
    if (a.empty() || b.empty()) throw ValidationError("KS test needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double scale = std::max({std::abs(a.front()), std::abs(a.back()), std::abs(b.front()), std::abs(b.back())});
    const double tol = tie_tolerance * scale;
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]) + tol;
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double en = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

/// One-sample KS test against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf)
{
    if (x.empty()) throw ValidationError("KS test needs a non-empty sample");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double f = cdf(x[k]);
        d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
    }
    const double en = std::sqrt(n);
    return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of an unsorted sample.
inline double quantile(std::vector<double> x, double q)
{
    if (x.empty()) throw ValidationError("quantile of empty sample");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Upper tail probability of a chi-square variable with `dof` degrees of freedom.
inline double chi_square_sf(double statistic, double dof)
{
    if (statistic <= 0.0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

inline double mean(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double stddev(std::span<const double> x)
{
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

} // namespace mktphase::stats
