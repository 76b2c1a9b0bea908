#pragma once

// Pareto-Feller (unit-variance Student-t) tail index fits.
//
//   f(r) = c(alpha, r0) (1 + r^2 / ((alpha - 2) r0^2))^(-(alpha + 1) / 2)
//   c    = Gamma((alpha + 1) / 2) / (Gamma(alpha / 2) sqrt(pi (alpha - 2)) r0)
//
// so that E[r^2] = r0^2 for every alpha > 2.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mktphase/error.hpp"
#include "mktphase/stats.hpp"

namespace mktphase {

namespace detail {
inline void check_pf(double alpha, double r0)
{
    if (!(alpha > 2.0)) throw ValidationError("tail index must exceed 2 (finite variance)");
    if (!(r0 > 0.0)) throw ValidationError("scale r0 must be positive");
}
// Student-t scale that gives variance r0^2 at `alpha` degrees of freedom.
inline double t_scale(double alpha, double r0) { return r0 * std::sqrt((alpha - 2.0) / alpha); }
} // namespace detail

inline double pf_log_norm(double alpha, double r0)
{
    detail::check_pf(alpha, r0);
    return std::lgamma(0.5 * (alpha + 1.0)) - std::lgamma(0.5 * alpha) -
           0.5 * std::log(std::numbers::pi * (alpha - 2.0)) - std::log(r0);
}

inline double pf_density(double r, double alpha, double r0)
{
    const double c = pf_log_norm(alpha, r0);
    return std::exp(c - 0.5 * (alpha + 1.0) * std::log1p(r * r / ((alpha - 2.0) * r0 * r0)));
}

inline double pf_log_likelihood(std::span<const double> x, double alpha, double r0)
{
    const double c = pf_log_norm(alpha, r0);
    const double k = (alpha - 2.0) * r0 * r0;
    double sum = 0.0;
    for (double v : x) sum += std::log1p(v * v / k);
    return static_cast<double>(x.size()) * c - 0.5 * (alpha + 1.0) * sum;
}

inline double pf_cdf(double r, double alpha, double r0)
{
    detail::check_pf(alpha, r0);
    const boost::math::students_t_distribution<double> t(alpha);
    return boost::math::cdf(t, r / detail::t_scale(alpha, r0));
}

inline double pf_quantile(double q, double alpha, double r0)
{
    detail::check_pf(alpha, r0);
    const boost::math::students_t_distribution<double> t(alpha);
    return detail::t_scale(alpha, r0) * boost::math::quantile(t, q);
}

struct GofResult {
    double p_value = 1.0;
    double statistic = 0.0;
    std::size_t bins = 0;
    std::size_t dof = 0;
    bool reduced = false;
    std::string warning;
};

/// Chi-square goodness of fit on equal-probability bins of the fitted density,
/// dof = bins - 2. Bins are reduced until every expected count is at least 5.
inline GofResult gof_chisq(std::span<const double> x, double alpha, double r0, std::size_t bins = 20)
{
    detail::check_pf(alpha, r0);
    if (bins < 3) throw ValidationError("gof_chisq needs at least 3 bins");
    const std::size_t n = x.size();
    if (n < 15) throw ValidationError("gof_chisq needs at least 15 samples");
    GofResult out;
    if (static_cast<double>(n) / static_cast<double>(bins) < 5.0) {
        const std::size_t requested = bins;
        bins = std::max<std::size_t>(3, n / 5);
        out.reduced = true;
        out.warning = "expected count below 5: bins reduced from " + std::to_string(requested) +
                      " to " + std::to_string(bins);
    }
    std::vector<double> edges(bins - 1);
    for (std::size_t k = 1; k < bins; ++k)
        edges[k - 1] = pf_quantile(static_cast<double>(k) / static_cast<double>(bins), alpha, r0);
    std::vector<double> counts(bins, 0.0);
    for (double v : x)
        counts[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin())] += 1.0;
    const double expected = static_cast<double>(n) / static_cast<double>(bins);
    for (double c : counts) out.statistic += (c - expected) * (c - expected) / expected;
    out.bins = bins;
    out.dof = bins - 2;
    out.p_value = stats::chi_square_sf(out.statistic, static_cast<double>(out.dof));
    return out;
}

struct TailFit {
    double alpha = 0.0;
    double r0 = 1.0;
    double loglik = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool ci_lo_open = false;        // likelihood never dropped by 0.5 before the lower bound
    bool ci_hi_open = false;
    bool censored = false;          // maximum at the upper bound: effectively Gaussian
    bool censored_lower = false;
    double gof_pvalue = 1.0;
    GofResult gof;
    std::size_t n = 0;
};

struct TailFitOptions {
    double alpha_min = 2.01;
    double alpha_max = 50.0;
    std::size_t bins = 20;
    std::size_t min_samples = 100;
};

/// Maximum-likelihood tail index with r0 fixed at the sample root mean square.
/// Golden-section search on log(alpha - 2); CI where L drops by 0.5.
inline TailFit fit_alpha(std::span<const double> x, const TailFitOptions& opt = {})
{
    if (x.size() < opt.min_samples)
        throw ValidationError("fit_alpha needs at least " + std::to_string(opt.min_samples) + " samples");
    double ss = 0.0;
    for (double v : x) ss += v * v;
    TailFit fit;
    fit.n = x.size();
    fit.r0 = std::sqrt(ss / static_cast<double>(x.size()));
    if (!(fit.r0 > 0.0)) throw ValidationError("samples have zero second moment");

    auto loglik = [&](double alpha) { return pf_log_likelihood(x, alpha, fit.r0); };
    auto to_alpha = [](double u) { return 2.0 + std::exp(u); };

    double a = std::log(opt.alpha_min - 2.0), b = std::log(opt.alpha_max - 2.0);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double lc = loglik(to_alpha(c)), ld = loglik(to_alpha(d));
    while (b - a > 1e-10) {
        if (lc >= ld) {
            b = d; d = c; ld = lc;
            c = b - inv_phi * (b - a);
            lc = loglik(to_alpha(c));
        } else {
            a = c; c = d; lc = ld;
            d = a + inv_phi * (b - a);
            ld = loglik(to_alpha(d));
        }
    }
    fit.alpha = to_alpha(0.5 * (a + b));
    // compare against the bounds themselves; the search interval is closed
    const double l_max_bound = loglik(opt.alpha_max);
    const double l_min_bound = loglik(opt.alpha_min);
    fit.loglik = loglik(fit.alpha);
    if (l_max_bound >= fit.loglik || fit.alpha >= opt.alpha_max * (1.0 - 1e-8)) {
        fit.alpha = opt.alpha_max;
        fit.loglik = l_max_bound;
        fit.censored = true;
    } else if (l_min_bound >= fit.loglik) {
        fit.alpha = opt.alpha_min;
        fit.loglik = l_min_bound;
        fit.censored_lower = true;
    }

    const double target = fit.loglik - 0.5;
    auto crossing = [&](double inside, double outside, bool& open) {
        if (loglik(outside) >= target) {
            open = true;
            return outside;
        }
        double lo = std::log(inside - 2.0), hi = std::log(outside - 2.0);
        for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            (loglik(to_alpha(mid)) >= target ? lo : hi) = mid;
        }
        return to_alpha(0.5 * (lo + hi));
    };
    fit.ci_lo = fit.censored_lower ? opt.alpha_min : crossing(fit.alpha, opt.alpha_min, fit.ci_lo_open);
    fit.ci_hi = fit.censored ? opt.alpha_max : crossing(fit.alpha, opt.alpha_max, fit.ci_hi_open);
    if (fit.censored) fit.ci_hi_open = true;
    if (fit.censored_lower) fit.ci_lo_open = true;

    fit.gof = gof_chisq(x, fit.alpha, fit.r0, opt.bins);
    fit.gof_pvalue = fit.gof.p_value;
    return fit;
}

/// Samples rescaled to unit second moment.
inline std::vector<double> standardize(std::span<const double> x)
{
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double s = std::sqrt(ss / static_cast<double>(x.size()));
    std::vector<double> out(x.begin(), x.end());
    if (s > 0.0)
        for (auto& v : out) v /= s;
    return out;
}

struct HistogramRow {
    double abs_r = 0.0;       // bin center of |r|
    double empirical = 0.0;   // density of |r|
    double fitted = 0.0;      // 2 f(|r|)
    double scale = 1.0;       // display multiplier applied to both columns
};

/// Histogram of |r| with the fitted pdf. Rows beyond `tail_threshold` are
/// multiplied by `tail_scale` (1 leaves the data unscaled).
inline std::vector<HistogramRow> pdf_histogram(std::span<const double> x, const TailFit& fit,
                                               std::size_t bins = 30, double max_abs = 6.0,
                                               double tail_scale = 1.0, double tail_threshold = 1.5)
{
    if (bins == 0 || !(max_abs > 0.0)) throw ValidationError("histogram needs bins > 0 and max_abs > 0");
    const double width = max_abs / static_cast<double>(bins);
    std::vector<double> counts(bins, 0.0);
    for (double v : x) {
        const double a = std::abs(v);
        if (a < max_abs) counts[static_cast<std::size_t>(a / width)] += 1.0;
    }
    std::vector<HistogramRow> rows(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        auto& row = rows[k];
        row.abs_r = (static_cast<double>(k) + 0.5) * width;
        row.scale = row.abs_r > tail_threshold ? tail_scale : 1.0;
        row.empirical = row.scale * counts[k] / (static_cast<double>(x.size()) * width);
        row.fitted = row.scale * 2.0 * pf_density(row.abs_r, fit.alpha, fit.r0);
    }
    return rows;
}

} // namespace mktphase
