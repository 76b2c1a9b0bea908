#pragma once

// Stochastic volatility model: one market factor of strength theta plus
// idiosyncratic noise,
//   r_i(t) = sqrt(theta) gamma0_i eta_t + sqrt(1 - theta) gamma1_i eta_it,
// with sum gamma0^2 = sum gamma1^2 = N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mktphase/error.hpp"
#include "mktphase/parallel.hpp"
#include "mktphase/rng.hpp"
#include "mktphase/spectral.hpp"
#include "mktphase/stats.hpp"

namespace mktphase {

enum class Gamma1Family { lognormal, laplace, normal, constant };
enum class IdioNoise { normal, laplace };

inline Gamma1Family parse_family(const std::string& s)
{
    if (s == "log-normal" || s == "lognormal") return Gamma1Family::lognormal;
    if (s == "laplace") return Gamma1Family::laplace;
    if (s == "normal") return Gamma1Family::normal;
    if (s == "constant" || s == "constant-1" || s == "const") return Gamma1Family::constant;
    throw ValidationError("unknown gamma1 family '" + s + "'");
}

inline std::string to_string(Gamma1Family f)
{
    switch (f) {
    case Gamma1Family::lognormal: return "log-normal";
    case Gamma1Family::laplace: return "laplace";
    case Gamma1Family::normal: return "normal";
    case Gamma1Family::constant: return "constant-1";
    }
    return "?";
}

/// Rescales v so that sum v_i^2 = N.
inline Eigen::VectorXd unit_mean_square(Eigen::VectorXd v)
{
    const double ss = v.squaredNorm();
    if (!(ss > 0.0)) throw ValidationError("cannot normalize an all-zero loading vector");
    return v * std::sqrt(static_cast<double>(v.size()) / ss);
}

/// Maps standard-normal base draws onto a one-parameter family with E[x] = mean
/// and E[x^2] = 1, then enforces sum x^2 = N exactly. Using a fixed set of base
/// draws gives common random numbers across different `mean` values.
inline Eigen::VectorXd draw_family(Gamma1Family family, double mean, std::span<const double> z)
{
    const auto n = static_cast<Eigen::Index>(z.size());
    Eigen::VectorXd x(n);
    if (family != Gamma1Family::constant && !(mean > 0.0 && mean <= 1.0))
        throw ValidationError("family mean must lie in (0, 1] for a unit mean square");
    switch (family) {
    case Gamma1Family::constant:
        x.setOnes();
        break;
    case Gamma1Family::lognormal: {
        const double s2 = -2.0 * std::log(mean);
        const double mu = std::log(mean) - 0.5 * s2;
        for (Eigen::Index i = 0; i < n; ++i) x(i) = std::exp(mu + std::sqrt(s2) * z[static_cast<std::size_t>(i)]);
        break;
    }
    case Gamma1Family::normal: {
        const double sd = std::sqrt(std::max(0.0, 1.0 - mean * mean));
        for (Eigen::Index i = 0; i < n; ++i) x(i) = mean + sd * z[static_cast<std::size_t>(i)];
        break;
    }
    case Gamma1Family::laplace: {
        const double b = std::sqrt(std::max(0.0, 1.0 - mean * mean) / 2.0);
        if (b == 0.0) {
            x.setConstant(mean);
            break;
        }
        const boost::math::normal_distribution<double> std_normal;
        const boost::math::laplace_distribution<double> lap(mean, b);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = std::clamp(boost::math::cdf(std_normal, z[static_cast<std::size_t>(i)]),
                                        1e-16, 1.0 - 1e-16);
            x(i) = boost::math::quantile(lap, u);
        }
        break;
    }
    }
    return unit_mean_square(std::move(x));
}

inline std::vector<double> standard_normals(std::size_t n, std::uint64_t seed)
{
    Engine eng = make_engine(seed);
    std::normal_distribution<double> nd;
    std::vector<double> z(n);
    for (auto& v : z) v = nd(eng);
    return z;
}

struct SvmConfig {
    double theta = 0.26;
    Eigen::VectorXd gamma0;                 // input betas
    Eigen::VectorXd gamma1;                 // idiosyncratic scales
    Gamma1Family gamma1_family = Gamma1Family::lognormal;
    double gamma1_mean = 0.865;
    IdioNoise idio_noise = IdioNoise::normal;

    std::size_t stocks() const { return static_cast<std::size_t>(gamma0.size()); }

    void validate() const
    {
        if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("theta must lie in [0, 1]");
        const auto n = gamma0.size();
        if (n == 0 || gamma1.size() != n) throw ValidationError("gamma0/gamma1 size mismatch");
        const double nn = static_cast<double>(n);
        if (std::abs(gamma0.squaredNorm() - nn) > 1e-9 * nn ||
            std::abs(gamma1.squaredNorm() - nn) > 1e-9 * nn)
            throw ValidationError("gamma0 and gamma1 must satisfy sum gamma^2 = N");
    }
};

/// Recipe for drawing an SvmConfig.
struct SvmSpec {
    std::size_t n = 356;
    double theta = 0.26;
    double beta_mean = 0.93;                // log-normal input betas with this mean
    Gamma1Family gamma1_family = Gamma1Family::lognormal;
    double gamma1_mean = 0.865;
    IdioNoise idio_noise = IdioNoise::normal;
};

namespace stream {
inline constexpr std::uint64_t beta_in = 1;
inline constexpr std::uint64_t gamma1 = 2;
inline constexpr std::uint64_t replica = 3;
inline constexpr std::uint64_t calibration_noise = 4;
inline constexpr std::uint64_t volume = 5;
} // namespace stream

inline SvmConfig make_svm_config(const SvmSpec& spec, std::uint64_t seed)
{
    if (spec.n == 0) throw ValidationError("SVM needs at least one stock");
    SvmConfig cfg;
    cfg.theta = spec.theta;
    cfg.gamma0 = draw_family(Gamma1Family::lognormal, spec.beta_mean,
                             standard_normals(spec.n, derive_seed(seed, stream::beta_in)));
    cfg.gamma1 = draw_family(spec.gamma1_family, spec.gamma1_mean,
                             standard_normals(spec.n, derive_seed(seed, stream::gamma1)));
    cfg.gamma1_family = spec.gamma1_family;
    cfg.gamma1_mean = spec.gamma1_mean;
    cfg.idio_noise = spec.idio_noise;
    cfg.validate();
    return cfg;
}

/// N x T return matrix drawn from the model. Bit-reproducible for a fixed seed.
inline Eigen::MatrixXd simulate_svm(const SvmConfig& cfg, std::size_t days, std::uint64_t seed)
{
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(cfg.stocks());
    const auto t = static_cast<Eigen::Index>(days);
    Engine eng = make_engine(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(-0.5, 0.5);
    const double market = std::sqrt(cfg.theta);
    const double idio = std::sqrt(1.0 - cfg.theta);
    const double lap_b = 1.0 / std::sqrt(2.0);

    Eigen::MatrixXd r(n, t);
    for (Eigen::Index tau = 0; tau < t; ++tau) {
        const double eta = nd(eng);
        for (Eigen::Index i = 0; i < n; ++i) {
            double e;
            if (cfg.idio_noise == IdioNoise::normal) {
                e = nd(eng);
            } else {
                const double u = ud(eng);
                e = -lap_b * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
            }
            r(i, tau) = market * cfg.gamma0(i) * eta + idio * cfg.gamma1(i) * e;
        }
    }
    return r;
}

/// T -> infinity covariance: theta gamma0 gamma0' + (1 - theta) diag(gamma1^2).
inline Eigen::MatrixXd population_covariance(const SvmConfig& cfg)
{
    Eigen::MatrixXd c = cfg.theta * cfg.gamma0 * cfg.gamma0.transpose();
    c.diagonal() += (1.0 - cfg.theta) * cfg.gamma1.array().square().matrix();
    return c;
}

struct BetaBand {
    std::size_t rank = 0;        // 0 = largest input beta
    std::size_t stock = 0;
    double input = 0.0;
    double lo = 0.0;             // 2.5% quantile of the estimate
    double hi = 0.0;             // 97.5% quantile
    double half_width = 0.0;
};

struct BetaErrorReport {
    std::size_t window = 0;
    std::size_t replicas = 0;
    std::size_t failed = 0;      // replicas skipped (eigen-solver did not converge)
    bool match_by_rank = false;
    std::vector<BetaBand> per_rank_band;
    double avg_error = 0.0;      // mean half-width of the 95% band
    double coverage = 0.0;       // fraction of (stock, replica) estimates within input +- half-width
    std::vector<double> lambda0; // leading eigenvalue per successful replica
};

struct BandOptions {
    bool match_by_rank = false;
    unsigned threads = 0;
    EigenOptions eigen{};
};

/// Monte-Carlo 95% bands on estimated betas for windows of `days` returns.
inline BetaErrorReport beta_error_bands(const SvmConfig& cfg, std::size_t days, std::size_t replicas,
                                        std::uint64_t seed, const BandOptions& opt = {})
{
    cfg.validate();
    if (replicas < 2) throw ValidationError("beta_error_bands needs at least 2 replicas");
    if (days < 2) throw ValidationError("window must hold at least 2 days");
    const std::size_t n = cfg.stocks();

    std::vector<std::optional<Eigen::VectorXd>> estimates(replicas);
    std::vector<double> lambdas(replicas, 0.0);
    parallel_for(replicas, opt.threads, [&](std::size_t r) {
        const Eigen::MatrixXd x = simulate_svm(cfg, days, derive_seed(seed, stream::replica, r));
        const auto cov = covariance_of(x);
        const auto pair = leading_eigenpair(cov.C, opt.eigen);
        if (!pair.converged) return;
        Eigen::VectorXd b = pair.beta;
        if (opt.match_by_rank) std::sort(b.data(), b.data() + b.size(), std::greater<>());
        estimates[r] = std::move(b);
        lambdas[r] = pair.lambda0;
    });

    BetaErrorReport rep;
    rep.window = days;
    rep.replicas = replicas;
    rep.match_by_rank = opt.match_by_rank;
    std::vector<std::size_t> ok;
    for (std::size_t r = 0; r < replicas; ++r) {
        if (estimates[r]) {
            ok.push_back(r);
            rep.lambda0.push_back(lambdas[r]);
        } else {
            ++rep.failed;
        }
    }
    if (ok.size() < 2) throw ComputeError("fewer than 2 replicas converged");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cfg.gamma0(a) > cfg.gamma0(b); });

    double sum_half = 0.0;
    std::size_t inside = 0;
    std::vector<double> column(ok.size());
    for (std::size_t rank = 0; rank < n; ++rank) {
        const std::size_t stock = order[rank];
        // With rank matching, slot `rank` of a sorted estimate pairs with the rank-th input.
        const std::size_t slot = opt.match_by_rank ? rank : stock;
        for (std::size_t k = 0; k < ok.size(); ++k)
            column[k] = (*estimates[ok[k]])(static_cast<Eigen::Index>(slot));
        BetaBand band;
        band.rank = rank;
        band.stock = stock;
        band.input = cfg.gamma0(static_cast<Eigen::Index>(stock));
        band.lo = stats::quantile(column, 0.025);
        band.hi = stats::quantile(column, 0.975);
        band.half_width = 0.5 * (band.hi - band.lo);
        sum_half += band.half_width;
        for (double v : column)
            if (std::abs(v - band.input) <= band.half_width) ++inside;
        rep.per_rank_band.push_back(band);
    }
    rep.avg_error = sum_half / static_cast<double>(n);
    rep.coverage = static_cast<double>(inside) / static_cast<double>(n * ok.size());
    return rep;
}

struct CalibrationSpec {
    double theta = 0.26;
    Eigen::VectorXd gamma0;                  // input betas, sum gamma0^2 = N
    Gamma1Family family = Gamma1Family::lognormal;
    std::size_t window = 750;                // 0 = population spectrum (T -> infinity)
    std::size_t replicas = 4;                // simulated spectra pooled per candidate
    std::uint64_t seed = 1;
    double lo = 0.30;
    double hi = 0.99;
    std::size_t grid = 15;
    int refine_iterations = 20;
    bool exclude_second = false;             // drop the largest empirical bulk eigenvalue
    IdioNoise idio_noise = IdioNoise::normal;
    unsigned threads = 0;
};

struct CalibrationResult {
    double gamma0 = 0.0;                     // best family mean
    double p_value = 0.0;
    double statistic = 1.0;
    bool at_bound = false;
    std::size_t evaluations = 0;
};

/// Pooled simulated bulk eigenvalues (leading eigenvalue removed) for one candidate.
inline std::vector<double> simulated_bulk(const CalibrationSpec& spec, double gamma1_mean)
{
    const std::size_t n = static_cast<std::size_t>(spec.gamma0.size());
    SvmConfig cfg;
    cfg.theta = spec.theta;
    cfg.gamma0 = spec.gamma0;
    cfg.gamma1 = draw_family(spec.family, gamma1_mean,
                             standard_normals(n, derive_seed(spec.seed, stream::gamma1)));
    cfg.gamma1_family = spec.family;
    cfg.gamma1_mean = gamma1_mean;
    cfg.idio_noise = spec.idio_noise;

    auto bulk_of = [n](const Eigen::MatrixXd& c) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) throw ComputeError("eigensolver failed in calibration");
        std::vector<double> v(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
        v.pop_back();
        return v;
    };
    if (spec.window == 0) return bulk_of(population_covariance(cfg));

    std::vector<std::vector<double>> parts(spec.replicas);
    parallel_for(spec.replicas, spec.threads, [&](std::size_t r) {
        const Eigen::MatrixXd x =
            simulate_svm(cfg, spec.window, derive_seed(spec.seed, stream::calibration_noise, r));
        parts[r] = bulk_of(covariance_of(x).C);
    });
    std::vector<double> pooled;
    for (auto& p : parts) pooled.insert(pooled.end(), p.begin(), p.end());
    return pooled;
}

/// Fits the family mean of gamma1 by maximizing the KS p-value between the
/// empirical bulk and the pooled simulated bulk: grid scan, then golden-section
/// refinement around the best grid point.
inline CalibrationResult calibrate_gamma0(std::vector<double> empirical_bulk, const CalibrationSpec& spec)
{
    if (empirical_bulk.empty()) throw ValidationError("empirical bulk is empty");
    if (spec.gamma0.size() < 2) throw ValidationError("calibration needs input betas");
    if (static_cast<std::size_t>(spec.gamma0.size()) != empirical_bulk.size() + 1)
        throw ValidationError("empirical bulk must hold N - 1 eigenvalues for N input betas");
    if (spec.exclude_second) {
        auto it = std::max_element(empirical_bulk.begin(), empirical_bulk.end());
        empirical_bulk.erase(it);
        if (empirical_bulk.empty()) throw ValidationError("empirical bulk is empty");
    }
    if (spec.window != 0 && spec.replicas == 0) throw ValidationError("replicas must be positive");

    CalibrationResult best;
    auto evaluate = [&](double m) {
        ++best.evaluations;
        return stats::ks_two_sample(empirical_bulk, simulated_bulk(spec, m));
    };
    auto consider = [&](double m, const stats::KsResult& ks) {
        if (best.evaluations == 1 || ks.statistic < best.statistic) {
            best.gamma0 = m;
            best.statistic = ks.statistic;
            best.p_value = ks.p_value;
        }
    };

    if (spec.family == Gamma1Family::constant) {
        consider(1.0, evaluate(1.0));
        return best;
    }
    if (!(spec.lo > 0.0 && spec.hi <= 1.0 && spec.lo < spec.hi) || spec.grid < 3)
        throw ValidationError("calibration bounds must satisfy 0 < lo < hi <= 1 with grid >= 3");

    std::vector<double> grid(spec.grid), stat(spec.grid);
    for (std::size_t k = 0; k < spec.grid; ++k) {
        grid[k] = spec.lo + (spec.hi - spec.lo) * static_cast<double>(k) / static_cast<double>(spec.grid - 1);
        const auto ks = evaluate(grid[k]);
        stat[k] = ks.statistic;
        consider(grid[k], ks);
    }
    const auto kbest = static_cast<std::size_t>(std::min_element(stat.begin(), stat.end()) - stat.begin());
    double a = grid[kbest == 0 ? 0 : kbest - 1];
    double b = grid[std::min(kbest + 1, spec.grid - 1)];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    auto kc = evaluate(c), kd = evaluate(d);
    consider(c, kc);
    consider(d, kd);
    for (int it = 0; it < spec.refine_iterations; ++it) {
        if (kc.statistic <= kd.statistic) {
            b = d;
            d = c;
            kd = kc;
            c = b - inv_phi * (b - a);
            kc = evaluate(c);
            consider(c, kc);
        } else {
            a = c;
            c = d;
            kc = kd;
            d = a + inv_phi * (b - a);
            kd = evaluate(d);
            consider(d, kd);
        }
    }
    best.at_bound = best.gamma0 == spec.lo || best.gamma0 == spec.hi;
    return best;
}

} // namespace mktphase
