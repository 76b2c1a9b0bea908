#pragma once

// Window covariance, leading eigenpair (betas) and derived market quantities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mktphase/error.hpp"
#include "mktphase/ingest.hpp"
#include "mktphase/parallel.hpp"

namespace mktphase {

struct CovarianceMatrix {
    Eigen::MatrixXd C;        // (1/T) sum_tau r_i r_j, means not subtracted
    WindowSpec window;
    Eigen::VectorXd means;    // <r_i> over the window, kept for the volatility measure

    Eigen::Index size() const { return C.rows(); }
};

struct EigenOptions {
    double tolerance = 1e-10;       // relative residual |C b - l b| / |l b|
    int max_iterations = 5000;
    double tie_tolerance = 1e-6;    // relative gap below which the top pair is flagged
};

struct LeadingPair {
    double lambda0 = 0.0;
    Eigen::VectorXd beta;           // sum beta^2 = N, mean(beta) >= 0
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;        // top eigenvalue tied within tie_tolerance
    std::size_t negative_components = 0;
};

struct WindowSpectrum {
    WindowSpec window;
    std::string center_date;
    double lambda0 = 0.0;
    Eigen::VectorXd beta;
    std::vector<double> bulk;       // remaining eigenvalues, descending
    double v2 = 0.0;
    double market_var = 0.0;        // <r_M^2> = lambda0 / N
    Eigen::VectorXd market_return;  // r_M(tau) over the window
    double trace = 0.0;
    bool degenerate = false;
    std::size_t negative_components = 0;
};

/// Covariance of an N x T block of returns.
inline CovarianceMatrix covariance_of(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const WindowSpec& window = {})
{
    const Eigen::Index n = x.rows();
    const Eigen::Index t = x.cols();
    if (t < 2) throw ValidationError("covariance needs a window of at least 2 days");
    if (x.squaredNorm() == 0.0) throw ComputeError("degenerate window: all returns are zero");
    CovarianceMatrix out;
    out.C = Eigen::MatrixXd::Zero(n, n);
    out.C.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / static_cast<double>(t));
    out.C.triangularView<Eigen::StrictlyUpper>() = out.C.transpose();
    out.means = x.rowwise().mean();
    out.window = window;
    out.window.length = static_cast<std::size_t>(t);
    return out;
}

inline CovarianceMatrix covariance(const ReturnPanel& rp, const WindowSpec& w)
{
    if (!w.fits(rp.days()))
        throw ValidationError("window exceeds panel bounds");
    return covariance_of(rp.returns.middleCols(static_cast<Eigen::Index>(w.begin()),
                                               static_cast<Eigen::Index>(w.length)),
                         w);
}

/// Scales v to sum v_i^2 = N and flips the sign so that mean(v) >= 0.
inline Eigen::VectorXd normalize_beta(Eigen::VectorXd v)
{
    const double norm = v.norm();
    if (norm == 0.0) return v;
    v *= std::sqrt(static_cast<double>(v.size())) / norm;
    if (v.sum() < 0.0) v = -v;
    return v;
}

inline std::size_t count_negative(const Eigen::VectorXd& beta)
{
    return static_cast<std::size_t>((beta.array() < 0.0).count());
}

/// Dominant eigenpair by power iteration with a Rayleigh-quotient residual test.
/// Ties are detected by a short deflated power iteration for the runner-up.
inline LeadingPair leading_eigenpair(const Eigen::MatrixXd& C, const EigenOptions& opt = {})
{
    const Eigen::Index n = C.rows();
    if (n == 0 || C.cols() != n) throw ValidationError("leading_eigenpair needs a square matrix");

    LeadingPair out;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    Eigen::VectorXd y = C * x;
    if (y.norm() == 0.0) {
        // ones happens to lie in the null space; restart from a fixed generic vector
        for (Eigen::Index i = 0; i < n; ++i) x(i) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
        x.normalize();
        y = C * x;
    }
    double lambda = x.dot(y);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const double denom = std::abs(lambda) * x.norm();
        out.residual = denom > 0.0 ? (y - lambda * x).norm() / denom : INFINITY;
        out.iterations = it;
        if (out.residual <= opt.tolerance) {
            out.converged = true;
            break;
        }
        x = y.normalized();
        y = C * x;
        lambda = x.dot(y);
    }
    out.lambda0 = lambda;

    // Runner-up estimate on the deflated matrix.
    const Eigen::VectorXd u = x.normalized();
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = std::cos(0.7 * static_cast<double>(i) + 0.3);
    z -= u.dot(z) * u;
    if (z.norm() > 0.0 && n > 1) {
        z.normalize();
        double second = 0.0;
        for (int it = 0; it < 100; ++it) {
            Eigen::VectorXd w = C * z;
            w -= u.dot(w) * u;
            second = z.dot(w);
            const double wn = w.norm();
            if (wn == 0.0) break;
            z = w / wn;
        }
        out.degenerate = second >= lambda * (1.0 - opt.tie_tolerance);
    }

    out.beta = normalize_beta(u);
    out.negative_components = count_negative(out.beta);
    return out;
}

/// Complete eigen-summary of one window. `x` is the N x T block the covariance came from.
inline WindowSpectrum full_spectrum(const CovarianceMatrix& cov,
                                    const Eigen::Ref<const Eigen::MatrixXd>& x,
                                    const EigenOptions& opt = {})
{
    const Eigen::Index n = cov.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov.C);
    if (solver.info() != Eigen::Success) throw ComputeError("symmetric eigensolver failed");
    const auto& values = solver.eigenvalues(); // ascending

    WindowSpectrum out;
    out.window = cov.window;
    out.lambda0 = values(n - 1);
    out.beta = normalize_beta(solver.eigenvectors().col(n - 1));
    out.negative_components = count_negative(out.beta);
    out.bulk.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index k = n - 2; k >= 0; --k) out.bulk.push_back(values(k));
    out.degenerate = n > 1 && values(n - 1) - values(n - 2) <= opt.tie_tolerance * std::abs(values(n - 1));
    out.trace = cov.C.trace();
    out.v2 = (out.trace - cov.means.squaredNorm()) / static_cast<double>(n);
    out.market_var = out.lambda0 / static_cast<double>(n);
    out.market_return = (out.beta.transpose() * x).transpose() / static_cast<double>(n);
    return out;
}

inline WindowSpectrum window_spectrum(const ReturnPanel& rp, const WindowSpec& w,
                                      const EigenOptions& opt = {})
{
    const auto cov = covariance(rp, w);
    auto out = full_spectrum(cov,
                             rp.returns.middleCols(static_cast<Eigen::Index>(w.begin()),
                                                   static_cast<Eigen::Index>(w.length)),
                             opt);
    if (!rp.dates.empty()) out.center_date = rp.dates.at(w.center);
    return out;
}

/// Spectra of every window at the given length and step. Results do not depend on `threads`.
inline std::vector<WindowSpectrum> rolling_spectra(const ReturnPanel& rp, std::size_t length,
                                                   std::size_t step, unsigned threads = 0,
                                                   const EigenOptions& opt = {})
{
    const auto windows = window_centers(rp.days(), length, step);
    std::vector<WindowSpectrum> out(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t k) {
        try {
            out[k] = window_spectrum(rp, windows[k], opt);
        } catch (const ComputeError& e) {
            throw ComputeError("window " + std::to_string(k) + " (center " +
                               std::to_string(windows[k].center) + "): " + e.what());
        }
    });
    return out;
}

struct WindowScan {
    std::size_t length = 0;
    std::size_t windows = 0;
    std::size_t violations = 0;  // windows with a negative beta or a non-converged/tied pair
};

struct MinWindowResult {
    std::optional<std::size_t> t_min;
    std::vector<WindowScan> scans;
};

/// Smallest candidate length for which every window (centers advancing by `step`)
/// has strictly positive betas after sign fixing. Scans stop at the first success.
inline MinWindowResult minimal_positive_window(const ReturnPanel& rp,
                                               const std::vector<std::size_t>& candidates,
                                               std::size_t step = 250, unsigned threads = 0,
                                               const EigenOptions& opt = {})
{
    if (!std::is_sorted(candidates.begin(), candidates.end()))
        throw ValidationError("candidate window lengths must be sorted ascending");
    MinWindowResult result;
    for (const std::size_t length : candidates) {
        const auto windows = window_centers(rp.days(), length, step);
        std::vector<char> bad(windows.size(), 0);
        parallel_for(windows.size(), threads, [&](std::size_t k) {
            const auto cov = covariance(rp, windows[k]);
            const auto pair = leading_eigenpair(cov.C, opt);
            bad[k] = !pair.converged || pair.degenerate || (pair.beta.array() <= 0.0).any();
        });
        WindowScan scan{length, windows.size(),
                        static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1))};
        result.scans.push_back(scan);
        if (scan.windows > 0 && scan.violations == 0) {
            result.t_min = length;
            break;
        }
    }
    return result;
}

} // namespace mktphase
