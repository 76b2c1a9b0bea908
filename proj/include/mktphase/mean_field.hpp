#pragma once

// Large-A mean-field theory of the diluted Ising agent model.
//
//   ln Z / A = ln(S - 2 + 2 cosh(g (m0 + h))) - g m0^2 / 2
//   m0       = 2 sinh(g (m0 + h)) / (S - 2 + 2 cosh(g (m0 + h)))      (stationarity)
//   R_+-     = exp(+-g (m0 + h)) / (S - 2 + 2 cosh(g (m0 + h)))

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mktphase/error.hpp"

namespace mktphase {

enum class Phase { disordered, ordered, metastable_ordered, metastable_disordered, coexistence };

inline std::string to_string(Phase p)
{
    switch (p) {
    case Phase::disordered: return "disordered";
    case Phase::ordered: return "ordered";
    case Phase::metastable_ordered: return "metastable-ordered";
    case Phase::metastable_disordered: return "metastable-disordered";
    case Phase::coexistence: return "coexistence";
    }
    return "?";
}

struct MeanFieldRoot {
    double m0 = 0.0;
    double ln_z = 0.0;          // ln Z per agent
    double R_plus = 0.0;
    double R_minus = 0.0;
    double R_neutral = 0.0;     // per neutral sector
    double residual = 0.0;
    bool stable = false;        // local maximum of ln Z
};

struct MeanFieldSolution {
    std::size_t S = 0;
    double g = 0.0;
    double h = 0.0;
    std::vector<MeanFieldRoot> roots;   // ascending m0
    Phase phase = Phase::disordered;
    std::optional<std::size_t> disordered_root;
    std::optional<std::size_t> ordered_root;    // stable ordered root with the largest ln Z
};

struct MeanFieldOptions {
    std::size_t grid = 3000;
    double m_max = 1.5;
    double coexistence_tolerance = 1e-9;
};

inline double ln_z_per_agent(std::size_t S, double g, double h, double m0)
{
    return std::log(static_cast<double>(S) - 2.0 + 2.0 * std::cosh(g * (m0 + h))) - 0.5 * g * m0 * m0;
}

/// m0 minus the right-hand side of the mean-field condition.
inline double mean_field_residual(std::size_t S, double g, double h, double m0)
{
    const double x = g * (m0 + h);
    return m0 - 2.0 * std::sinh(x) / (static_cast<double>(S) - 2.0 + 2.0 * std::cosh(x));
}

namespace detail {

inline double mf_residual_derivative(std::size_t S, double g, double h, double m0)
{
    const double x = g * (m0 + h);
    const double den = static_cast<double>(S) - 2.0 + 2.0 * std::cosh(x);
    return 1.0 - g * (2.0 * (static_cast<double>(S) - 2.0) * std::cosh(x) + 4.0) / (den * den);
}

inline double polish_root(std::size_t S, double g, double h, double a, double b)
{
    double fa = mean_field_residual(S, g, h, a);
    for (int it = 0; it < 60 && b - a > 1e-9; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = mean_field_residual(S, g, h, mid);
        if ((fm < 0.0) == (fa < 0.0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    double x = 0.5 * (a + b);
    for (int it = 0; it < 20; ++it) {
        const double d = mf_residual_derivative(S, g, h, x);
        if (d == 0.0) break;
        const double next = x - mean_field_residual(S, g, h, x) / d;
        if (!(next >= a - 1e-9 && next <= b + 1e-9)) break;
        if (std::abs(next - x) < 1e-16) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

inline MeanFieldRoot make_root(std::size_t S, double g, double h, double m0)
{
    MeanFieldRoot r;
    r.m0 = m0;
    const double x = g * (m0 + h);
    const double den = static_cast<double>(S) - 2.0 + 2.0 * std::cosh(x);
    r.ln_z = ln_z_per_agent(S, g, h, m0);
    r.R_plus = std::exp(x) / den;
    r.R_minus = std::exp(-x) / den;
    r.R_neutral = 1.0 / den;
    r.residual = std::abs(mean_field_residual(S, g, h, m0));
    r.stable = mf_residual_derivative(S, g, h, m0) > 0.0;
    return r;
}

} // namespace detail

/// All mean-field roots by sign-change bracketing on a grid plus bisection/Newton polishing.
/// At h = 0 only m0 >= 0 is reported (the model is symmetric) and m0 = 0 is always included.
inline MeanFieldSolution mean_field_solve(std::size_t S, double g, double h = 0.0,
                                          const MeanFieldOptions& opt = {})
{
    if (S < 3) throw ValidationError("mean-field model needs S >= 3");
    if (!(g >= 0.0)) throw ValidationError("coupling g must be non-negative");
    MeanFieldSolution sol;
    sol.S = S;
    sol.g = g;
    sol.h = h;

    const bool symmetric = h == 0.0;
    const double lo = symmetric ? 0.0 : -opt.m_max;
    const double hi = opt.m_max;
    std::vector<double> found;
    if (symmetric) found.push_back(0.0);

    double prev_x = lo + (symmetric ? 1e-7 : 0.0);
    double prev_f = mean_field_residual(S, g, h, prev_x);
    for (std::size_t k = 1; k <= opt.grid; ++k) {
        const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(opt.grid);
        const double f = mean_field_residual(S, g, h, x);
        if (f == 0.0) {
            found.push_back(x);
        } else if ((f < 0.0) != (prev_f < 0.0) && prev_f != 0.0) {
            const double root = detail::polish_root(S, g, h, prev_x, x);
            if (std::abs(mean_field_residual(S, g, h, root)) > 1e-10)
                throw ComputeError("mean-field root did not converge in [" + std::to_string(prev_x) + ", " +
                                   std::to_string(x) + "]");
            found.push_back(root);
        }
        prev_x = x;
        prev_f = f;
    }
    std::sort(found.begin(), found.end());
    for (double m : found) sol.roots.push_back(detail::make_root(S, g, h, m));

    // The m0 ~ 0 branch is locally stable exactly when g < S/2.
    const double g2 = 0.5 * static_cast<double>(S);
    if (g < g2) {
        std::optional<std::size_t> best;
        for (std::size_t k = 0; k < sol.roots.size(); ++k)
            if (sol.roots[k].stable && (!best || std::abs(sol.roots[k].m0) < std::abs(sol.roots[*best].m0)))
                best = k;
        sol.disordered_root = best;
    }
    for (std::size_t k = 0; k < sol.roots.size(); ++k) {
        if (!sol.roots[k].stable || (sol.disordered_root && *sol.disordered_root == k)) continue;
        if (!sol.ordered_root || sol.roots[k].ln_z > sol.roots[*sol.ordered_root].ln_z) sol.ordered_root = k;
    }

    if (!sol.ordered_root) {
        sol.phase = Phase::disordered;
    } else if (!sol.disordered_root) {
        sol.phase = Phase::ordered;
    } else {
        const double diff = sol.roots[*sol.ordered_root].ln_z - sol.roots[*sol.disordered_root].ln_z;
        if (std::abs(diff) <= opt.coexistence_tolerance)
            sol.phase = Phase::coexistence;
        else
            sol.phase = diff > 0.0 ? Phase::metastable_disordered : Phase::metastable_ordered;
    }
    return sol;
}

/// max over m in (0, 1] of [rhs(m) - m] at h = 0; non-negative iff a nonzero root exists.
inline double ordered_excess(std::size_t S, double g)
{
    const std::size_t n = 2000;
    double best = -std::numeric_limits<double>::infinity(), best_m = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        const double m = static_cast<double>(k) / static_cast<double>(n);
        const double v = -mean_field_residual(S, g, 0.0, m);
        if (v > best) {
            best = v;
            best_m = m;
        }
    }
    double a = std::max(1e-9, best_m - 1.0 / n), b = std::min(1.0, best_m + 1.0 / n);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
        const double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
        if (-mean_field_residual(S, g, 0.0, c) >= -mean_field_residual(S, g, 0.0, d))
            b = d;
        else
            a = c;
    }
    return std::max(best, -mean_field_residual(S, g, 0.0, 0.5 * (a + b)));
}

struct PhaseScan {
    std::size_t S = 0;
    double g1 = 0.0;          // ordered solution first appears
    double gc = 0.0;          // ordered and disordered ln Z equal
    double g2 = 0.0;          // S/2, disordered solution loses stability
    double R_at_gc = 0.0;     // R_+ of the ordered root at gc
    double m_at_gc = 0.0;
    bool first_order = false;
};

/// Critical couplings at h = 0. `g_grid` (ascending) is used to bracket g1; when its
/// first point already carries an ordered root the bracket is extended downward.
inline PhaseScan phase_scan(std::size_t S, std::vector<double> g_grid)
{
    if (S < 3) throw ValidationError("phase_scan needs S >= 3");
    if (g_grid.size() < 2 || !std::is_sorted(g_grid.begin(), g_grid.end()))
        throw ValidationError("g grid must hold at least two ascending values");
    PhaseScan out;
    out.S = S;
    out.g2 = 0.5 * static_cast<double>(S);
    const double eps = 1e-9;

    auto has_ordered = [&](double g) { return g < out.g2 - eps && ordered_excess(S, g) >= 0.0; };

    std::optional<std::size_t> first;
    for (std::size_t k = 0; k < g_grid.size() && g_grid[k] < out.g2 - eps; ++k)
        if (has_ordered(g_grid[k])) {
            first = k;
            break;
        }

    // a narrow coexistence window can fall between grid points; just below S/2 it never does
    if (!first && has_ordered(out.g2 - 1e-6)) {
        g_grid.erase(std::remove_if(g_grid.begin(), g_grid.end(), [&](double g) { return g >= out.g2 - 1e-6; }),
                     g_grid.end());
        g_grid.push_back(out.g2 - 1e-6);
        first = g_grid.size() - 1;
    }

    if (!first) {
        // Continuous transition: the ordered branch bifurcates from m0 = 0 at S/2.
        out.g1 = out.gc = out.g2;
        out.R_at_gc = 1.0 / static_cast<double>(S);
        out.m_at_gc = 0.0;
        out.first_order = false;
        return out;
    }

    double lo = 0.0, hi = g_grid[*first];
    if (*first > 0) {
        lo = g_grid[*first - 1];
    } else {
        const double span = g_grid.back() - g_grid.front();
        lo = hi;
        for (int ext = 0; ext < 20 && has_ordered(lo); ++ext) lo -= span;
        if (has_ordered(lo)) throw ComputeError("could not bracket g1 below the grid");
    }
    for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (has_ordered(mid) ? hi : lo) = mid;
    }
    out.g1 = hi;
    out.first_order = true;

    auto delta = [&](double g) {
        const auto sol = mean_field_solve(S, g);
        if (!sol.ordered_root) return -std::numeric_limits<double>::infinity();
        return sol.roots[*sol.ordered_root].ln_z - std::log(static_cast<double>(S));
    };
    double a = out.g1, b = out.g2 - eps;
    if (!(delta(b) > 0.0)) throw ComputeError("ordered branch never overtakes the disordered one");
    for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
        const double mid = 0.5 * (a + b);
        (delta(mid) > 0.0 ? b : a) = mid;
    }
    out.gc = b;
    const auto sol = mean_field_solve(S, out.gc);
    const auto& root = sol.roots[*sol.ordered_root];
    out.R_at_gc = root.R_plus;
    out.m_at_gc = root.m0;
    return out;
}

inline std::vector<double> linspace(double a, double b, std::size_t n)
{
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    return out;
}

struct FreeEnergyPoint {
    double omega = 0.0;     // g m0
    double value = 0.0;     // -ln Z / (g A)
};

inline std::vector<FreeEnergyPoint> free_energy_curve(std::size_t S, double g, const std::vector<double>& m0_grid,
                                                      double h = 0.0)
{
    if (S < 3) throw ValidationError("free energy needs S >= 3");
    if (!(g > 0.0)) throw ValidationError("free energy curve needs g > 0");
    std::vector<FreeEnergyPoint> out;
    out.reserve(m0_grid.size());
    for (double m : m0_grid) out.push_back({g * m, -ln_z_per_agent(S, g, h, m) / g});
    return out;
}

} // namespace mktphase
