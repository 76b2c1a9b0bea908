#pragma once

// Diluted Ising agent model. Each agent trades in one of S sectors: spin +1 and -1
// are the two risky sectors, spin 0 any of the S - 2 neutral ones.
//
//   w(+-1) ~ exp(+-g (m + h)),   w(0) ~ S - 2
//
// Updates are heat-bath moves against the Boltzmann weight
//   exp(g A m^2 / 2 + g h A m) * (S - 2)^(number of neutral agents)
// so the resampled agent sees m without its own spin plus the s^2/(2A) self term.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mktphase/error.hpp"
#include "mktphase/rng.hpp"
#include "mktphase/sector_risk.hpp"

namespace mktphase {

/// Field h applied on steps t_start..t_end inclusive.
struct FieldPulse {
    std::size_t t_start = 0;
    std::size_t t_end = 0;
    double h = 0.0;
};

enum class IsingInit { all_plus, all_minus, random };

struct IsingConfig {
    std::size_t agents = 100;
    std::size_t sectors = 8;
    double g = 3.99;
    std::vector<FieldPulse> field_schedule;
    std::size_t steps = 300;
    std::uint64_t seed = 1;
    IsingInit init = IsingInit::all_plus;

    void validate() const
    {
        if (agents < 1) throw ValidationError("Ising model needs A >= 1");
        if (sectors < 3) throw ValidationError("Ising model needs S >= 3");
        if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("coupling g must be finite and >= 0");
        for (const auto& p : field_schedule) {
            if (p.t_end < p.t_start) throw ValidationError("field pulse ends before it starts");
            if (!std::isfinite(p.h)) throw ValidationError("field h must be finite");
        }
    }

    /// Overlapping pulses add.
    double field_at(std::size_t step) const
    {
        double h = 0.0;
        for (const auto& p : field_schedule)
            if (step >= p.t_start && step <= p.t_end) h += p.h;
        return h;
    }
};

struct IsingTrajectory {
    std::size_t sectors = 0;
    std::vector<double> m;
    std::vector<double> R_plus;
    std::vector<double> R_minus;
    std::vector<double> R_neutral_total;     // all S - 2 neutral sectors together

    std::size_t steps() const { return m.size(); }
    double R_neutral(std::size_t step) const
    {
        return R_neutral_total[step] / static_cast<double>(sectors - 2);
    }
};

/// One heat-bath draw for an agent whose neighbours sum to `others` (excluding itself).
inline int heat_bath_spin(double others, std::size_t A, std::size_t S, double g, double h, double u)
{
    const double x = g * (others / static_cast<double>(A) + h);
    const double self = g / (2.0 * static_cast<double>(A));
    const double lp = x + self, lm = -x + self, l0 = std::log(static_cast<double>(S) - 2.0);
    const double top = std::max({lp, lm, l0});
    const double wp = std::exp(lp - top), wm = std::exp(lm - top), w0 = std::exp(l0 - top);
    const double v = u * (wp + wm + w0);
    if (v < wp) return 1;
    if (v < wp + wm) return -1;
    return 0;
}

/// Runs `cfg.steps` sweeps. Each sweep visits every agent once in a fresh random order.
/// `observer(step, spins)` sees the state after each sweep.
template <class Observer>
IsingTrajectory simulate(const IsingConfig& cfg, Observer&& observer)
{
    cfg.validate();
    const std::size_t A = cfg.agents;
    Engine eng = make_engine(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<std::int8_t> spin(A, 1);
    if (cfg.init == IsingInit::all_minus) {
        std::fill(spin.begin(), spin.end(), std::int8_t{-1});
    } else if (cfg.init == IsingInit::random) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(cfg.sectors) - 1);
        for (auto& s : spin) {
            const int k = pick(eng);
            s = static_cast<std::int8_t>(k == 0 ? 1 : k == 1 ? -1 : 0);
        }
    }
    long total = 0, n_plus = 0, n_minus = 0;
    for (auto s : spin) {
        total += s;
        n_plus += s == 1;
        n_minus += s == -1;
    }

    IsingTrajectory tr;
    tr.sectors = cfg.sectors;
    tr.m.reserve(cfg.steps);
    tr.R_plus.reserve(cfg.steps);
    tr.R_minus.reserve(cfg.steps);
    tr.R_neutral_total.reserve(cfg.steps);

    std::vector<std::size_t> order(A);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double a = static_cast<double>(A);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const double h = cfg.field_at(step);
        std::shuffle(order.begin(), order.end(), eng);
        for (std::size_t idx : order) {
            const int old = spin[idx];
            const int s = heat_bath_spin(static_cast<double>(total - old), A, cfg.sectors, cfg.g, h, unif(eng));
            if (s == old) continue;
            total += s - old;
            n_plus += (s == 1) - (old == 1);
            n_minus += (s == -1) - (old == -1);
            spin[idx] = static_cast<std::int8_t>(s);
        }
        tr.m.push_back(static_cast<double>(total) / a);
        tr.R_plus.push_back(static_cast<double>(n_plus) / a);
        tr.R_minus.push_back(static_cast<double>(n_minus) / a);
        tr.R_neutral_total.push_back(static_cast<double>(static_cast<long>(A) - n_plus - n_minus) / a);
        observer(step, std::span<const std::int8_t>(spin));
    }
    return tr;
}

inline IsingTrajectory simulate(const IsingConfig& cfg)
{
    return simulate(cfg, [](std::size_t, std::span<const std::int8_t>) {});
}

/// Agent fractions as a risk series: sectors "plus", "minus", then "neutral1".."neutral{S-2}",
/// each neutral sector holding an equal share of the neutral agents.
inline RiskSeries to_risk_series(const IsingTrajectory& tr)
{
    RiskSeries rs;
    const std::size_t S = tr.sectors;
    if (S < 3) throw ValidationError("trajectory has fewer than three sectors");
    rs.sectors = {"plus", "minus"};
    for (std::size_t k = 1; k + 2 <= S; ++k) rs.sectors.push_back("neutral" + std::to_string(k));
    rs.R.resize(static_cast<Eigen::Index>(tr.steps()), static_cast<Eigen::Index>(S));
    for (std::size_t t = 0; t < tr.steps(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        rs.R(row, 0) = tr.R_plus[t];
        rs.R(row, 1) = tr.R_minus[t];
        for (std::size_t k = 2; k < S; ++k) rs.R(row, static_cast<Eigen::Index>(k)) = tr.R_neutral(t);
        rs.centers.push_back(std::to_string(t));
        rs.A_S.push_back(1.0);
        rs.flagged.push_back(false);
    }
    return rs;
}

} // namespace mktphase
