#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mktphase/mean_field.hpp"

using namespace mktphase;
using Catch::Approx;

namespace {

// Coupling at which m is a nonzero h = 0 root, from solving the stationarity
// condition for y = exp(g m): (1 - m) y^2 - m (S - 2) y - (1 + m) = 0.
double g_of_m(std::size_t S, double m)
{
    const double s2 = static_cast<double>(S) - 2.0;
    const double y = (m * s2 + std::sqrt(m * m * s2 * s2 + 4.0 * (1.0 - m * m))) / (2.0 * (1.0 - m));
    return std::log(y) / m;
}

double argmin_g(std::size_t S)
{
    double a = 1e-6, b = 0.999;
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double c = b - r * (b - a), d = a + r * (b - a);
        if (g_of_m(S, c) < g_of_m(S, d))
            b = d;
        else
            a = c;
    }
    return 0.5 * (a + b);
}

// ln Z per agent from the multinomial entropy of the sector fractions
double variational_ln_z(std::size_t S, double g, double h, double p_plus, double p_minus)
{
    const double p0 = 1.0 - p_plus - p_minus;
    const double m = p_plus - p_minus;
    auto xlogx = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
    return -(xlogx(p_plus) + xlogx(p_minus) + xlogx(p0)) + p0 * std::log(static_cast<double>(S) - 2.0) +
           0.5 * g * m * m + g * h * m;
}

// gc from the closed-form ordered branch: ln Z(m, g(m)) = ln S, m beyond the turning point
double gc_oracle(std::size_t S)
{
    auto excess = [S](double m) {
        const double g = g_of_m(S, m);
        return std::log(static_cast<double>(S) - 2.0 + 2.0 * std::cosh(g * m)) - 0.5 * g * m * m -
               std::log(static_cast<double>(S));
    };
    double a = argmin_g(S), b = 0.999;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        (excess(mid) > 0.0 ? b : a) = mid;
    }
    return g_of_m(S, 0.5 * (a + b));
}

const std::vector<double> coarse_grid = linspace(2.0, 6.0, 41);

} // namespace

TEST_CASE("m0 = 0 is always a root at h = 0", "[meanfield]")
{
    for (std::size_t S : {3, 4, 6, 8, 10})
        for (double g : {0.5, 2.0, 3.9, 4.5, 7.0}) {
            const auto sol = mean_field_solve(S, g);
            REQUIRE_FALSE(sol.roots.empty());
            CHECK(sol.roots.front().m0 == 0.0);
            for (const auto& r : sol.roots) CHECK(r.residual < 1e-10);
        }
}

TEST_CASE("fractions are normalized and consistent with m0", "[meanfield]")
{
    for (double h : {0.0, 0.05, -0.2}) {
        const auto sol = mean_field_solve(8, 3.9, h);
        for (const auto& r : sol.roots) {
            CHECK(r.R_plus + r.R_minus + 6.0 * r.R_neutral == Approx(1.0).epsilon(1e-14));
            CHECK(r.R_plus - r.R_minus == Approx(r.m0).margin(1e-10));
            CHECK(r.ln_z == Approx(variational_ln_z(8, 3.9, h, r.R_plus, r.R_minus)).epsilon(1e-12));
        }
    }
}

TEST_CASE("S = 4 is continuous at g = 2", "[meanfield]")
{
    CHECK(mean_field_solve(4, 1.9).roots.size() == 1);
    CHECK(mean_field_solve(4, 1.9).phase == Phase::disordered);
    const auto sol = mean_field_solve(4, 2.1);
    REQUIRE(sol.ordered_root);
    CHECK(sol.phase == Phase::ordered);
    double prev = sol.roots[*sol.ordered_root].m0;
    CHECK(prev > 0.0);
    for (double g : {2.05, 2.01, 2.001}) {
        const auto s = mean_field_solve(4, g);
        REQUIRE(s.ordered_root);
        const double m = s.roots[*s.ordered_root].m0;
        CHECK(m < prev);
        prev = m;
    }
    CHECK(prev < 0.1);
    const auto scan = phase_scan(4, coarse_grid);
    CHECK_FALSE(scan.first_order);
    CHECK(scan.gc == 2.0);
}

TEST_CASE("S = 8 has three branches inside the coexistence window", "[meanfield]")
{
    const auto sol = mean_field_solve(8, 3.9);
    REQUIRE(sol.roots.size() == 3);
    CHECK(sol.roots[0].stable);
    CHECK_FALSE(sol.roots[1].stable);
    CHECK(sol.roots[2].stable);
    REQUIRE(sol.disordered_root);
    REQUIRE(sol.ordered_root);
    CHECK(*sol.ordered_root == 2);
    // gc is near 3.785: the ordered state wins at 3.9 and loses at 3.75
    CHECK(sol.phase == Phase::metastable_disordered);
    CHECK(mean_field_solve(8, 3.75).phase == Phase::metastable_ordered);
    CHECK(mean_field_solve(8, 4.2).phase == Phase::ordered);
    CHECK(mean_field_solve(8, 3.5).phase == Phase::disordered);
}

TEST_CASE("critical couplings agree with the closed-form branch", "[meanfield]")
{
    for (std::size_t S : {7, 8, 9, 10, 12}) {
        const auto scan = phase_scan(S, coarse_grid);
        CHECK(scan.first_order);
        CHECK(scan.g1 == Approx(g_of_m(S, argmin_g(S))).margin(1e-7));
        CHECK(scan.gc == Approx(gc_oracle(S)).margin(1e-7));
        CHECK(scan.g2 == 0.5 * static_cast<double>(S));
        CHECK(scan.g1 < scan.gc);
        CHECK(scan.gc < scan.g2);
        CHECK(scan.R_at_gc > 0.5);
    }
}

TEST_CASE("S = 6 is second order with R = 1/6", "[meanfield]")
{
    const auto scan = phase_scan(6, coarse_grid);
    CHECK_FALSE(scan.first_order);
    CHECK(scan.gc == 3.0);
    CHECK(scan.R_at_gc == 1.0 / 6.0);
}

TEST_CASE("grid starting inside the ordered window is extended", "[meanfield]")
{
    const auto a = phase_scan(8, linspace(3.8, 3.95, 4));
    const auto b = phase_scan(8, coarse_grid);
    CHECK(a.g1 == Approx(b.g1).margin(1e-9));
    CHECK(a.gc == Approx(b.gc).margin(1e-9));
    CHECK_THROWS_AS(phase_scan(8, {4.0}), ValidationError);
    CHECK_THROWS_AS(phase_scan(8, {4.0, 3.0}), ValidationError);
}

TEST_CASE("free energy curves", "[meanfield]")
{
    const auto grid = linspace(-1.0, 1.0, 4001);
    auto minima = [](const std::vector<FreeEnergyPoint>& c) {
        std::vector<std::size_t> out;
        for (std::size_t k = 1; k + 1 < c.size(); ++k)
            if (c[k].value < c[k - 1].value && c[k].value < c[k + 1].value) out.push_back(k);
        return out;
    };

    SECTION("one minimum at omega = 0 below g1")
    {
        const auto c = free_energy_curve(8, 3.5, grid);
        const auto mins = minima(c);
        REQUIRE(mins.size() == 1);
        CHECK(c[mins[0]].omega == Approx(0.0).margin(1e-12));
    }
    SECTION("equal depths at gc")
    {
        const auto scan = phase_scan(8, coarse_grid);
        const auto c = free_energy_curve(8, scan.gc, {0.0, scan.m_at_gc});
        CHECK(std::abs(c[0].value - c[1].value) < 1e-6);
        CHECK(c[1].omega == Approx(scan.gc * scan.m_at_gc));
    }
    SECTION("omega = 0 is a maximum above S/2")
    {
        const auto c = free_energy_curve(8, 4.5, grid);
        const std::size_t mid = 2000;
        CHECK(c[mid].omega == 0.0);
        CHECK(c[mid].value > c[mid - 1].value);
        CHECK(c[mid].value > c[mid + 1].value);
        CHECK(minima(c).size() == 2);
    }
    SECTION("stationary points are the roots")
    {
        const double g = 3.9;
        const auto sol = mean_field_solve(8, g);
        for (const auto& r : sol.roots) {
            const double d = 1e-6;
            const auto c = free_energy_curve(8, g, {r.m0 - d, r.m0 + d});
            const double slope = (c[1].value - c[0].value) / (2 * d);
            CHECK(std::abs(slope) < 1e-8);
        }
    }
    CHECK_THROWS_AS(free_energy_curve(8, 0.0, grid), ValidationError);
}

TEST_CASE("a field breaks the symmetry", "[meanfield]")
{
    const auto sol = mean_field_solve(8, 4.5, 0.02);
    REQUIRE(sol.ordered_root);
    CHECK(sol.roots[*sol.ordered_root].m0 > 0.0);
    const auto neg = mean_field_solve(8, 4.5, -0.02);
    REQUIRE(neg.ordered_root);
    CHECK(neg.roots[*neg.ordered_root].m0 == Approx(-sol.roots[*sol.ordered_root].m0).epsilon(1e-9));
    CHECK_THROWS_AS(mean_field_solve(2, 1.0), ValidationError);
    CHECK_THROWS_AS(mean_field_solve(8, -1.0), ValidationError);
}
