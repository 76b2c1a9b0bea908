#pragma once

// Test-only oracles and fixtures.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("mktphase-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Cyclic Jacobi rotations; eigenvalues sorted descending. Independent of Eigen's solvers.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, double tol = 1e-13)
{
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * a.norm()) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) ev[static_cast<std::size_t>(k)] = a(k, k);
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

/// Unit-variance Student-t draws (pf density with r0) built from a normal over a chi-square.
inline std::vector<double> pf_samples(double alpha, double r0, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi(alpha);
    const double scale = r0 * std::sqrt((alpha - 2.0) / alpha);
    std::vector<double> out(n);
    for (auto& v : out) v = scale * z(eng) / std::sqrt(chi(eng) / alpha);
    return out;
}

inline std::vector<double> normal_samples(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> z;
    std::vector<double> out(n);
    for (auto& v : out) v = z(eng);
    return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    double mx = 0, my = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += std::log(x[k]) / n;
        my += std::log(y[k]) / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
        sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
    }
    return sxy / sxx;
}

} // namespace testutil
