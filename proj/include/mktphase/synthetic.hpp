#pragma once

// Synthetic price/volume/sector panels driven by the stochastic volatility model.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "mktphase/ingest.hpp"
#include "mktphase/rng.hpp"
#include "mktphase/svm.hpp"

namespace mktphase {

inline const std::vector<std::string>& default_sector_labels()
{
    static const std::vector<std::string> labels{
        "Energy",     "Materials", "Industrials",  "Consumer Discretionary", "Consumer Staples",
        "Health Care", "Financials", "Information Technology", "Telecommunication", "Utilities"};
    return labels;
}

struct SyntheticOptions {
    double volume_mean = 1.0e6;     // mean of the per-stock mean daily volume
    double volume_sigma = 0.5;      // log-sd across stocks and across days
    double daily_scale = 0.01;      // raw log-return scale applied to the model draws
    std::vector<std::string> sector_labels = default_sector_labels();
    std::string start_date = "1999-01-04";
};

namespace detail {

inline std::vector<std::string> business_days(const std::string& start, std::size_t count)
{
    using namespace std::chrono;
    const year_month_day ymd{year{std::stoi(start.substr(0, 4))},
                             month{static_cast<unsigned>(std::stoi(start.substr(5, 2)))},
                             day{static_cast<unsigned>(std::stoi(start.substr(8, 2)))}};
    if (!ymd.ok()) throw ValidationError("bad start date " + start);
    sys_days d{ymd};
    std::vector<std::string> out;
    out.reserve(count);
    char buf[16];
    while (out.size() < count) {
        const weekday wd{d};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day cur{d};
            std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(cur.year()),
                          static_cast<unsigned>(cur.month()), static_cast<unsigned>(cur.day()));
            out.emplace_back(buf);
        }
        d += days{1};
    }
    return out;
}

} // namespace detail

/// Price panel with T0 + 1 business days whose log returns are
/// daily_scale * (model draws). Volumes are log-normal with a per-stock mean.
inline PricePanel synthetic_price_panel(const SvmConfig& cfg, std::size_t days, std::uint64_t seed,
                                        const SyntheticOptions& opt = {})
{
    cfg.validate();
    if (days < 1) throw ValidationError("synthetic panel needs at least one return day");
    if (opt.sector_labels.empty()) throw ValidationError("need at least one sector label");
    const auto n = static_cast<Eigen::Index>(cfg.stocks());
    const Eigen::MatrixXd r = simulate_svm(cfg, days, derive_seed(seed, stream::replica, 0));

    PricePanel p;
    p.dates = detail::business_days(opt.start_date, days + 1);
    char buf[24];
    for (Eigen::Index i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "S%03ld", static_cast<long>(i));
        p.tickers.emplace_back(buf);
        p.sectors[buf] = opt.sector_labels[static_cast<std::size_t>(i) % opt.sector_labels.size()];
    }
    const auto cols = static_cast<Eigen::Index>(days + 1);
    p.close.resize(n, cols);
    p.close.col(0).setConstant(100.0);
    for (Eigen::Index t = 1; t < cols; ++t)
        p.close.col(t) = p.close.col(t - 1).array() * (opt.daily_scale * r.col(t - 1)).array().exp();

    Engine eng = make_engine(derive_seed(seed, stream::volume));
    std::normal_distribution<double> nd;
    const double mu = std::log(opt.volume_mean) - 0.5 * opt.volume_sigma * opt.volume_sigma;
    p.volume = Eigen::MatrixXd(n, cols);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double stock_mean = std::exp(mu + opt.volume_sigma * nd(eng));
        const double daily_mu = std::log(stock_mean) - 0.5 * opt.volume_sigma * opt.volume_sigma;
        for (Eigen::Index t = 0; t < cols; ++t)
            (*p.volume)(i, t) = std::round(std::exp(daily_mu + opt.volume_sigma * nd(eng)));
    }
    return p;
}

/// Normalized return panel of the synthetic price panel. Reproducible per seed.
inline ReturnPanel generate_synthetic_panel(const SvmConfig& cfg, std::size_t days, std::uint64_t seed,
                                            const SyntheticOptions& opt = {})
{
    return compute_returns(synthetic_price_panel(cfg, days, seed, opt));
}

} // namespace mktphase
