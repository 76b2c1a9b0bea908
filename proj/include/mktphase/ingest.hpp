#pragma once

// Price/volume/sector panel loading, log-return normalization and window slicing.
//
// CSV schemas (UTF-8, comma separated, no quoting):
//   prices:  date,ticker,close     (close > 0)
//   volumes: date,ticker,volume    (volume >= 0, traded shares)
//   sectors: ticker,sector
// Dates are ISO-8601 calendar dates (YYYY-MM-DD).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mktphase/error.hpp"

namespace mktphase {

struct DroppedTicker {
    std::string ticker;
    std::string reason;
};

struct PricePanel {
    std::vector<std::string> tickers;
    std::vector<std::string> dates;          // T0 + 1 trading days, strictly increasing
    Eigen::MatrixXd close;                   // N x (T0 + 1)
    std::optional<Eigen::MatrixXd> volume;   // N x (T0 + 1)
    std::map<std::string, std::string> sectors;
    std::vector<DroppedTicker> dropped;

    std::size_t stocks() const { return tickers.size(); }
};

/// Normalized log returns. Column tau holds the return from dates[tau-1] to
/// dates[tau] of the source price panel; `dates` keeps the later day.
struct ReturnPanel {
    Eigen::MatrixXd returns;                 // N x T0
    std::optional<double> normalization_factor;
    bool degenerate = false;                 // all raw returns zero
    std::vector<std::string> tickers;
    std::vector<std::string> dates;
    std::optional<Eigen::MatrixXd> volume;   // N x T0, aligned with `dates`
    std::optional<Eigen::MatrixXd> close;    // N x T0, aligned with `dates`
    std::vector<std::string> sectors;        // per ticker, empty when unknown

    std::size_t stocks() const { return static_cast<std::size_t>(returns.rows()); }
    std::size_t days() const { return static_cast<std::size_t>(returns.cols()); }

    /// Raw log returns (undoes the global rescaling).
    Eigen::MatrixXd raw_returns() const
    {
        if (!normalization_factor) return returns;
        return returns / *normalization_factor;
    }
};

/// A centered window of `length` days. Covers [center - length/2, center - length/2 + length).
struct WindowSpec {
    std::size_t center = 0;
    std::size_t length = 0;
    std::size_t step = 250;

    std::ptrdiff_t begin() const
    {
        return static_cast<std::ptrdiff_t>(center) - static_cast<std::ptrdiff_t>(length / 2);
    }
    std::ptrdiff_t end() const { return begin() + static_cast<std::ptrdiff_t>(length); }

    bool fits(std::size_t days) const
    {
        return length > 0 && begin() >= 0 && end() <= static_cast<std::ptrdiff_t>(days);
    }
};

struct IngestOptions {
    /// Drop tickers whose volume is <= low_volume_threshold on more than this
    /// fraction of days. Disabled when unset.
    std::optional<double> max_low_volume_fraction;
    double low_volume_threshold = 0.0;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_csv(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.emplace_back(trim(line.substr(pos, comma == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline bool is_iso_date(std::string_view s)
{
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') return false;
    const int y = std::stoi(std::string(s.substr(0, 4)));
    const unsigned m = static_cast<unsigned>(std::stoi(std::string(s.substr(5, 2))));
    const unsigned d = static_cast<unsigned>(std::stoi(std::string(s.substr(8, 2))));
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                       std::chrono::day{d}}
        .ok();
}

inline double parse_number(const std::string& field, const std::string& where)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw ValidationError(where + ": not a number: '" + field + "'");
    }
    if (used != field.size() || !std::isfinite(v))
        throw ValidationError(where + ": not a finite number: '" + field + "'");
    return v;
}

struct CsvRows {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvRows read_csv(const std::filesystem::path& path,
                        const std::vector<std::string>& expected_header)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    CsvRows out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (!header_seen) {
            if (line_no == 1 && fields[0].rfind("\xEF\xBB\xBF", 0) == 0)
                fields[0].erase(0, 3);
            if (fields != expected_header) {
                std::string want;
                for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": expected header '" + want + "'");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != expected_header.size())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(expected_header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        out.rows.push_back(std::move(fields));
        out.line_numbers.push_back(line_no);
    }
    if (!header_seen) throw ValidationError(path.string() + ": empty file");
    return out;
}

// (ticker, date) -> value, with schema checks shared by the price and volume files.
inline std::map<std::string, std::map<std::string, double>>
read_long_panel(const std::filesystem::path& path, const std::string& value_column,
                bool strictly_positive)
{
    const auto csv = read_csv(path, {"date", "ticker", value_column});
    std::map<std::string, std::map<std::string, double>> by_ticker;
    for (std::size_t k = 0; k < csv.rows.size(); ++k) {
        const auto& row = csv.rows[k];
        const std::string where = path.string() + ":" + std::to_string(csv.line_numbers[k]);
        if (!is_iso_date(row[0])) throw ValidationError(where + ": bad ISO-8601 date '" + row[0] + "'");
        if (row[1].empty()) throw ValidationError(where + ": empty ticker");
        const double v = parse_number(row[2], where);
        if (strictly_positive ? !(v > 0.0) : v < 0.0)
            throw ValidationError(where + ": " + (strictly_positive ? "non-positive " : "negative ") +
                                  value_column + " " + row[2]);
        auto [it, inserted] = by_ticker[row[1]].emplace(row[0], v);
        if (!inserted)
            throw ValidationError(where + ": duplicate (date,ticker) row (" + row[0] + "," + row[1] + ")");
    }
    return by_ticker;
}

} // namespace detail

inline std::map<std::string, std::string> load_sectors(const std::filesystem::path& path)
{
    const auto csv = detail::read_csv(path, {"ticker", "sector"});
    std::map<std::string, std::string> out;
    for (std::size_t k = 0; k < csv.rows.size(); ++k) {
        const auto& row = csv.rows[k];
        const std::string where = path.string() + ":" + std::to_string(csv.line_numbers[k]);
        if (row[0].empty() || row[1].empty()) throw ValidationError(where + ": empty field");
        if (!out.emplace(row[0], row[1]).second)
            throw ValidationError(where + ": duplicate ticker '" + row[0] + "'");
    }
    return out;
}

/// Loads and aligns a panel. Tickers missing any date (price, or volume when a
/// volume file is given) are dropped and listed in PricePanel::dropped.
inline PricePanel load_panel(const std::filesystem::path& price_csv,
                             const std::optional<std::filesystem::path>& volume_csv = std::nullopt,
                             const std::optional<std::filesystem::path>& sector_csv = std::nullopt,
                             const IngestOptions& options = {})
{
    const auto prices = detail::read_long_panel(price_csv, "close", true);
    std::optional<std::map<std::string, std::map<std::string, double>>> volumes;
    if (volume_csv) volumes = detail::read_long_panel(*volume_csv, "volume", false);

    std::set<std::string> date_set;
    for (const auto& [ticker, series] : prices)
        for (const auto& [date, v] : series) date_set.insert(date);

    PricePanel panel;
    panel.dates.assign(date_set.begin(), date_set.end());
    const std::size_t n_dates = panel.dates.size();

    std::vector<const std::map<std::string, double>*> kept_prices;
    std::vector<const std::map<std::string, double>*> kept_volumes;
    for (const auto& [ticker, series] : prices) {
        if (series.size() != n_dates) {
            panel.dropped.push_back(
                {ticker, "missing price on " + std::to_string(n_dates - series.size()) + " dates"});
            continue;
        }
        const std::map<std::string, double>* vol = nullptr;
        if (volumes) {
            const auto it = volumes->find(ticker);
            const std::size_t have = it == volumes->end()
                                         ? 0
                                         : static_cast<std::size_t>(std::count_if(
                                               it->second.begin(), it->second.end(),
                                               [&](const auto& kv) { return date_set.count(kv.first) > 0; }));
            if (have != n_dates) {
                panel.dropped.push_back(
                    {ticker, "missing volume on " + std::to_string(n_dates - have) + " dates"});
                continue;
            }
            vol = &it->second;
            if (options.max_low_volume_fraction) {
                std::size_t low = 0;
                for (const auto& d : panel.dates)
                    if (vol->at(d) <= options.low_volume_threshold) ++low;
                const double frac = static_cast<double>(low) / static_cast<double>(n_dates);
                if (frac > *options.max_low_volume_fraction) {
                    panel.dropped.push_back({ticker, "low volume on " + std::to_string(low) + " dates"});
                    continue;
                }
            }
        }
        panel.tickers.push_back(ticker);
        kept_prices.push_back(&series);
        kept_volumes.push_back(vol);
    }

    const auto n = static_cast<Eigen::Index>(panel.tickers.size());
    panel.close.resize(n, static_cast<Eigen::Index>(n_dates));
    if (volumes) panel.volume = Eigen::MatrixXd(n, static_cast<Eigen::Index>(n_dates));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < n_dates; ++t) {
            const auto& d = panel.dates[t];
            panel.close(i, static_cast<Eigen::Index>(t)) = kept_prices[static_cast<std::size_t>(i)]->at(d);
            if (volumes)
                (*panel.volume)(i, static_cast<Eigen::Index>(t)) =
                    kept_volumes[static_cast<std::size_t>(i)]->at(d);
        }
    }
    if (sector_csv) panel.sectors = load_sectors(*sector_csv);
    return panel;
}

/// Log returns rescaled so that sum over days and stocks of r^2 equals N*T0.
/// Per-stock means are kept. An all-zero panel is flagged degenerate and left unscaled.
inline ReturnPanel compute_returns(const PricePanel& panel)
{
    const Eigen::Index n = panel.close.rows();
    const Eigen::Index days = panel.close.cols() - 1;
    if (n == 0 || days < 1) throw ValidationError("panel needs at least one stock and two dates");
    if ((panel.close.array() <= 0.0).any()) throw ValidationError("non-positive close price in panel");

    ReturnPanel rp;
    rp.returns = (panel.close.rightCols(days).array() / panel.close.leftCols(days).array()).log();
    rp.tickers = panel.tickers;
    rp.dates.assign(panel.dates.begin() + 1, panel.dates.end());
    if (panel.volume) rp.volume = panel.volume->rightCols(days);
    rp.close = panel.close.rightCols(days);
    if (!panel.sectors.empty()) {
        rp.sectors.reserve(panel.tickers.size());
        for (const auto& t : panel.tickers) {
            const auto it = panel.sectors.find(t);
            rp.sectors.push_back(it == panel.sectors.end() ? std::string{} : it->second);
        }
    }

    const double sum_sq = rp.returns.squaredNorm();
    if (sum_sq == 0.0) {
        rp.degenerate = true;
        return rp;
    }
    const double factor = std::sqrt(static_cast<double>(n) * static_cast<double>(days) / sum_sq);
    rp.returns *= factor;
    rp.normalization_factor = factor;
    return rp;
}

/// Sub-panel covering the window. No renormalization.
inline ReturnPanel slice_window(const ReturnPanel& rp, const WindowSpec& w)
{
    if (!w.fits(rp.days()))
        throw ValidationError("window [" + std::to_string(w.begin()) + "," + std::to_string(w.end()) +
                              ") exceeds panel of " + std::to_string(rp.days()) + " days");
    const auto b = static_cast<Eigen::Index>(w.begin());
    const auto len = static_cast<Eigen::Index>(w.length);
    ReturnPanel out;
    out.returns = rp.returns.middleCols(b, len);
    out.normalization_factor = rp.normalization_factor;
    out.degenerate = rp.degenerate;
    out.tickers = rp.tickers;
    out.dates.assign(rp.dates.begin() + b, rp.dates.begin() + b + len);
    if (rp.volume) out.volume = rp.volume->middleCols(b, len);
    if (rp.close) out.close = rp.close->middleCols(b, len);
    out.sectors = rp.sectors;
    return out;
}

/// All windows of the given length whose centers start at length/2 and advance by step.
inline std::vector<WindowSpec> window_centers(std::size_t days, std::size_t length, std::size_t step)
{
    if (length == 0 || step == 0) throw ValidationError("window length and step must be positive");
    std::vector<WindowSpec> out;
    for (std::size_t c = length / 2;; c += step) {
        WindowSpec w{c, length, step};
        if (!w.fits(days)) break;
        out.push_back(w);
    }
    return out;
}

inline void write_price_panel(const PricePanel& panel, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    char buf[64];
    {
        std::ofstream out(dir / "prices.csv");
        out << "date,ticker,close\n";
        for (std::size_t t = 0; t < panel.dates.size(); ++t)
            for (std::size_t i = 0; i < panel.tickers.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g",
                              panel.close(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
                out << panel.dates[t] << ',' << panel.tickers[i] << ',' << buf << '\n';
            }
    }
    if (panel.volume) {
        std::ofstream out(dir / "volumes.csv");
        out << "date,ticker,volume\n";
        for (std::size_t t = 0; t < panel.dates.size(); ++t)
            for (std::size_t i = 0; i < panel.tickers.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g",
                              (*panel.volume)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
                out << panel.dates[t] << ',' << panel.tickers[i] << ',' << buf << '\n';
            }
    }
    if (!panel.sectors.empty()) {
        std::ofstream out(dir / "sectors.csv");
        out << "ticker,sector\n";
        for (const auto& [ticker, sector] : panel.sectors) out << ticker << ',' << sector << '\n';
    }
}

/// Wide CSV dump. Line 1: "# normalization_factor=<f>" ("nan" when degenerate);
/// line 2: "date,<ticker>,..."; then one row per return day.
inline void write_returns_csv(const ReturnPanel& rp, std::ostream& out)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", rp.normalization_factor.value_or(std::nan("")));
    out << "# normalization_factor=" << buf << '\n' << "date";
    for (const auto& t : rp.tickers) out << ',' << t;
    out << '\n';
    for (std::size_t tau = 0; tau < rp.days(); ++tau) {
        out << rp.dates[tau];
        for (std::size_t i = 0; i < rp.stocks(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g",
                          rp.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(tau)));
            out << ',' << buf;
        }
        out << '\n';
    }
}

} // namespace mktphase
