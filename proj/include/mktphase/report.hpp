#pragma once

// CSV/JSON serialization shared by the command line and the pipeline, plus SHA-256 helpers.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "mktphase/error.hpp"
#include "mktphase/ising.hpp"
#include "mktphase/mean_field.hpp"
#include "mktphase/sector_risk.hpp"
#include "mktphase/spectral.hpp"
#include "mktphase/svm.hpp"
#include "mktphase/tail_fit.hpp"

namespace mktphase {

using Json = nlohmann::ordered_json;

inline std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw ComputeError("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[md[k] >> 4]);
        out.push_back(hex[md[k] & 0xf]);
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// Shortest round-trip text for a double.
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Json to_json(const WindowSpectrum& s, bool with_market_return = true)
{
    Json j;
    j["center_date"] = s.center_date;
    j["center"] = s.window.center;
    j["T"] = s.window.length;
    j["lambda0"] = s.lambda0;
    j["v2"] = s.v2;
    j["market_var"] = s.market_var;
    j["trace"] = s.trace;
    j["degenerate"] = s.degenerate;
    j["negative_betas"] = s.negative_components;
    j["beta"] = to_vector(s.beta);
    j["bulk"] = s.bulk;
    if (with_market_return) j["market_return"] = to_vector(s.market_return);
    return j;
}

inline WindowSpectrum spectrum_from_json(const Json& j, std::size_t step)
{
    WindowSpectrum s;
    s.center_date = j.at("center_date").get<std::string>();
    s.window = WindowSpec{j.at("center").get<std::size_t>(), j.at("T").get<std::size_t>(), step};
    s.lambda0 = j.at("lambda0").get<double>();
    s.v2 = j.at("v2").get<double>();
    s.market_var = j.at("market_var").get<double>();
    s.trace = j.at("trace").get<double>();
    s.degenerate = j.at("degenerate").get<bool>();
    s.negative_components = j.at("negative_betas").get<std::size_t>();
    s.beta = to_eigen(j.at("beta").get<std::vector<double>>());
    s.bulk = j.at("bulk").get<std::vector<double>>();
    s.market_return = to_eigen(j.at("market_return").get<std::vector<double>>());
    return s;
}

/// Long format: date,ticker,beta with one row per (window, stock).
inline void write_betas_csv(std::span<const WindowSpectrum> spectra, const std::vector<std::string>& tickers,
                            std::ostream& out)
{
    out << "date,ticker,beta\n";
    for (const auto& s : spectra)
        for (std::size_t i = 0; i < tickers.size(); ++i)
            out << s.center_date << ',' << tickers[i] << ',' << fmt(s.beta(static_cast<Eigen::Index>(i))) << '\n';
}

inline void write_risk_csv(const RiskSeries& rs, std::ostream& out)
{
    out << "center_date,sector,R\n";
    for (std::size_t k = 0; k < rs.windows(); ++k)
        for (std::size_t s = 0; s < rs.sectors.size(); ++s)
            out << rs.centers[k] << ',' << rs.sectors[s] << ','
                << fmt(rs.R(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s))) << '\n';
}

inline Json to_json(const std::vector<Transition>& events)
{
    Json arr = Json::array();
    for (const auto& e : events) arr.push_back({{"window", e.window}, {"date", e.date}, {"from", e.from}, {"to", e.to}});
    return arr;
}

inline Json to_json(const TailFit& f)
{
    return {{"alpha", f.alpha},
            {"r0", f.r0},
            {"loglik", f.loglik},
            {"ci", {f.ci_lo, f.ci_hi}},
            {"ci_open", {f.ci_lo_open, f.ci_hi_open}},
            {"censored", f.censored},
            {"censored_lower", f.censored_lower},
            {"p", f.gof_pvalue},
            {"gof", {{"statistic", f.gof.statistic}, {"bins", f.gof.bins}, {"dof", f.gof.dof},
                     {"warning", f.gof.warning}}},
            {"n", f.n}};
}

inline void write_histogram_csv(const std::vector<HistogramRow>& rows, std::ostream& out,
                                const std::string& center = {})
{
    if (center.empty())
        out << "abs_r,empirical,fitted,scale\n";
    for (const auto& r : rows) {
        if (!center.empty()) out << center << ',';
        out << fmt(r.abs_r) << ',' << fmt(r.empirical) << ',' << fmt(r.fitted) << ',' << fmt(r.scale) << '\n';
    }
}

inline Json to_json(const BetaErrorReport& r)
{
    Json bands = Json::array();
    for (const auto& b : r.per_rank_band)
        bands.push_back({{"rank", b.rank}, {"stock", b.stock}, {"input", b.input}, {"lo", b.lo}, {"hi", b.hi},
                         {"half_width", b.half_width}});
    double lmean = 0.0;
    for (double l : r.lambda0) lmean += l;
    if (!r.lambda0.empty()) lmean /= static_cast<double>(r.lambda0.size());
    return {{"T", r.window},
            {"replicas", r.replicas},
            {"failed", r.failed},
            {"match_by_rank", r.match_by_rank},
            {"avg_error", r.avg_error},
            {"coverage", r.coverage},
            {"lambda0_mean", lmean},
            {"lambda0_sd", r.lambda0.size() > 1 ? stats::stddev(r.lambda0) : 0.0},
            {"bands", bands}};
}

inline void write_trajectory_csv(const IsingTrajectory& tr, std::ostream& out)
{
    out << "step,m,R_plus,R_minus,R_neutral\n";
    for (std::size_t t = 0; t < tr.steps(); ++t)
        out << t << ',' << fmt(tr.m[t]) << ',' << fmt(tr.R_plus[t]) << ',' << fmt(tr.R_minus[t]) << ','
            << fmt(tr.R_neutral(t)) << '\n';
}

inline Json to_json(const PhaseScan& p)
{
    return {{"S", p.S},          {"g1", p.g1},          {"gc", p.gc},          {"g2", p.g2},
            {"R_gc", p.R_at_gc}, {"m0_gc", p.m_at_gc},  {"first_order", p.first_order}};
}

inline Json to_json(const MeanFieldSolution& s)
{
    Json roots = Json::array();
    for (const auto& r : s.roots)
        roots.push_back({{"m0", r.m0}, {"lnZ_per_agent", r.ln_z}, {"R_plus", r.R_plus}, {"R_minus", r.R_minus},
                         {"R_neutral", r.R_neutral}, {"stable", r.stable}});
    return {{"S", s.S}, {"g", s.g}, {"h", s.h}, {"phase", to_string(s.phase)}, {"roots", roots}};
}

inline void write_free_energy_csv(const std::vector<FreeEnergyPoint>& pts, std::ostream& out)
{
    out << "omega,free_energy\n";
    for (const auto& p : pts) out << fmt(p.omega) << ',' << fmt(p.value) << '\n';
}

} // namespace mktphase
