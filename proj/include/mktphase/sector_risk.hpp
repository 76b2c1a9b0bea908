#pragma once

// Sector risk measure: volume-weighted betas above one, normalized across sectors.
//   R(t, s) = A_S(t) sum_{i in s, beta_i(t) > 1} beta_i(t) V(t, i),   sum_s R(t, s) = 1

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mktphase/error.hpp"
#include "mktphase/ingest.hpp"
#include "mktphase/spectral.hpp"

namespace mktphase {

enum class VolumeMeasure { shares, currency };

using MergeMap = std::map<std::string, std::string>;

/// CSV with header `from_sector,to_sector`.
inline MergeMap load_merge_map(const std::filesystem::path& path)
{
    const auto csv = detail::read_csv(path, {"from_sector", "to_sector"});
    MergeMap out;
    for (std::size_t k = 0; k < csv.rows.size(); ++k) {
        const auto& row = csv.rows[k];
        if (row[0].empty() || row[1].empty())
            throw ValidationError(path.string() + ":" + std::to_string(csv.line_numbers[k]) + ": empty field");
        out[row[0]] = row[1];
    }
    return out;
}

struct RiskSeries {
    std::vector<std::string> centers;     // center dates (or step labels)
    std::vector<std::string> sectors;
    Eigen::MatrixXd R;                    // windows x sectors
    std::vector<double> A_S;              // 0 for flagged rows
    std::vector<bool> flagged;            // no beta > 1 in the window

    std::size_t windows() const { return centers.size(); }
};

struct RiskRow {
    Eigen::VectorXd R;
    double A_S = 0.0;
    bool flagged = false;
};

/// One window. `sector_of[i]` indexes into [0, n_sectors).
inline RiskRow risk_row(const Eigen::VectorXd& beta, const Eigen::VectorXd& volume,
                        std::span<const std::size_t> sector_of, std::size_t n_sectors)
{
    if (volume.size() != beta.size() || sector_of.size() != static_cast<std::size_t>(beta.size()))
        throw ValidationError("beta, volume and sector vectors differ in length");
    RiskRow row;
    row.R = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_sectors));
    for (Eigen::Index i = 0; i < beta.size(); ++i)
        if (beta(i) > 1.0) row.R(static_cast<Eigen::Index>(sector_of[static_cast<std::size_t>(i)])) += beta(i) * volume(i);
    const double total = row.R.sum();
    if (!(total > 0.0)) {
        row.R.setZero();
        row.flagged = true;
        return row;
    }
    row.A_S = 1.0 / total;
    row.R *= row.A_S;
    return row;
}

/// Sorted sector labels after merges, and each stock's index into them.
inline std::pair<std::vector<std::string>, std::vector<std::size_t>>
index_sectors(const std::vector<std::string>& labels, const MergeMap& merge)
{
    std::vector<std::string> merged;
    merged.reserve(labels.size());
    for (const auto& l : labels) {
        if (l.empty()) throw ValidationError("every ticker needs a sector label for the risk measure");
        const auto it = merge.find(l);
        merged.push_back(it == merge.end() ? l : it->second);
    }
    std::vector<std::string> sectors = merged;
    std::sort(sectors.begin(), sectors.end());
    sectors.erase(std::unique(sectors.begin(), sectors.end()), sectors.end());
    std::vector<std::size_t> idx;
    idx.reserve(merged.size());
    for (const auto& m : merged)
        idx.push_back(static_cast<std::size_t>(std::lower_bound(sectors.begin(), sectors.end(), m) - sectors.begin()));
    return {sectors, idx};
}

/// Risk measure over a sequence of window spectra of `rp`. V(t, i) is the sum of
/// daily traded shares (or shares x close with VolumeMeasure::currency) in the window.
inline RiskSeries risk_measure(std::span<const WindowSpectrum> spectra, const ReturnPanel& rp,
                               const MergeMap& merge = {}, VolumeMeasure measure = VolumeMeasure::shares)
{
    if (!rp.volume) throw ValidationError("risk measure needs traded volumes");
    if (rp.sectors.size() != rp.stocks()) throw ValidationError("risk measure needs sector labels");
    if (measure == VolumeMeasure::currency && !rp.close)
        throw ValidationError("currency volume needs closing prices");
    const auto [sectors, sector_of] = index_sectors(rp.sectors, merge);

    RiskSeries rs;
    rs.sectors = sectors;
    rs.R.resize(static_cast<Eigen::Index>(spectra.size()), static_cast<Eigen::Index>(sectors.size()));
    for (std::size_t k = 0; k < spectra.size(); ++k) {
        const auto& sp = spectra[k];
        if (static_cast<std::size_t>(sp.beta.size()) != rp.stocks())
            throw ValidationError("spectrum and panel disagree on stock count");
        if (!sp.window.fits(rp.days())) throw ValidationError("spectrum window exceeds panel");
        const auto b = static_cast<Eigen::Index>(sp.window.begin());
        const auto len = static_cast<Eigen::Index>(sp.window.length);
        Eigen::VectorXd v;
        if (measure == VolumeMeasure::shares)
            v = rp.volume->middleCols(b, len).rowwise().sum();
        else
            v = (rp.volume->middleCols(b, len).array() * rp.close->middleCols(b, len).array()).rowwise().sum();
        const auto row = risk_row(sp.beta, v, sector_of, sectors.size());
        rs.R.row(static_cast<Eigen::Index>(k)) = row.R.transpose();
        rs.A_S.push_back(row.A_S);
        rs.flagged.push_back(row.flagged);
        rs.centers.push_back(sp.center_date.empty() ? std::to_string(sp.window.center) : sp.center_date);
    }
    return rs;
}

struct Transition {
    std::size_t window = 0;
    std::string date;
    std::string from;
    std::string to;
};

/// Changes of the dominant sector. A window counts only when its largest R exceeds
/// `threshold`; an event is logged when such a window's leader differs from the
/// previous qualifying leader. Flagged rows are skipped.
inline std::vector<Transition> transition_detector(const RiskSeries& rs, double threshold)
{
    std::vector<Transition> out;
    std::optional<Eigen::Index> leader;
    for (std::size_t k = 0; k < rs.windows(); ++k) {
        if (rs.flagged.size() == rs.windows() && rs.flagged[k]) continue;
        Eigen::Index arg = 0;
        const double top = rs.R.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
        if (!(top > threshold)) continue;
        if (leader && *leader != arg)
            out.push_back({k, rs.centers[k], rs.sectors[static_cast<std::size_t>(*leader)],
                           rs.sectors[static_cast<std::size_t>(arg)]});
        leader = arg;
    }
    return out;
}

} // namespace mktphase
