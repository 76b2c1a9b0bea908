#pragma once

// End-to-end run driven by a flat INI file:
//
//   [input]    prices, volumes, sectors, merge        (paths relative to the config file)
//   [window]   length, step
//   [risk]     enabled, currency_volume, threshold
//   [tailfit]  enabled, bins, hist_bins, tail_scale
//   [mc]       enabled, stocks, window, replicas, theta, family, match_rank
//   [ising]    enabled, agents, sectors, g, steps, field = t0:t1:h[,t0:t1:h...]
//   [output]   dir                                   (relative to the config file)
//   [run]      seed, threads
//
// Outputs: betas.csv, spectra.json, risk.csv, transitions.json, tailfits.json,
// tail_hist.csv, mc_errors.json, ising.csv, ising_phase.json, manifest.json.
// Spectra are cached under <dir>/cache keyed by a hash of the inputs and window.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>

#include "mktphase/ingest.hpp"
#include "mktphase/ising.hpp"
#include "mktphase/mean_field.hpp"
#include "mktphase/report.hpp"
#include "mktphase/sector_risk.hpp"
#include "mktphase/spectral.hpp"
#include "mktphase/svm.hpp"
#include "mktphase/tail_fit.hpp"

namespace mktphase {

inline constexpr const char* version = "0.1.0";

struct RunConfig {
    std::filesystem::path prices;
    std::optional<std::filesystem::path> volumes;
    std::optional<std::filesystem::path> sectors;
    std::optional<std::filesystem::path> merge;
    long long window_length = 1000;
    long long window_step = 250;

    bool risk = true;
    bool currency_volume = false;
    double risk_threshold = 0.3;

    bool tailfit = true;
    long long tail_bins = 20;
    long long hist_bins = 30;
    double tail_scale = 1.0;

    bool mc = false;
    long long mc_stocks = 100;
    long long mc_window = 750;
    long long mc_replicas = 200;
    double mc_theta = 0.26;
    std::string mc_family = "lognormal";
    bool mc_match_rank = false;

    bool ising = false;
    long long ising_agents = 100;
    long long ising_sectors = 8;
    double ising_g = 3.99;
    long long ising_steps = 300;
    std::string ising_field;

    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    unsigned threads = 0;

    std::string source_text;     // raw config bytes, hashed into the manifest
};

/// "t0:t1:h" pulses separated by commas.
inline std::vector<FieldPulse> parse_field_schedule(const std::string& text)
{
    std::vector<FieldPulse> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto trimmed = std::string(detail::trim(item));
        if (trimmed.empty()) continue;
        const auto a = trimmed.find(':');
        const auto b = a == std::string::npos ? std::string::npos : trimmed.find(':', a + 1);
        if (b == std::string::npos) throw ValidationError("field pulse '" + trimmed + "' is not t0:t1:h");
        try {
            const long long t0 = std::stoll(trimmed.substr(0, a));
            const long long t1 = std::stoll(trimmed.substr(a + 1, b - a - 1));
            if (t0 < 0 || t1 < t0) throw ValidationError("field pulse '" + trimmed + "' has bad step range");
            out.push_back({static_cast<std::size_t>(t0), static_cast<std::size_t>(t1),
                           std::stod(trimmed.substr(b + 1))});
        } catch (const std::logic_error&) {
            throw ValidationError("field pulse '" + trimmed + "' is not t0:t1:h");
        }
    }
    return out;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    namespace pt = boost::property_tree;
    RunConfig c;
    c.source_text = read_file(path);
    pt::ptree tree;
    try {
        std::istringstream in(c.source_text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    const auto base = path.parent_path();
    auto rel = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };
    auto opt_path = [&](const char* key) -> std::optional<std::filesystem::path> {
        if (auto v = tree.get_optional<std::string>(key); v && !v->empty()) return rel(*v);
        return std::nullopt;
    };
    // get(key, default) would silently fall back on unparsable values
    auto read = [&](const char* key, auto& dst) {
        if (!tree.get_child_optional(key)) return;
        try {
            dst = tree.get<std::decay_t<decltype(dst)>>(key);
        } catch (const pt::ptree_bad_data&) {
            throw ValidationError(path.string() + ": " + key + ": cannot parse '" + tree.get<std::string>(key) + "'");
        }
    };
    try {
        c.prices = rel(tree.get<std::string>("input.prices", ""));
        if (tree.get<std::string>("input.prices", "").empty()) c.prices.clear();
        c.volumes = opt_path("input.volumes");
        c.sectors = opt_path("input.sectors");
        c.merge = opt_path("input.merge");
        read("window.length", c.window_length);
        read("window.step", c.window_step);
        read("risk.enabled", c.risk);
        read("risk.currency_volume", c.currency_volume);
        read("risk.threshold", c.risk_threshold);
        read("tailfit.enabled", c.tailfit);
        read("tailfit.bins", c.tail_bins);
        read("tailfit.hist_bins", c.hist_bins);
        read("tailfit.tail_scale", c.tail_scale);
        read("mc.enabled", c.mc);
        read("mc.stocks", c.mc_stocks);
        read("mc.window", c.mc_window);
        read("mc.replicas", c.mc_replicas);
        read("mc.theta", c.mc_theta);
        read("mc.family", c.mc_family);
        read("mc.match_rank", c.mc_match_rank);
        read("ising.enabled", c.ising);
        read("ising.agents", c.ising_agents);
        read("ising.sectors", c.ising_sectors);
        read("ising.g", c.ising_g);
        read("ising.steps", c.ising_steps);
        read("ising.field", c.ising_field);
        c.output_dir = rel(tree.get<std::string>("output.dir", "out"));
        read("run.seed", c.seed);
        read("run.threads", c.threads);
    } catch (const pt::ptree_bad_data& e) {
        throw ValidationError(path.string() + ": bad value: " + e.what());
    }
    return c;
}

/// Every violation found; empty means the config is runnable.
inline std::vector<std::string> validate_config(const RunConfig& c)
{
    std::vector<std::string> v;
    auto need_file = [&](const std::optional<std::filesystem::path>& p, const char* what) {
        if (p && !std::filesystem::is_regular_file(*p)) v.push_back(std::string(what) + ": file not found: " + p->string());
    };
    if (c.prices.empty())
        v.push_back("input.prices: required");
    else
        need_file(c.prices, "input.prices");
    need_file(c.volumes, "input.volumes");
    need_file(c.sectors, "input.sectors");
    need_file(c.merge, "input.merge");
    if (c.window_length < 2) v.push_back("window.length: must be >= 2 (got " + std::to_string(c.window_length) + ")");
    if (c.window_step <= 0) v.push_back("window.step: must be > 0 (got " + std::to_string(c.window_step) + ")");
    if (c.risk && !c.volumes) v.push_back("risk.enabled: needs input.volumes");
    if (c.risk && !c.sectors) v.push_back("risk.enabled: needs input.sectors");
    if (c.tailfit) {
        if (c.window_length < 100) v.push_back("tailfit.enabled: window.length must be >= 100 for tail fits");
        if (c.tail_bins < 3) v.push_back("tailfit.bins: must be >= 3");
        if (c.hist_bins < 1) v.push_back("tailfit.hist_bins: must be >= 1");
        if (!(c.tail_scale > 0.0)) v.push_back("tailfit.tail_scale: must be > 0");
    }
    if (c.mc) {
        if (c.mc_stocks < 2) v.push_back("mc.stocks: must be >= 2");
        if (c.mc_window < 2) v.push_back("mc.window: must be >= 2");
        if (c.mc_replicas < 2) v.push_back("mc.replicas: must be >= 2");
        if (!(c.mc_theta > 0.0 && c.mc_theta < 1.0)) v.push_back("mc.theta: must lie in (0, 1)");
        try {
            parse_family(c.mc_family);
        } catch (const ValidationError& e) {
            v.push_back(std::string("mc.family: ") + e.what());
        }
    }
    if (c.ising) {
        if (c.ising_agents < 1) v.push_back("ising.agents: must be >= 1");
        if (c.ising_sectors < 3) v.push_back("ising.sectors: must be >= 3");
        if (!(c.ising_g >= 0.0)) v.push_back("ising.g: must be >= 0");
        if (c.ising_steps < 1) v.push_back("ising.steps: must be >= 1");
        try {
            parse_field_schedule(c.ising_field);
        } catch (const ValidationError& e) {
            v.push_back(std::string("ising.field: ") + e.what());
        }
    }
    // The panel length check needs the data; only attempted once the files are known to exist.
    if (v.empty() && c.window_length >= 2) {
        try {
            const auto panel = load_panel(c.prices, c.volumes, c.sectors);
            const auto days = panel.dates.empty() ? 0 : panel.dates.size() - 1;
            if (static_cast<std::size_t>(c.window_length) > days)
                v.push_back("window.length: " + std::to_string(c.window_length) + " exceeds panel of " +
                            std::to_string(days) + " return days");
        } catch (const std::exception& e) {
            v.push_back(std::string("input: ") + e.what());
        }
    }
    return v;
}

struct RunResult {
    Json manifest;
    std::vector<std::string> files;      // written outputs relative to the output dir
    bool spectra_from_cache = false;
};

namespace detail {

template <class Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("stage ") + name + ": " + e.what());
    } catch (const ComputeError& e) {
        throw ComputeError(std::string("stage ") + name + ": " + e.what());
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

} // namespace detail

inline RunResult run_pipeline(const RunConfig& c)
{
    if (const auto problems = validate_config(c); !problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    namespace fs = std::filesystem;
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    RunResult res;
    auto emit = [&](const std::string& name, const std::string& text) {
        detail::write_text(out / name, text);
        res.files.push_back(name);
    };
    const auto length = static_cast<std::size_t>(c.window_length);
    const auto step = static_cast<std::size_t>(c.window_step);

    const ReturnPanel rp = detail::run_stage("ingest", [&] {
        return compute_returns(load_panel(c.prices, c.volumes, c.sectors));
    });

    std::string input_key = sha256_file(c.prices);
    for (const auto& p : {c.volumes, c.sectors})
        if (p) input_key += sha256_file(*p);
    const std::string spectra_key =
        sha256_hex(input_key + "|T=" + std::to_string(length) + "|step=" + std::to_string(step) + "|" + version);
    const fs::path cache_file = out / "cache" / ("spectra-" + spectra_key.substr(0, 32) + ".json");

    std::vector<WindowSpectrum> spectra;
    if (fs::is_regular_file(cache_file)) {
        const auto cached = Json::parse(read_file(cache_file));
        for (const auto& j : cached) spectra.push_back(spectrum_from_json(j, step));
        res.spectra_from_cache = true;
    } else {
        spectra = detail::run_stage("spectra", [&] { return rolling_spectra(rp, length, step, c.threads); });
        fs::create_directories(cache_file.parent_path());
        Json arr = Json::array();
        for (const auto& s : spectra) arr.push_back(to_json(s));
        detail::write_text(cache_file, arr.dump());
    }
    if (spectra.empty()) throw ValidationError("stage spectra: no window of length " + std::to_string(length) + " fits");

    {
        Json arr = Json::array();
        for (const auto& s : spectra) arr.push_back(to_json(s));
        emit("spectra.json", arr.dump(1) + "\n");
        std::ostringstream b;
        write_betas_csv(spectra, rp.tickers, b);
        emit("betas.csv", b.str());
    }

    if (c.risk) {
        detail::run_stage("risk", [&] {
            const MergeMap merge = c.merge ? load_merge_map(*c.merge) : MergeMap{};
            const auto rs = risk_measure(spectra, rp, merge,
                                         c.currency_volume ? VolumeMeasure::currency : VolumeMeasure::shares);
            std::ostringstream r;
            write_risk_csv(rs, r);
            emit("risk.csv", r.str());
            Json flagged = Json::array();
            for (std::size_t k = 0; k < rs.windows(); ++k)
                if (rs.flagged[k]) flagged.push_back(rs.centers[k]);
            Json t{{"threshold", c.risk_threshold},
                   {"events", to_json(transition_detector(rs, c.risk_threshold))},
                   {"flagged_windows", flagged}};
            emit("transitions.json", t.dump(1) + "\n");
        });
    }

    if (c.tailfit) {
        detail::run_stage("tailfit", [&] {
            TailFitOptions opt;
            opt.bins = static_cast<std::size_t>(c.tail_bins);
            Json arr = Json::array();
            std::ostringstream hist;
            hist << "center_date,abs_r,empirical,fitted,scale\n";
            for (std::size_t k = 0; k < spectra.size(); ++k) {
                const auto& s = spectra[k];
                const auto x = standardize(to_vector(s.market_return));
                TailFit fit;
                try {
                    fit = fit_alpha(x, opt);
                } catch (const std::exception& e) {
                    throw ComputeError("window " + std::to_string(k) + " (" + s.center_date + "): " + e.what());
                }
                Json j = to_json(fit);
                j["center_date"] = s.center_date;
                j["center"] = s.window.center;
                arr.push_back(j);
                write_histogram_csv(pdf_histogram(x, fit, static_cast<std::size_t>(c.hist_bins), 6.0, c.tail_scale),
                                    hist, s.center_date);
            }
            emit("tailfits.json", arr.dump(1) + "\n");
            emit("tail_hist.csv", hist.str());
        });
    }

    const std::uint64_t mc_seed = derive_seed(c.seed, 100);
    const std::uint64_t ising_seed = derive_seed(c.seed, 200);
    if (c.mc) {
        detail::run_stage("mc", [&] {
            SvmSpec spec;
            spec.n = static_cast<std::size_t>(c.mc_stocks);
            spec.theta = c.mc_theta;
            spec.gamma1_family = parse_family(c.mc_family);
            const auto cfg = make_svm_config(spec, mc_seed);
            BandOptions opt;
            opt.match_by_rank = c.mc_match_rank;
            opt.threads = c.threads;
            const auto rep = beta_error_bands(cfg, static_cast<std::size_t>(c.mc_window),
                                              static_cast<std::size_t>(c.mc_replicas), mc_seed, opt);
            Json j = to_json(rep);
            j["N"] = spec.n;
            j["theta"] = spec.theta;
            j["family"] = c.mc_family;
            emit("mc_errors.json", j.dump(1) + "\n");
        });
    }

    if (c.ising) {
        detail::run_stage("ising", [&] {
            IsingConfig ic;
            ic.agents = static_cast<std::size_t>(c.ising_agents);
            ic.sectors = static_cast<std::size_t>(c.ising_sectors);
            ic.g = c.ising_g;
            ic.steps = static_cast<std::size_t>(c.ising_steps);
            ic.field_schedule = parse_field_schedule(c.ising_field);
            ic.seed = ising_seed;
            const auto tr = simulate(ic);
            std::ostringstream t;
            write_trajectory_csv(tr, t);
            emit("ising.csv", t.str());
            const double s = static_cast<double>(ic.sectors);
            Json j{{"scan", to_json(phase_scan(ic.sectors, linspace(s / 2 - 1, s / 2 + 1, 81)))},
                   {"solution", to_json(mean_field_solve(ic.sectors, ic.g))}};
            emit("ising_phase.json", j.dump(1) + "\n");
        });
    }

    Json files = Json::object();
    for (const auto& f : res.files) files[f] = sha256_file(out / f);
    res.manifest = {{"tool", "mktphase"},
                    {"version", version},
                    {"libraries",
                     {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"boost", BOOST_LIB_VERSION}}},
                    {"config_hash", sha256_hex(c.source_text)},
                    {"input_hash", sha256_hex(input_key)},
                    {"seeds", {{"master", c.seed}, {"mc", mc_seed}, {"ising", ising_seed}}},
                    {"window", {{"T", length}, {"step", step}, {"count", spectra.size()}}},
                    {"panel", {{"stocks", rp.stocks()}, {"days", rp.days()}}},
                    {"files", files}};
    detail::write_text(out / "manifest.json", res.manifest.dump(1) + "\n");
    res.files.push_back("manifest.json");
    return res;
}

} // namespace mktphase
