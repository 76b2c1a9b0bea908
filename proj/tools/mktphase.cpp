// mktphase command line. Exit codes: 0 ok, 1 invalid input, 2 compute failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mktphase/ingest.hpp"
#include "mktphase/ising.hpp"
#include "mktphase/mean_field.hpp"
#include "mktphase/pipeline.hpp"
#include "mktphase/report.hpp"
#include "mktphase/sector_risk.hpp"
#include "mktphase/spectral.hpp"
#include "mktphase/svm.hpp"
#include "mktphase/synthetic.hpp"
#include "mktphase/tail_fit.hpp"

using namespace mktphase;
namespace fs = std::filesystem;

namespace {

struct PanelArgs {
    std::string prices, volumes, sectors;

    void add(CLI::App* app, bool need_extras = false)
    {
        app->add_option("--prices", prices, "CSV date,ticker,close")->required()->check(CLI::ExistingFile);
        auto* v = app->add_option("--volumes", volumes, "CSV date,ticker,volume")->check(CLI::ExistingFile);
        auto* s = app->add_option("--sectors", sectors, "CSV ticker,sector")->check(CLI::ExistingFile);
        if (need_extras) {
            v->required();
            s->required();
        }
    }
    PricePanel load() const
    {
        std::optional<fs::path> v, s;
        if (!volumes.empty()) v = volumes;
        if (!sectors.empty()) s = sectors;
        auto panel = load_panel(prices, v, s);
        for (const auto& d : panel.dropped) std::cerr << "dropped " << d.ticker << ": " << d.reason << '\n';
        return panel;
    }
};

struct Output {
    std::string path;
    void add(CLI::App* app, const char* what) { app->add_option("--out", path, std::string(what) + " (default stdout)"); }
    void write(const std::string& text) const
    {
        if (path.empty()) {
            std::cout << text;
            return;
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + path);
        out << text;
    }
};

std::vector<double> read_numbers(const std::string& path)
{
    const auto text = read_file(path);
    std::vector<double> out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        try {
            return Json::parse(text).get<std::vector<double>>();
        } catch (const Json::exception& e) {
            throw ValidationError(path + ": " + e.what());
        }
    }
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = std::string(detail::trim(line));
        if (t.empty() || t[0] == '#') continue;
        out.push_back(detail::parse_number(t, path + ":" + std::to_string(line_no)));
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Market-mode spectra, sector risk, tail fits and agent-model phase tools"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load a panel and dump normalized log returns as wide CSV");
    PanelArgs ingest_panel;
    Output ingest_out;
    ingest_panel.add(ingest);
    ingest_out.add(ingest, "returns CSV");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic price/volume/sector panel");
    std::size_t synth_n = 78, synth_days = 3691;
    double synth_theta = 0.26;
    std::string synth_family = "lognormal", synth_dir;
    std::uint64_t synth_seed = 1;
    synth->add_option("--n", synth_n, "stocks")->capture_default_str();
    synth->add_option("--days", synth_days, "return days T0")->capture_default_str();
    synth->add_option("--theta", synth_theta, "market share of variance")->capture_default_str();
    synth->add_option("--gamma1-dist", synth_family, "lognormal|laplace|normal|constant")->capture_default_str();
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("--out-dir", synth_dir, "directory for prices.csv, volumes.csv, sectors.csv")->required();

    // spectrum / betas
    std::size_t win_t = 1000, win_step = 250;
    auto add_window = [&](CLI::App* sub) {
        sub->add_option("--t", win_t, "window length T")->capture_default_str();
        sub->add_option("--step", win_step, "days between window centers")->capture_default_str();
    };
    auto* spectrum = app.add_subcommand("spectrum", "per-window leading eigenpair and bulk as JSON");
    PanelArgs spectrum_panel;
    Output spectrum_out;
    bool spectrum_market = false;
    spectrum_panel.add(spectrum);
    add_window(spectrum);
    spectrum_out.add(spectrum, "JSON");
    spectrum->add_flag("--market-return", spectrum_market, "include r_M(tau) per window");

    auto* betas = app.add_subcommand("betas", "long-format CSV date,ticker,beta");
    PanelArgs betas_panel;
    Output betas_out;
    betas_panel.add(betas);
    add_window(betas);
    betas_out.add(betas, "CSV");

    // min-window
    auto* minwin = app.add_subcommand("min-window", "smallest window length with all betas positive");
    PanelArgs minwin_panel;
    Output minwin_out;
    std::vector<std::size_t> candidates{250, 500, 750, 1000, 1250, 1500};
    minwin_panel.add(minwin);
    minwin->add_option("--candidates", candidates, "ascending window lengths")->delimiter(',')->capture_default_str();
    minwin->add_option("--step", win_step)->capture_default_str();
    minwin_out.add(minwin, "JSON");

    // risk
    auto* risk = app.add_subcommand("risk", "sector risk measure CSV center_date,sector,R");
    PanelArgs risk_panel;
    Output risk_out;
    std::string merge_file, events_file;
    bool currency = false;
    double threshold = 0.3;
    risk_panel.add(risk, true);
    add_window(risk);
    risk->add_option("--merge", merge_file, "CSV from_sector,to_sector")->check(CLI::ExistingFile);
    risk->add_flag("--currency-volume", currency, "weight by shares x close instead of shares");
    risk->add_option("--threshold", threshold, "dominance threshold for transitions")->capture_default_str();
    risk->add_option("--events", events_file, "write detected transitions as JSON");
    risk_out.add(risk, "CSV");

    // tailfit
    auto* tailfit = app.add_subcommand("tailfit", "Pareto-Feller tail index per window");
    std::string window_file, hist_out;
    double tail_scale = 1.0;
    std::size_t tail_bins = 20, hist_bins = 30;
    Output tailfit_out;
    tailfit->add_option("--window-file", window_file,
                        "spectrum JSON (uses market_return) or one number per line")
        ->required()
        ->check(CLI::ExistingFile);
    tailfit->add_option("--bins", tail_bins, "chi-square bins")->capture_default_str();
    tailfit->add_option("--hist-out", hist_out, "histogram + fitted pdf CSV");
    tailfit->add_option("--hist-bins", hist_bins)->capture_default_str();
    tailfit->add_option("--tail-scale", tail_scale, "multiply histogram rows with |r| > 1.5 (display only)")
        ->capture_default_str();
    tailfit_out.add(tailfit, "JSON");

    // mc-errors
    auto* mce = app.add_subcommand("mc-errors", "Monte Carlo 95% beta error bands");
    SvmSpec mc_spec;
    mc_spec.n = 100;
    std::string mc_family = "lognormal";
    std::size_t mc_t = 750, mc_replicas = 200;
    std::uint64_t mc_seed = 1;
    bool match_rank = false;
    Output mce_out;
    mce->add_option("--n", mc_spec.n, "stocks")->capture_default_str();
    mce->add_option("--t", mc_t, "window length")->capture_default_str();
    mce->add_option("--theta", mc_spec.theta)->capture_default_str();
    mce->add_option("--gamma1-dist", mc_family, "lognormal|laplace|normal|constant")->capture_default_str();
    mce->add_option("--replicas", mc_replicas)->capture_default_str();
    mce->add_option("--seed", mc_seed)->capture_default_str();
    mce->add_flag("--match-rank", match_rank, "match estimates to inputs by rank");
    mce_out.add(mce, "JSON");

    // mc-calibrate
    auto* mcc = app.add_subcommand("mc-calibrate", "fit the idiosyncratic beta mean to an empirical bulk");
    std::string bulk_file, cal_family = "lognormal";
    CalibrationSpec cal;
    std::uint64_t cal_seed = 1;
    Output mcc_out;
    mcc->add_option("--bulk-file", bulk_file, "bulk eigenvalues (JSON array or one per line), N-1 values")
        ->required()
        ->check(CLI::ExistingFile);
    mcc->add_option("--family", cal_family, "lognormal|laplace|normal|constant")->capture_default_str();
    mcc->add_option("--t", cal.window, "simulated window length (0 = population)")->capture_default_str();
    mcc->add_option("--theta", cal.theta)->capture_default_str();
    mcc->add_option("--replicas", cal.replicas, "simulated spectra per candidate")->capture_default_str();
    mcc->add_option("--seed", cal_seed)->capture_default_str();
    mcc->add_flag("--exclude-second", cal.exclude_second, "drop the largest bulk eigenvalue");
    mcc_out.add(mcc, "JSON");

    // ising-sim
    auto* isim = app.add_subcommand("ising-sim", "simulate the agent model; CSV step,m,R_plus,R_minus,R_neutral");
    IsingConfig ic;
    std::vector<std::string> fields;
    std::string init = "plus";
    Output isim_out;
    isim->add_option("--a", ic.agents, "agents")->capture_default_str();
    isim->add_option("--s", ic.sectors, "sectors (>= 3)")->capture_default_str();
    isim->add_option("--g", ic.g, "coupling")->capture_default_str();
    isim->add_option("--steps", ic.steps, "sweeps")->capture_default_str();
    isim->add_option("--field", fields, "pulse t0:t1:h (repeatable, inclusive)");
    isim->add_option("--seed", ic.seed)->capture_default_str();
    isim->add_option("--init", init, "plus|minus|random")->check(CLI::IsMember({"plus", "minus", "random"}))
        ->capture_default_str();
    isim_out.add(isim, "CSV");

    // ising-phase
    auto* iphase = app.add_subcommand("ising-phase", "mean-field critical couplings as JSON");
    std::size_t phase_s = 8;
    std::optional<double> g_min, g_max;
    std::size_t g_points = 81;
    Output iphase_out;
    iphase->add_option("--s", phase_s, "sectors")->capture_default_str();
    iphase->add_option("--g-min", g_min, "grid start (default S/2 - 1)");
    iphase->add_option("--g-max", g_max, "grid end (default S/2 + 1)");
    iphase->add_option("--points", g_points, "grid points")->capture_default_str();
    iphase_out.add(iphase, "JSON");

    // ising-free
    auto* ifree = app.add_subcommand("ising-free", "mean-field free energy curve CSV omega,free_energy");
    std::size_t free_s = 8, free_points = 301;
    double free_g = 3.82, free_h = 0.0;
    Output ifree_out;
    ifree->add_option("--s", free_s)->capture_default_str();
    ifree->add_option("--g", free_g)->capture_default_str();
    ifree->add_option("--field", free_h, "external field h")->capture_default_str();
    ifree->add_option("--points", free_points, "m0 grid points on [0, 1.5]")->capture_default_str();
    ifree_out.add(ifree, "CSV");

    // run / validate
    std::string config_path;
    auto* run = app.add_subcommand("run", "full pipeline from an INI config");
    run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    auto* validate = app.add_subcommand("validate", "check an INI config and list every violation");
    validate->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*ingest) {
            const auto rp = compute_returns(ingest_panel.load());
            std::ostringstream s;
            write_returns_csv(rp, s);
            ingest_out.write(s.str());
        } else if (*synth) {
            SvmSpec spec;
            spec.n = synth_n;
            spec.theta = synth_theta;
            spec.gamma1_family = parse_family(synth_family);
            const auto cfg = make_svm_config(spec, synth_seed);
            write_price_panel(synthetic_price_panel(cfg, synth_days, synth_seed), synth_dir);
        } else if (*spectrum || *betas) {
            const auto& pa = *spectrum ? spectrum_panel : betas_panel;
            const auto rp = compute_returns(pa.load());
            const auto spectra = rolling_spectra(rp, win_t, win_step, threads);
            if (spectra.empty()) throw ValidationError("no window of length " + std::to_string(win_t) + " fits");
            if (*spectrum) {
                Json arr = Json::array();
                for (const auto& s : spectra) arr.push_back(to_json(s, spectrum_market));
                spectrum_out.write(arr.dump(1) + "\n");
            } else {
                std::ostringstream s;
                write_betas_csv(spectra, rp.tickers, s);
                betas_out.write(s.str());
            }
        } else if (*minwin) {
            const auto rp = compute_returns(minwin_panel.load());
            const auto r = minimal_positive_window(rp, candidates, win_step, threads);
            Json scans = Json::array();
            for (const auto& s : r.scans)
                scans.push_back({{"T", s.length}, {"windows", s.windows}, {"violations", s.violations}});
            Json j{{"t_min", r.t_min ? Json(*r.t_min) : Json(nullptr)}, {"scans", scans}};
            minwin_out.write(j.dump(1) + "\n");
        } else if (*risk) {
            const auto rp = compute_returns(risk_panel.load());
            const auto spectra = rolling_spectra(rp, win_t, win_step, threads);
            const MergeMap merge = merge_file.empty() ? MergeMap{} : load_merge_map(merge_file);
            const auto rs = risk_measure(spectra, rp, merge, currency ? VolumeMeasure::currency : VolumeMeasure::shares);
            std::ostringstream s;
            write_risk_csv(rs, s);
            risk_out.write(s.str());
            if (!events_file.empty())
                Output{events_file}.write(to_json(transition_detector(rs, threshold)).dump(1) + "\n");
        } else if (*tailfit) {
            struct Sample {
                std::string center;
                std::vector<double> x;
            };
            std::vector<Sample> samples;
            const auto text = read_file(window_file);
            if (const auto p = text.find_first_not_of(" \t\r\n"); p != std::string::npos && text[p] == '[' &&
                                                                  text.find('{') != std::string::npos) {
                Json arr;
                try {
                    arr = Json::parse(text);
                } catch (const Json::exception& e) {
                    throw ValidationError(window_file + ": " + e.what());
                }
                for (const auto& j : arr) {
                    if (!j.contains("market_return"))
                        throw ValidationError(window_file + ": window lacks market_return (use spectrum --market-return)");
                    samples.push_back({j.value("center_date", std::string{}), j["market_return"].get<std::vector<double>>()});
                }
            } else {
                samples.push_back({"", read_numbers(window_file)});
            }
            TailFitOptions opt;
            opt.bins = tail_bins;
            Json arr = Json::array();
            std::ostringstream hist;
            hist << "center,abs_r,empirical,fitted,scale\n";
            for (const auto& s : samples) {
                const auto x = standardize(s.x);
                const auto fit = fit_alpha(x, opt);
                Json j = to_json(fit);
                j["center"] = s.center;
                arr.push_back(j);
                write_histogram_csv(pdf_histogram(x, fit, hist_bins, 6.0, tail_scale), hist, s.center.empty() ? "-" : s.center);
            }
            tailfit_out.write(arr.dump(1) + "\n");
            if (!hist_out.empty()) Output{hist_out}.write(hist.str());
        } else if (*mce) {
            mc_spec.gamma1_family = parse_family(mc_family);
            const auto cfg = make_svm_config(mc_spec, mc_seed);
            BandOptions opt;
            opt.match_by_rank = match_rank;
            opt.threads = threads;
            Json j = to_json(beta_error_bands(cfg, mc_t, mc_replicas, mc_seed, opt));
            j["N"] = mc_spec.n;
            j["theta"] = mc_spec.theta;
            j["family"] = mc_family;
            mce_out.write(j.dump(1) + "\n");
        } else if (*mcc) {
            const auto bulk = read_numbers(bulk_file);
            SvmSpec spec;
            spec.n = bulk.size() + 1;
            spec.theta = cal.theta;
            cal.gamma0 = make_svm_config(spec, cal_seed).gamma0;
            cal.family = parse_family(cal_family);
            cal.seed = cal_seed;
            cal.threads = threads;
            const auto r = calibrate_gamma0(bulk, cal);
            Json j{{"family", cal_family}, {"gamma0", r.gamma0}, {"p", r.p_value}, {"ks", r.statistic},
                   {"at_bound", r.at_bound}, {"evaluations", r.evaluations}};
            mcc_out.write(j.dump(1) + "\n");
        } else if (*isim) {
            for (const auto& f : fields) {
                const auto pulses = parse_field_schedule(f);
                ic.field_schedule.insert(ic.field_schedule.end(), pulses.begin(), pulses.end());
            }
            ic.init = init == "minus" ? IsingInit::all_minus : init == "random" ? IsingInit::random : IsingInit::all_plus;
            std::ostringstream s;
            write_trajectory_csv(simulate(ic), s);
            isim_out.write(s.str());
        } else if (*iphase) {
            const double half = static_cast<double>(phase_s) / 2.0;
            const auto grid = linspace(g_min.value_or(half - 1.0), g_max.value_or(half + 1.0), g_points);
            iphase_out.write(to_json(phase_scan(phase_s, grid)).dump(1) + "\n");
        } else if (*ifree) {
            std::ostringstream s;
            write_free_energy_csv(free_energy_curve(free_s, free_g, linspace(0.0, 1.5, free_points), free_h), s);
            ifree_out.write(s.str());
        } else if (*run) {
            auto cfg = load_run_config(config_path);
            if (threads != 0) cfg.threads = threads;
            const auto r = run_pipeline(cfg);
            if (r.spectra_from_cache) std::cerr << "spectra: reused cache\n";
            for (const auto& f : r.files) std::cout << (cfg.output_dir / f).string() << '\n';
        } else if (*validate) {
            const auto problems = validate_config(load_run_config(config_path));
            for (const auto& p : problems) std::cout << p << '\n';
            if (!problems.empty()) return 1;
            std::cout << "ok\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ComputeError& e) {
        std::cerr << "compute failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "compute failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
