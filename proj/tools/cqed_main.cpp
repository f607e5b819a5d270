// Command line front end: synthetic data generation, model fits, and a
// self-check of the closed-form reflection against the master-equation
// oracle.
//
// Configuration precedence, lowest to highest: built-in defaults, --config
// files in order, --set overrides, dedicated flags (--seed, --tolerance).
// Every output file embeds the effective configuration as config.* metadata,
// so a run can be reproduced byte for byte from its own output.
//
// Exit codes: 0 success, 2 usage error, 3 bad input or configuration,
// 4 fit did not converge (outputs are still written), 5 verification failed.

#include <CLI11.hpp>
#include <json.hpp>

#include <cqed/core.hpp>
#include <cqed/g2.hpp>
#include <cqed/io.hpp>
#include <cqed/lindblad.hpp>
#include <cqed/spectra.hpp>
#include <cqed/tcspc.hpp>
#include <cqed/tuning.hpp>
#include <cqed/version.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using cqed::io::Config;
using nlohmann::ordered_json;

struct CommonOpts {
    std::vector<std::string> config_files;
    std::vector<std::string> sets;
    std::string out_dir = ".";
    std::string seed;  // raw text; wins over the seed config key when set
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_files,
                    "key=value configuration file, repeatable, later files win");
    cmd->add_option("--set", o.sets,
                    "override one configuration key as key=value, repeatable");
    cmd->add_option("--seed", o.seed, "random seed, wins over the config files");
    cmd->add_option("--out", o.out_dir, "output directory, created if missing")
        ->capture_default_str();
}

// Unknown keys are rejected so a typo cannot silently fall back to a default.
Config build_config(const std::map<std::string, std::string>& defaults,
                    const CommonOpts& o) {
    Config cfg;
    for (const auto& [k, v] : defaults) cfg.set(k, v);
    auto apply = [&](const std::string& key, const std::string& value,
                     const std::string& origin) {
        if (defaults.find(key) == defaults.end())
            throw std::invalid_argument(origin + ": unknown configuration key '" +
                                        key + "'");
        cfg.set(key, value);
    };
    for (const auto& path : o.config_files) {
        const Config file = Config::parse_file(path);
        for (const auto& [k, v] : file.values) apply(k, v, path);
    }
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + s +
                                        "'");
        apply(s.substr(0, eq), s.substr(eq + 1), "--set");
    }
    if (!o.seed.empty()) apply("seed", o.seed, "--seed");
    return cfg;
}

std::map<std::string, std::string> config_meta(const Config& cfg) {
    std::map<std::string, std::string> meta;
    for (const auto& [k, v] : cfg.values) meta["config." + k] = v;
    return meta;
}

std::string out_path(const CommonOpts& o, const char* name) {
    fs::create_directories(o.out_dir);
    return (fs::path(o.out_dir) / name).string();
}

std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 2 || !(hi > lo))
        throw std::invalid_argument(
            "grid: need at least 2 points and max > min");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return g;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

void write_residuals(const std::string& path, const Config& cfg,
                     const std::string& axis_name,
                     const std::vector<double>& axis,
                     const std::vector<double>& data,
                     const std::vector<double>& model) {
    auto f = cqed::io::detail::open_out(path);
    cqed::io::detail::write_meta(f, config_meta(cfg));
    f << "# kind=residuals\n";
    f << axis_name << ",data,model,residual\n";
    for (std::size_t i = 0; i < axis.size(); ++i)
        f << cqed::io::format_double(axis[i]) << ","
          << cqed::io::format_double(data[i]) << ","
          << cqed::io::format_double(model[i]) << ","
          << cqed::io::format_double(data[i] - model[i]) << "\n";
}

void emit_summary(const CommonOpts& o, const std::string& text) {
    std::cout << text;
    auto f = cqed::io::detail::open_out(out_path(o, "summary.txt"));
    f << text;
}

std::string fit_header(const cqed::fit::FitReport& rep) {
    std::ostringstream s;
    s << "  converged " << (rep.converged ? "yes" : "NO") << " in "
      << rep.n_iter << " iterations (chi2 " << fmt(rep.chi2)
      << ", reduced chi2 " << fmt(rep.reduced_chi2) << ", " << rep.n_data
      << " points, " << rep.n_free << " free)\n";
    return s.str();
}

std::string param_lines(const cqed::fit::FitReport& rep) {
    std::size_t width = 0;
    for (const auto& n : rep.param_names) width = std::max(width, n.size());
    std::ostringstream s;
    for (std::size_t i = 0; i < rep.param_names.size(); ++i) {
        s << "  " << rep.param_names[i]
          << std::string(width - rep.param_names[i].size(), ' ') << " = "
          << fmt(rep.values[i]);
        if (rep.one_sigma[i] > 0.0)
            s << " +/- " << fmt(rep.one_sigma[i]);
        else
            s << " (fixed)";
        s << "\n";
    }
    for (const auto& note : rep.notes) s << "  note: " << note << "\n";
    return s.str();
}

// ---------------------------------------------------------------- simulate

const std::map<std::string, std::string> kSimSpectrumDefaults = {
    {"g", "9.7"},          {"kappa", "24.1"},      {"gamma", "1.9"},
    {"omega_c", "0"},      {"omega_qd", "0"},      {"eta", "0.96"},
    {"base_a", "1"},       {"base_b", "0"},        {"omega_ref", "0"},
    {"omega_min", "-120.5"}, {"omega_max", "120.5"}, {"n_points", "201"},
    {"noise", "0.01"},     {"seed", "42"},
};

int run_simulate_spectrum(const CommonOpts& o) {
    const Config cfg = build_config(kSimSpectrumDefaults, o);
    cqed::SystemParams p;
    p.g = cfg.get_double("g", 0);
    p.kappa = cfg.get_double("kappa", 0);
    p.gamma = cfg.get_double("gamma", 0);
    p.omega_c = cfg.get_double("omega_c", 0);
    p.omega_qd = cfg.get_double("omega_qd", 0);
    cqed::OpticalNuisance nu;
    nu.eta = cfg.get_double("eta", 1);
    nu.base_a = cfg.get_double("base_a", 1);
    nu.base_b = cfg.get_double("base_b", 0);
    const double omega_ref = cfg.get_double("omega_ref", 0);
    const auto omega =
        linspace(cfg.get_double("omega_min", 0), cfg.get_double("omega_max", 0),
                 cfg.get_int("n_points", 0));
    const double noise = cfg.get_double("noise", 0);

    cqed::io::SpectrumFile f;
    f.kind = cqed::io::SpectrumFile::Kind::reflectivity;
    f.omega_ref_uev = omega_ref;
    f.energy_uev = omega;
    f.value = cqed::spectra::simulate_spectrum_values(
        p, nu, omega, omega_ref, noise, cfg.get_u64("seed", 0));
    if (noise > 0.0) f.sigma.assign(omega.size(), noise);
    f.meta = config_meta(cfg);
    const std::string path = out_path(o, "spectrum.csv");
    cqed::io::write_spectrum(path, f);
    std::cout << "wrote " << path << " (" << omega.size() << " points)\n";
    return 0;
}

const std::map<std::string, std::string> kSimDecayDefaults = {
    {"model", "mono"},        {"tau_ps", "137"},
    {"tau_fast_ps", "60"},    {"tau_slow_ps", "500"},
    {"a_fast", "0.7"},        {"a_slow", "0.3"},
    {"amplitude", "0.95"},    {"a_bg", "0.05"},
    {"tau_bg_ps", "2000"},    {"offset", "0"},
    {"total_counts", "1000000"}, {"n_bins", "1024"},
    {"bin_width_ps", "4"},    {"t_start_ps", "0"},
    {"irf_fwhm_ps", "150"},   {"irf_t0_ps", "400"},
    {"seed", "42"},
};

int run_simulate_decay(const CommonOpts& o) {
    const Config cfg = build_config(kSimDecayDefaults, o);
    const std::string model = cfg.get("model", "mono");
    cqed::tcspc::DecayModel m;
    if (model == "mono")
        m = cqed::tcspc::DecayModel::mono(1.0, cfg.get_double("tau_ps", 0),
                                          cfg.get_double("offset", 0));
    else if (model == "biexp")
        m = cqed::tcspc::DecayModel::biexp(
            cfg.get_double("a_fast", 0), cfg.get_double("tau_fast_ps", 0),
            cfg.get_double("a_slow", 0), cfg.get_double("tau_slow_ps", 0),
            cfg.get_double("offset", 0));
    else if (model == "mono_bg")
        m = cqed::tcspc::DecayModel::with_background(
            cfg.get_double("amplitude", 0), cfg.get_double("tau_ps", 0),
            cfg.get_double("a_bg", 0), cfg.get_double("tau_bg_ps", 0),
            cfg.get_double("offset", 0));
    else
        throw std::invalid_argument(
            "simulate decay: model must be mono, biexp, or mono_bg, got '" +
            model + "'");

    const cqed::tcspc::HistogramGrid grid{cfg.get_int("n_bins", 0),
                                          cfg.get_double("bin_width_ps", 0),
                                          cfg.get_double("t_start_ps", 0)};
    const auto irf = cqed::tcspc::InstrumentResponse::gaussian(
        cfg.get_double("irf_fwhm_ps", 0), cfg.get_double("irf_t0_ps", 0));
    const auto hist = cqed::tcspc::simulate_decay(
        m, irf, grid, cfg.get_u64("total_counts", 0), cfg.get_u64("seed", 0));
    const std::string path = out_path(o, "decay.csv");
    cqed::io::write_decay(path, hist, config_meta(cfg));
    std::cout << "wrote " << path << " (" << hist.counts.size() << " bins, "
              << hist.total_counts << " counts)\n";
    return 0;
}

const std::map<std::string, std::string> kSimG2Defaults = {
    {"lifetime_ps", "137"},      {"g2_target", "0"},
    {"background", "0"},         {"rep_rate_hz", "80000000"},
    {"n_coincidences", "100000"}, {"n_side_peaks", "6"},
    {"bins_per_period", "250"},  {"seed", "42"},
};

int run_simulate_g2(const CommonOpts& o) {
    const Config cfg = build_config(kSimG2Defaults, o);
    cqed::g2::PulsedEmitter em;
    em.lifetime_ps = cfg.get_double("lifetime_ps", 0);
    em.g2_zero_target = cfg.get_double("g2_target", 0);
    em.background_fraction = cfg.get_double("background", 0);
    const auto res = cqed::g2::simulate_g2(
        em, cfg.get_double("rep_rate_hz", 0), cfg.get_u64("n_coincidences", 0),
        cfg.get_u64("seed", 0), cfg.get_int("n_side_peaks", 0),
        cfg.get_int("bins_per_period", 0));
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    const std::string path = out_path(o, "g2.csv");
    cqed::io::write_g2(path, res.hist, config_meta(cfg));
    std::cout << "wrote " << path << " (" << res.hist.n_bins() << " bins)\n";
    return 0;
}

const std::map<std::string, std::string> kSimBiasMapDefaults = {
    {"stark_e0_uev", "1301400"},      {"stark_slope_uev_per_v", "400"},
    {"stark_curvature_uev_per_v2", "-80"}, {"stark_v_ref", "0"},
    {"neutral_lo_v", "-0.2"},         {"charge_threshold_v", "0.3"},
    {"charged_hi_v", "0.65"},         {"charge_shift_uev", "-6000"},
    {"mode_energies_uev", "1301460"}, {"mode_kappas_uev", "12"},
    {"bias_min_v", "-0.2"},           {"bias_max_v", "0.64"},
    {"n_bias", "85"},                 {"energy_min_uev", "1295200"},
    {"energy_max_uev", "1301800"},    {"n_energy", "166"},
    {"linewidth_uev", "25"},          {"boost", "4"},
    {"seed", "42"},
};

int run_simulate_biasmap(const CommonOpts& o) {
    const Config cfg = build_config(kSimBiasMapDefaults, o);
    cqed::tuning::ChargePlateauModel model;
    model.stark = {cfg.get_double("stark_e0_uev", 0),
                   cfg.get_double("stark_slope_uev_per_v", 0),
                   cfg.get_double("stark_curvature_uev_per_v2", 0),
                   cfg.get_double("stark_v_ref", 0)};
    model.plateaus = {{"neutral", cfg.get_double("neutral_lo_v", 0),
                       cfg.get_double("charge_threshold_v", 0), 0.0},
                      {"charged", cfg.get_double("charge_threshold_v", 0),
                       cfg.get_double("charged_hi_v", 0),
                       cfg.get_double("charge_shift_uev", 0)}};

    const auto energies = cqed::io::detail::parse_grid(
        cfg.get("mode_energies_uev", ""), "<config mode_energies_uev>");
    auto kappas = cqed::io::detail::parse_grid(cfg.get("mode_kappas_uev", ""),
                                               "<config mode_kappas_uev>");
    if (kappas.size() == 1 && energies.size() > 1)
        kappas.assign(energies.size(), kappas[0]);
    if (kappas.size() != energies.size())
        throw std::invalid_argument(
            "simulate biasmap: mode_kappas_uev must have one entry or one per "
            "mode energy");
    std::vector<cqed::tuning::CavityMode> modes;
    for (std::size_t i = 0; i < energies.size(); ++i)
        modes.push_back(
            {"M" + std::to_string(i + 1), energies[i], kappas[i]});

    const auto bias = linspace(cfg.get_double("bias_min_v", 0),
                               cfg.get_double("bias_max_v", 0),
                               cfg.get_int("n_bias", 0));
    const auto energy = linspace(cfg.get_double("energy_min_uev", 0),
                                 cfg.get_double("energy_max_uev", 0),
                                 cfg.get_int("n_energy", 0));
    const auto map = cqed::tuning::simulate_bias_map(
        model, modes, bias, energy, cfg.get_double("linewidth_uev", 0),
        cfg.get_double("boost", 0));

    cqed::io::GridMapFile g;
    g.row_key = "bias_v";
    g.col_key = "energy_uev";
    g.rows = map.bias_v;
    g.cols = map.energy_uev;
    g.values = map.intensity;
    g.meta = config_meta(cfg);
    const std::string path = out_path(o, "biasmap.csv");
    cqed::io::write_grid_map(path, g);
    std::cout << "wrote " << path << " (" << g.rows.size() << " x "
              << g.cols.size() << ")\n";
    for (const auto& c : cqed::tuning::find_resonance_crossings(model, modes))
        std::cout << "crossing: mode " << c.mode_label << " in plateau "
                  << c.plateau_label << " at bias " << fmt(c.bias_v) << " V\n";
    return 0;
}

const std::map<std::string, std::string> kSimSpatialDefaults = {
    {"center_x_um", "0"}, {"center_y_um", "0"}, {"waist_um", "2.2"},
    {"depth", "0.6"},     {"floor", "1"},       {"noise", "0.005"},
    {"x_min_um", "-4"},   {"x_max_um", "4"},    {"n_x", "41"},
    {"y_min_um", "-4"},   {"y_max_um", "4"},    {"n_y", "41"},
    {"seed", "42"},
};

int run_simulate_spatialmap(const CommonOpts& o) {
    const Config cfg = build_config(kSimSpatialDefaults, o);
    cqed::spectra::SpatialMapConfig sc;
    sc.center_x_um = cfg.get_double("center_x_um", 0);
    sc.center_y_um = cfg.get_double("center_y_um", 0);
    sc.waist_um = cfg.get_double("waist_um", 0);
    sc.depth = cfg.get_double("depth", 0);
    sc.floor = cfg.get_double("floor", 0);
    sc.noise_sigma = cfg.get_double("noise", 0);
    const auto x = linspace(cfg.get_double("x_min_um", 0),
                            cfg.get_double("x_max_um", 0), cfg.get_int("n_x", 0));
    const auto y = linspace(cfg.get_double("y_min_um", 0),
                            cfg.get_double("y_max_um", 0), cfg.get_int("n_y", 0));
    const auto map =
        cqed::spectra::simulate_spatial_map(sc, x, y, cfg.get_u64("seed", 0));

    cqed::io::GridMapFile g;
    g.row_key = "y_um";
    g.col_key = "x_um";
    g.rows = map.y_um;
    g.cols = map.x_um;
    g.values = map.value;
    g.meta = config_meta(cfg);
    const std::string path = out_path(o, "spatialmap.csv");
    cqed::io::write_grid_map(path, g);
    std::cout << "wrote " << path << " (" << g.rows.size() << " x "
              << g.cols.size() << ")\n";
    return 0;
}

// --------------------------------------------------------------------- fit

const std::map<std::string, std::string> kFitSpectrumDefaults = {
    {"empty_cavity", "0"},
    {"photon_energy_uev", "1301400"},
    {"restarts", "0"},
    {"seed", "0"},
};

int run_fit_spectrum(const CommonOpts& o, const std::string& input) {
    const Config cfg = build_config(kFitSpectrumDefaults, o);
    const auto f = cqed::io::read_spectrum(input);
    if (f.kind != cqed::io::SpectrumFile::Kind::reflectivity)
        throw std::invalid_argument(
            "fit spectrum: input kind must be reflectivity");

    cqed::spectra::SpectrumFitOptions opts;
    opts.empty_cavity = cfg.get_bool("empty_cavity", false);
    opts.photon_energy_uev = cfg.get_double("photon_energy_uev", 0);
    opts.engine.restarts = cfg.get_int("restarts", 0);
    const auto seed = cfg.get_u64("seed", 0);
    if (seed != 0) opts.engine.seed = seed;
    const auto res = cqed::spectra::fit_spectrum(f.energy_uev, f.value, f.sigma,
                                                 opts);

    ordered_json derived;
    derived["omega_ref_uev"] = res.omega_ref_uev;
    derived["ratio_g_kappa"] = res.regime.ratio_g_kappa;
    derived["regime"] = cqed::to_string(res.regime.regime);
    derived["cooperativity"] = res.regime.cooperativity;
    derived["q_factor"] = res.q_factor;
    derived["purcell_estimate"] = res.purcell_estimate;
    derived["eta"] = res.nuisance.eta;
    derived["empty_cavity"] = res.empty_cavity;
    derived["photon_energy_uev"] = opts.photon_energy_uev;
    cqed::io::write_json(out_path(o, "report.json"),
                         cqed::io::fit_report_json(res.report, derived, cfg,
                                                   seed));

    std::vector<double> model(f.energy_uev.size());
    for (std::size_t i = 0; i < model.size(); ++i)
        model[i] = cqed::observed_reflectivity(f.energy_uev[i], res.params,
                                               res.nuisance, res.omega_ref_uev);
    write_residuals(out_path(o, "residuals.csv"), cfg, "energy_uev",
                    f.energy_uev, f.value, model);

    std::ostringstream s;
    s << "reflection spectrum fit: " << input << "\n";
    s << fit_header(res.report);
    s << param_lines(res.report);
    s << "  g/kappa = " << fmt(res.regime.ratio_g_kappa) << ", regime "
      << cqed::to_string(res.regime.regime) << "\n";
    s << "  cooperativity C = " << fmt(res.regime.cooperativity)
      << ", Purcell estimate 1 + C = " << fmt(res.purcell_estimate) << "\n";
    s << "  Q = " << fmt(res.q_factor) << " at photon energy "
      << fmt(opts.photon_energy_uev) << " ueV\n";
    s << "  mode matching eta = " << fmt(res.nuisance.eta) << "\n";
    emit_summary(o, s.str());
    return res.report.converged ? 0 : 4;
}

const std::map<std::string, std::string> kFitLifetimeDefaults = {
    {"model", "mono"},      {"weighting", "neyman"},
    {"irf_fwhm_ps", "150"}, {"irf_t0_ps", "auto"},
    {"tau_bulk_ps", "0"},   {"restarts", "0"},
    {"seed", "0"},
};

int run_fit_lifetime(const CommonOpts& o, const std::string& input) {
    const Config cfg = build_config(kFitLifetimeDefaults, o);
    const auto hist = cqed::io::read_decay(input);

    const std::string model = cfg.get("model", "mono");
    cqed::tcspc::DecayKind kind;
    if (model == "mono")
        kind = cqed::tcspc::DecayKind::mono;
    else if (model == "biexp")
        kind = cqed::tcspc::DecayKind::biexp;
    else if (model == "mono_bg")
        kind = cqed::tcspc::DecayKind::mono_plus_background_decay;
    else
        throw std::invalid_argument(
            "fit lifetime: model must be mono, biexp, or mono_bg, got '" +
            model + "'");

    const std::string wtext = cfg.get("weighting", "neyman");
    cqed::tcspc::LifetimeFitOptions opts;
    if (wtext == "neyman")
        opts.weighting = cqed::fit::Weighting::poisson_neyman;
    else if (wtext == "mle")
        opts.weighting = cqed::fit::Weighting::poisson_mle;
    else if (wtext == "uniform")
        opts.weighting = cqed::fit::Weighting::uniform;
    else
        throw std::invalid_argument(
            "fit lifetime: weighting must be neyman, mle, or uniform, got '" +
            wtext + "'");
    opts.engine.restarts = cfg.get_int("restarts", 0);
    const auto seed = cfg.get_u64("seed", 0);
    if (seed != 0) opts.engine.seed = seed;

    double t0 = 0.0;
    if (cfg.get("irf_t0_ps", "auto") == "auto") {
        const auto it =
            std::max_element(hist.counts.begin(), hist.counts.end());
        const auto peak =
            static_cast<double>(it - hist.counts.begin());
        t0 = hist.t_start_ps + (peak + 0.5) * hist.bin_width_ps;
    } else {
        t0 = cfg.get_double("irf_t0_ps", 0);
    }
    const auto irf = cqed::tcspc::InstrumentResponse::gaussian(
        cfg.get_double("irf_fwhm_ps", 0), t0);

    const auto rep = cqed::tcspc::fit_lifetime(hist, irf, kind, opts);

    ordered_json derived;
    derived["model"] = model;
    derived["weighting"] = wtext;
    derived["irf_fwhm_ps"] = irf.fwhm_ps;
    derived["irf_t0_seed_ps"] = t0;
    const double tau_bulk = cfg.get_double("tau_bulk_ps", 0);
    for (std::size_t i = 0; i < rep.param_names.size(); ++i)
        if (rep.param_names[i] == "tau_ps" && tau_bulk > 0.0)
            derived["purcell_factor"] =
                cqed::purcell_factor(tau_bulk, rep.values[i]);
    cqed::io::write_json(out_path(o, "report.json"),
                         cqed::io::fit_report_json(rep, derived, cfg, seed));

    // rebuild the fitted curve exactly as the fit evaluated it
    cqed::tcspc::DecayModel m;
    cqed::tcspc::InstrumentResponse shifted = irf;
    const auto& v = rep.values;
    if (kind == cqed::tcspc::DecayKind::mono) {
        m = cqed::tcspc::DecayModel::mono(v[0], v[1], v[2]);
        shifted.t0_ps = v[3];
    } else {
        m.kind = cqed::tcspc::DecayKind::mono_plus_background_decay;
        m.amplitudes = {v[0], v[2]};
        m.lifetimes_ps = {v[1], v[3]};
        m.offset = v[4];
        shifted.t0_ps = v[5];
    }
    const auto mu = cqed::tcspc::expected_counts(m, shifted, hist.grid());
    std::vector<double> centers(hist.counts.size()), data(hist.counts.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        centers[i] =
            hist.t_start_ps + (static_cast<double>(i) + 0.5) * hist.bin_width_ps;
        data[i] = static_cast<double>(hist.counts[i]);
    }
    write_residuals(out_path(o, "residuals.csv"), cfg, "t_ps", centers, data,
                    mu);

    std::ostringstream s;
    s << "decay lifetime fit: " << input << " (model " << model << ", "
      << wtext << " weighting)\n";
    s << fit_header(rep);
    s << param_lines(rep);
    if (derived.contains("purcell_factor"))
        s << "  Purcell factor tau_bulk/tau = "
          << fmt(double(derived["purcell_factor"])) << " (tau_bulk "
          << fmt(tau_bulk) << " ps)\n";
    emit_summary(o, s.str());
    return rep.converged ? 0 : 4;
}

const std::map<std::string, std::string> kFitG2Defaults = {
    {"seed", "0"},
};

int run_fit_g2(const CommonOpts& o, const std::string& input) {
    const Config cfg = build_config(kFitG2Defaults, o);
    const auto hist = cqed::io::read_g2(input);
    const auto est = cqed::g2::estimate_g2_zero(hist);

    cqed::fit::FitReport rep;
    rep.param_names = {"g2_zero"};
    rep.values = {est.g2_zero};
    rep.one_sigma = {est.sigma};
    rep.covariance = Eigen::MatrixXd::Constant(1, 1, est.sigma * est.sigma);
    rep.converged = true;
    rep.condition_number = 1.0;
    rep.n_data = hist.n_bins();
    rep.n_free = 1;
    if (est.overlap_warning)
        rep.notes.push_back(
            "side peaks overlap; the area ratio is biased upward");

    ordered_json derived;
    derived["n_side_peaks"] = est.n_side_peaks;
    derived["central_area"] = est.central_area;
    derived["side_mean"] = est.side_mean;
    derived["side_areas"] = est.side_areas;
    derived["tail_lifetime_ns"] = est.tail_lifetime_ns;
    derived["overlap_warning"] = est.overlap_warning;
    derived["single_photon"] = est.g2_zero < 0.5;
    const auto seed = cfg.get_u64("seed", 0);
    cqed::io::write_json(out_path(o, "report.json"),
                         cqed::io::fit_report_json(rep, derived, cfg, seed));

    std::vector<double> idx(est.side_areas.size()),
        mean(est.side_areas.size(), est.side_mean);
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = static_cast<double>(i + 1);
    write_residuals(out_path(o, "residuals.csv"), cfg, "side_peak", idx,
                    est.side_areas, mean);

    std::ostringstream s;
    s << "g2(0) area-ratio estimate: " << input << "\n";
    s << "  g2(0) = " << fmt(est.g2_zero) << " +/- " << fmt(est.sigma) << "\n";
    s << "  central window area " << fmt(est.central_area)
      << " counts, mean side-peak area " << fmt(est.side_mean) << " over "
      << est.n_side_peaks << " peaks\n";
    s << "  side-peak tail lifetime " << fmt(est.tail_lifetime_ns) << " ns\n";
    s << "  single-photon criterion g2(0) < 0.5: "
      << (est.g2_zero < 0.5 ? "satisfied" : "NOT satisfied") << "\n";
    if (est.overlap_warning)
        s << "  warning: side peaks overlap; the estimate is biased upward\n";
    emit_summary(o, s.str());
    return 0;
}

const std::map<std::string, std::string> kFitPurcellDefaults = {
    {"kappa_uev", ""},
    {"restarts", "0"},
    {"seed", "0"},
};

int run_fit_purcell(const CommonOpts& o, const std::string& input) {
    const Config cfg = build_config(kFitPurcellDefaults, o);
    if (cfg.get("kappa_uev", "").empty())
        throw std::invalid_argument(
            "fit purcell-dip: set kappa_uev to the mode width from the "
            "reflection fit");
    const double kappa = cfg.get_double("kappa_uev", 0);
    const auto scan = cqed::io::read_lifetime_scan(input);

    cqed::spectra::PurcellDipOptions opts;
    opts.engine.restarts = cfg.get_int("restarts", 0);
    const auto seed = cfg.get_u64("seed", 0);
    if (seed != 0) opts.engine.seed = seed;
    const auto res = cqed::spectra::fit_purcell_dip(
        scan.energy_uev, scan.lifetime_ps, scan.sigma_ps, kappa, opts);

    ordered_json derived;
    derived["tau_off_ps"] = res.tau_off_ps;
    derived["tau_on_ps"] = res.tau_on_ps;
    derived["e_mode_1_uev"] = res.e_mode_1_uev;
    derived["e_mode_2_uev"] = res.e_mode_2_uev;
    derived["mode_splitting_uev"] = res.e_mode_2_uev - res.e_mode_1_uev;
    derived["kappa_uev"] = res.kappa_uev;
    derived["contrast"] = res.contrast;
    cqed::io::write_json(out_path(o, "report.json"),
                         cqed::io::fit_report_json(res.report, derived, cfg,
                                                   seed));

    cqed::TwoModeLifetimeModel lm;
    lm.tau_off_ps = res.tau_off_ps;
    lm.tau_on_h_ps = res.tau_on_ps;
    lm.tau_on_v_ps = res.tau_on_ps;
    lm.e_h_uev = res.e_mode_1_uev;
    lm.e_v_uev = res.e_mode_2_uev;
    lm.kappa_h_uev = res.kappa_uev;
    lm.kappa_v_uev = res.kappa_uev;
    std::vector<double> model(scan.energy_uev.size());
    for (std::size_t i = 0; i < model.size(); ++i)
        model[i] = lm.lifetime(scan.energy_uev[i]);
    write_residuals(out_path(o, "residuals.csv"), cfg, "energy_uev",
                    scan.energy_uev, scan.lifetime_ps, model);

    std::ostringstream s;
    s << "lifetime dip fit: " << input << "\n";
    s << fit_header(res.report);
    s << param_lines(res.report);
    s << "  modes at " << fmt(res.e_mode_1_uev) << " and "
      << fmt(res.e_mode_2_uev) << " ueV (splitting "
      << fmt(res.e_mode_2_uev - res.e_mode_1_uev) << " ueV, mode width "
      << fmt(res.kappa_uev) << " ueV held fixed)\n";
    s << "  lifetime contrast tau_off/tau_on = " << fmt(res.contrast) << "\n";
    emit_summary(o, s.str());
    return res.report.converged ? 0 : 4;
}

// ------------------------------------------------------------------ verify

const std::map<std::string, std::string> kVerifyDefaults = {
    {"tolerance", "0.001"},
    {"fock_cutoff", "3"},
    {"collapse_scale", "1"},
    {"seed", "0"},
};

int run_verify(const CommonOpts& o, const std::string& tol_flag,
               bool negative_control) {
    Config cfg = build_config(kVerifyDefaults, o);
    if (!tol_flag.empty()) cfg.set("tolerance", tol_flag);
    if (negative_control) cfg.set("collapse_scale", "0.8");
    const double tol = cfg.get_double("tolerance", 0);
    const double abs_tol = 1e-8;

    cqed::oracle::HilbertConfig hc;
    hc.fock_cutoff = cfg.get_int("fock_cutoff", 0);
    hc.collapse_scale = cfg.get_double("collapse_scale", 0);

    // canonical coupled benchmark point, probed across the full dip
    cqed::SystemParams p;
    p.g = 9.7;
    p.kappa = 24.1;
    p.gamma = 1.9;
    const auto grid = linspace(-5.0 * p.kappa, 5.0 * p.kappa, 201);
    double max_rel = 0.0;
    for (double w : grid) {
        const double rc = cqed::reflectance(w, p);
        const double ro = cqed::oracle::steady_state_reflectivity(p, hc, w);
        max_rel = std::max(max_rel, std::abs(ro - rc) / rc);
    }
    const bool pass_coupled = max_rel < tol;

    // decoupled limit, where the closed form is exact at resonance
    cqed::SystemParams p0 = p;
    p0.g = 0.0;
    const auto grid0 = linspace(-5.0 * p.kappa, 5.0 * p.kappa, 41);
    double max_abs = 0.0;
    for (double w : grid0) {
        const double rc = cqed::reflectance(w, p0);
        const double ro = cqed::oracle::steady_state_reflectivity(p0, hc, w);
        max_abs = std::max(max_abs, std::abs(ro - rc));
    }
    const bool pass_empty = max_abs < abs_tol;
    const bool pass = pass_coupled && pass_empty;

    std::ostringstream s;
    s << "closed-form reflection vs steady-state master equation (fock cutoff "
      << hc.fock_cutoff << ")\n";
    if (hc.collapse_scale != 1.0)
        s << "  negative control: cavity collapse rates scaled by "
          << fmt(hc.collapse_scale) << ", the checks must fail\n";
    s << "  coupled benchmark: 201 probe points in [" << fmt(grid.front())
      << ", " << fmt(grid.back()) << "] ueV\n";
    s << "    max relative deviation " << fmt_sci(max_rel) << ", tolerance "
      << fmt_sci(tol) << ": " << (pass_coupled ? "PASS" : "FAIL") << "\n";
    s << "  empty cavity (g = 0): 41 probe points\n";
    s << "    max absolute deviation " << fmt_sci(max_abs) << ", tolerance "
      << fmt_sci(abs_tol) << ": " << (pass_empty ? "PASS" : "FAIL") << "\n";
    s << "verification " << (pass ? "PASSED" : "FAILED") << "\n";
    std::cout << s.str();

    ordered_json j;
    j["schema"] = "cqed.verify/1";
    j["version"] = cqed::version;
    j["pass"] = pass;
    auto checks = ordered_json::array();
    {
        ordered_json c;
        c["name"] = "coupled";
        c["n_points"] = 201;
        c["max_relative_deviation"] = max_rel;
        c["tolerance"] = tol;
        c["pass"] = pass_coupled;
        checks.push_back(c);
        ordered_json e;
        e["name"] = "empty_cavity";
        e["n_points"] = 41;
        e["max_absolute_deviation"] = max_abs;
        e["tolerance"] = abs_tol;
        e["pass"] = pass_empty;
        checks.push_back(e);
    }
    j["checks"] = checks;
    auto cj = ordered_json::object();
    for (const auto& [k, v] : cfg.values) cj[k] = v;
    j["config"] = cj;
    j["seed"] = cfg.get_u64("seed", 0);
    cqed::io::write_json(out_path(o, "verify_report.json"), j);
    return pass ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "emitter-cavity spectroscopy toolkit: synthetic data, model fits, and "
        "a closed-form-vs-oracle self check"};
    app.set_version_flag("--version", cqed::version);
    app.require_subcommand(1);
    int rc = 0;

    auto* sim = app.add_subcommand("simulate", "generate synthetic data files");
    sim->require_subcommand(1);
    CommonOpts sim_opts[5];
    sim->add_subcommand("spectrum", "coherent reflection spectrum")
        ->callback([&] { rc = run_simulate_spectrum(sim_opts[0]); });
    add_common(sim->get_subcommand("spectrum"), sim_opts[0]);
    sim->add_subcommand("decay", "time-resolved decay histogram")
        ->callback([&] { rc = run_simulate_decay(sim_opts[1]); });
    add_common(sim->get_subcommand("decay"), sim_opts[1]);
    sim->add_subcommand("g2", "pulsed photon-correlation histogram")
        ->callback([&] { rc = run_simulate_g2(sim_opts[2]); });
    add_common(sim->get_subcommand("g2"), sim_opts[2]);
    sim->add_subcommand("biasmap", "emission energy versus gate bias map")
        ->callback([&] { rc = run_simulate_biasmap(sim_opts[3]); });
    add_common(sim->get_subcommand("biasmap"), sim_opts[3]);
    sim->add_subcommand("spatialmap", "reflectivity dip versus stage position")
        ->callback([&] { rc = run_simulate_spatialmap(sim_opts[4]); });
    add_common(sim->get_subcommand("spatialmap"), sim_opts[4]);

    auto* fitc = app.add_subcommand("fit", "fit a model to a data file");
    fitc->require_subcommand(1);
    CommonOpts fit_opts[4];
    std::string inputs[4];
    auto* f_spec =
        fitc->add_subcommand("spectrum", "coupled reflection dip fit");
    f_spec->add_option("input", inputs[0], "spectrum CSV file")->required();
    add_common(f_spec, fit_opts[0]);
    f_spec->callback([&] { rc = run_fit_spectrum(fit_opts[0], inputs[0]); });
    auto* f_life =
        fitc->add_subcommand("lifetime", "reconvolution decay fit");
    f_life->add_option("input", inputs[1], "decay histogram CSV file")
        ->required();
    add_common(f_life, fit_opts[1]);
    f_life->callback([&] { rc = run_fit_lifetime(fit_opts[1], inputs[1]); });
    auto* f_g2 = fitc->add_subcommand("g2", "zero-delay correlation estimate");
    f_g2->add_option("input", inputs[2], "correlation histogram CSV file")
        ->required();
    add_common(f_g2, fit_opts[2]);
    f_g2->callback([&] { rc = run_fit_g2(fit_opts[2], inputs[2]); });
    auto* f_pur = fitc->add_subcommand(
        "purcell-dip", "lifetime dips at two cavity mode crossings");
    f_pur->add_option("input", inputs[3], "lifetime scan CSV file")->required();
    add_common(f_pur, fit_opts[3]);
    f_pur->callback([&] { rc = run_fit_purcell(fit_opts[3], inputs[3]); });

    auto* ver = app.add_subcommand(
        "verify", "compare the closed form against the master equation");
    CommonOpts ver_opts;
    add_common(ver, ver_opts);
    std::string tol_flag;
    bool negative_control = false;
    ver->add_option("--tolerance", tol_flag,
                    "relative tolerance for the coupled check");
    ver->add_flag("--negative-control", negative_control,
                  "scale the cavity collapse rates by 0.8; the check must "
                  "then fail");
    ver->callback(
        [&] { rc = run_verify(ver_opts, tol_flag, negative_control); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const cqed::io::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
