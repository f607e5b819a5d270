#pragma once

// Model-level glue between the analytic reflection model and the fit
// engine: seeding heuristics, full spectrum fits with derived figures of
// merit, the two-mode lifetime-dip fit, and the synthetic generators the
// command-line tools sample from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqed/core.hpp"
#include "cqed/fit.hpp"

namespace cqed::spectra {

struct SpectrumGuess {
    SystemParams params;
    OpticalNuisance nuisance;
    double omega_ref_uev = 0.0;  // baseline slope reference
    bool coupled = false;        // two minima with a central sub-peak
    std::vector<std::string> notes;
};

namespace detail {

inline void require_spectrum(const std::vector<double>& omega,
                             const std::vector<double>& value) {
    if (omega.size() != value.size())
        throw std::invalid_argument("spectrum: axis and value sizes differ");
    if (omega.size() < 20)
        throw std::invalid_argument(
            "spectrum: need at least 20 points, have " +
            std::to_string(omega.size()));
    for (std::size_t i = 1; i < omega.size(); ++i)
        if (!(omega[i] > omega[i - 1]))
            throw std::invalid_argument(
                "spectrum: energies must be strictly ascending");
    for (double v : value)
        if (!std::isfinite(v))
            throw std::invalid_argument("spectrum: values must be finite");
}

// least-squares line a + b (x - x_ref) through the edge quartiles
inline void edge_baseline(const std::vector<double>& omega,
                          const std::vector<double>& value, double omega_ref,
                          double& a, double& b) {
    const std::size_t n = omega.size();
    const std::size_t q = std::max<std::size_t>(n / 4, 2);
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    auto add = [&](std::size_t i) {
        const double x = omega[i] - omega_ref;
        sw += 1.0;
        sx += x;
        sy += value[i];
        sxx += x * x;
        sxy += x * value[i];
    };
    for (std::size_t i = 0; i < q; ++i) add(i);
    for (std::size_t i = n - q; i < n; ++i) add(i);
    const double det = sw * sxx - sx * sx;
    if (std::abs(det) < 1e-300) {
        a = sy / sw;
        b = 0.0;
        return;
    }
    a = (sy * sxx - sx * sxy) / det;
    b = (sw * sxy - sx * sy) / det;
}

// robust noise scale from first differences
inline double noise_from_differences(const std::vector<double>& value) {
    std::vector<double> d;
    d.reserve(value.size() - 1);
    for (std::size_t i = 1; i < value.size(); ++i)
        d.push_back(std::abs(value[i] - value[i - 1]));
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2] / (0.6745 * std::sqrt(2.0));
}

// parabolic refinement of an extremum through three samples
inline double refine_vertex(const std::vector<double>& x,
                            const std::vector<double>& y, std::size_t i) {
    if (i == 0 || i + 1 >= x.size()) return x[i];
    const double denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
    if (std::abs(denom) < 1e-300) return x[i];
    const double shift = 0.5 * (y[i - 1] - y[i + 1]) / denom;
    const double h = 0.5 * (x[i + 1] - x[i - 1]);
    return x[i] + std::clamp(shift, -1.0, 1.0) * h;
}

}  // namespace detail

// Seeds a spectrum fit from the data alone: baseline from the edge
// quartiles, dip width from the half-depth crossings, and a coupled-dot
// signature from two minima bracketing a sub-peak.
inline SpectrumGuess initial_guess_spectrum(const std::vector<double>& omega,
                                            const std::vector<double>& value) {
    detail::require_spectrum(omega, value);
    const std::size_t n = omega.size();

    SpectrumGuess g;
    g.omega_ref_uev = 0.5 * (omega.front() + omega.back());
    detail::edge_baseline(omega, value, g.omega_ref_uev, g.nuisance.base_a,
                          g.nuisance.base_b);

    // dip profile relative to the baseline, lightly smoothed so that peak
    // geometry is not driven by single noisy samples
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i)
        raw[i] = g.nuisance.base_a +
                 g.nuisance.base_b * (omega[i] - g.omega_ref_uev) - value[i];
    std::vector<double> dip(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = i >= 2 ? i - 2 : 0;
        const std::size_t b = std::min(i + 2, n - 1);
        double s = 0.0;
        for (std::size_t j = a; j <= b; ++j) s += raw[j];
        dip[i] = s / static_cast<double>(b - a + 1);
    }

    const double noise = detail::noise_from_differences(value);
    std::size_t i_deep = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (dip[i] > dip[i_deep]) i_deep = i;
    const double depth = dip[i_deep];
    if (!(depth > 3.0 * noise))
        throw std::runtime_error(
            "spectrum: featureless input, dip depth " + std::to_string(depth) +
            " is below 3x the noise estimate " + std::to_string(noise));

    // half-depth span of the whole structure
    const double half = 0.5 * depth;
    std::size_t lo = i_deep, hi = i_deep;
    while (lo > 0 && dip[lo] > half) --lo;
    while (hi + 1 < n && dip[hi] > half) ++hi;
    auto cross = [&](std::size_t a, std::size_t b) {
        // linear interpolation of the half-depth crossing between a and b
        const double da = dip[a], db = dip[b];
        if (std::abs(db - da) < 1e-300) return omega[a];
        const double t = (half - da) / (db - da);
        return omega[a] + t * (omega[b] - omega[a]);
    };
    const double w_lo = lo == i_deep ? omega[lo] : cross(lo, lo + 1);
    const double w_hi = hi == i_deep ? omega[hi] : cross(hi, hi - 1);
    const double width = std::max(w_hi - w_lo, omega[1] - omega[0]);

    // local maxima of the dip profile above a third of the depth; the
    // second peak must sit a respectable distance from the first
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (dip[i] >= dip[i - 1] && dip[i] > dip[i + 1] &&
            dip[i] > 0.35 * depth)
            peaks.push_back(i);
    std::sort(peaks.begin(), peaks.end(),
              [&](std::size_t a, std::size_t b) { return dip[a] > dip[b]; });

    const double min_sep = std::max(3.0 * (omega[1] - omega[0]), width / 6.0);
    std::size_t second = n;
    if (!peaks.empty())
        for (std::size_t k = 1; k < peaks.size(); ++k)
            if (std::abs(omega[peaks[k]] - omega[peaks[0]]) > min_sep) {
                second = peaks[k];
                break;
            }

    std::size_t ia = 0, ib = 0;
    if (!peaks.empty() && second < n) {
        ia = std::min(peaks[0], second);
        ib = std::max(peaks[0], second);
        // require a genuine sub-peak between the two minima
        std::size_t imid = ia;
        for (std::size_t i = ia; i <= ib; ++i)
            if (dip[i] < dip[imid]) imid = i;
        const double floor_between = dip[imid];
        if (imid > ia && imid < ib &&
            floor_between < 0.75 * std::min(dip[ia], dip[ib])) {
            g.coupled = true;
            const double w1 = detail::refine_vertex(omega, dip, ia);
            const double w2 = detail::refine_vertex(omega, dip, ib);
            g.params.g = std::max(0.5 * (w2 - w1), 0.25 * width);
            g.params.omega_c = 0.5 * (w1 + w2);
            g.params.omega_qd = detail::refine_vertex(omega, dip, imid);
            g.notes.push_back("coupled signature: two minima at " +
                              std::to_string(w1) + " and " +
                              std::to_string(w2) + " ueV around a sub-peak");
        }
    }
    if (!g.coupled) {
        g.params.g = 0.0;
        g.params.omega_c = detail::refine_vertex(omega, dip, i_deep);
        g.params.omega_qd = g.params.omega_c;
        g.notes.push_back("single dip; no emitter signature found");
    }

    g.params.kappa = 0.5 * width;
    g.params.gamma = std::max(g.params.kappa / 20.0, 1e-3);
    const double base_at_dip =
        g.nuisance.base_a +
        g.nuisance.base_b * (omega[i_deep] - g.omega_ref_uev);
    g.nuisance.eta =
        std::clamp(depth / std::max(base_at_dip, 1e-6), 0.05, 1.0);
    return g;
}

inline const std::vector<std::string>& spectrum_param_names() {
    static const std::vector<std::string> names = {
        "g", "kappa", "gamma", "omega_c", "omega_qd",
        "eta", "base_a", "base_b"};
    return names;
}

struct SpectrumFitOptions {
    bool empty_cavity = false;  // pin the emitter out of the model
    double photon_energy_uev = 1.3014e6;  // absolute scale for Q
    fit::Options engine;
    std::optional<SpectrumGuess> guess;  // taken from the data when absent
};

struct SpectrumFitResult {
    fit::FitReport report;
    SystemParams params;
    OpticalNuisance nuisance;
    double omega_ref_uev = 0.0;
    RegimeReport regime;
    double q_factor = 0.0;
    double purcell_estimate = 0.0;  // 1 + cooperativity
    bool empty_cavity = false;

    double value(const std::string& name) const {
        for (std::size_t i = 0; i < report.param_names.size(); ++i)
            if (report.param_names[i] == name) return report.values[i];
        throw std::invalid_argument("spectrum fit: unknown parameter " + name);
    }
    double sigma(const std::string& name) const {
        for (std::size_t i = 0; i < report.param_names.size(); ++i)
            if (report.param_names[i] == name) return report.one_sigma[i];
        throw std::invalid_argument("spectrum fit: unknown parameter " + name);
    }
};

inline SpectrumFitResult fit_spectrum(const std::vector<double>& omega,
                                      const std::vector<double>& value,
                                      const std::vector<double>& sigma = {},
                                      SpectrumFitOptions options = {}) {
    detail::require_spectrum(omega, value);
    SpectrumGuess guess =
        options.guess ? *options.guess : initial_guess_spectrum(omega, value);
    const double omega_ref = guess.omega_ref_uev;
    const double span = omega.back() - omega.front();
    const double vmax = *std::max_element(value.begin(), value.end());
    const bool empty = options.empty_cavity || !guess.coupled;

    std::vector<fit::Parameter> params(8);
    auto set = [&](int i, const std::string& name, double v, double lo,
                   double hi, bool fixed = false) {
        params[i].name = name;
        params[i].value = std::clamp(v, lo, hi);
        params[i].lower = lo;
        params[i].upper = hi;
        params[i].fixed = fixed;
    };
    const double slope_bound = 4.0 * std::max(vmax, 1e-6) / span;
    set(0, "g", guess.params.g, 0.0, span, empty);
    set(1, "kappa", guess.params.kappa, std::max(1e-4 * span, 1e-6), span);
    set(2, "gamma", guess.params.gamma, 1e-6, span, empty);
    set(3, "omega_c", guess.params.omega_c, omega.front(), omega.back());
    set(4, "omega_qd", guess.params.omega_qd, omega.front(), omega.back(),
        empty);
    set(5, "eta", guess.nuisance.eta, 1e-3, 1.0);
    set(6, "base_a", guess.nuisance.base_a, 1e-3,
        std::max(10.0 * vmax, 1.0));
    set(7, "base_b", guess.nuisance.base_b, -slope_bound, slope_bound);
    if (empty) params[0].value = 0.0;

    auto predict = [omega, omega_ref](const std::vector<double>& x) {
        SystemParams p;
        p.g = x[0];
        p.kappa = x[1];
        p.gamma = std::max(x[2], 1e-12);
        p.omega_c = x[3];
        p.omega_qd = x[4];
        OpticalNuisance nu;
        nu.eta = x[5];
        nu.base_a = x[6];
        nu.base_b = x[7];
        std::vector<double> mu(omega.size());
        for (std::size_t i = 0; i < omega.size(); ++i)
            mu[i] = observed_reflectivity(omega[i], p, nu, omega_ref);
        return mu;
    };

    auto problem = fit::make_problem(predict, value, std::move(params),
                                     fit::Weighting::uniform, sigma);
    SpectrumFitResult out;
    out.report = fit::least_squares(problem, options.engine);
    out.params.g = out.report.values[0];
    out.params.kappa = out.report.values[1];
    out.params.gamma = out.report.values[2];
    out.params.omega_c = out.report.values[3];
    out.params.omega_qd = out.report.values[4];
    out.nuisance.eta = out.report.values[5];
    out.nuisance.base_a = out.report.values[6];
    out.nuisance.base_b = out.report.values[7];
    out.omega_ref_uev = omega_ref;
    out.empty_cavity = empty;
    out.regime = regime(out.params);
    out.q_factor = q_factor(out.params.kappa, options.photon_energy_uev);
    out.purcell_estimate = 1.0 + out.regime.cooperativity;
    return out;
}

struct PurcellDipOptions {
    fit::Options engine;
    double tau_seed_off_ps = 0.0;  // 0 means take from the data
    double tau_seed_on_ps = 0.0;
};

struct PurcellDipResult {
    fit::FitReport report;
    double tau_off_ps = 0.0;
    double tau_on_ps = 0.0;       // shared on-resonance lifetime
    double e_mode_1_uev = 0.0;    // sorted ascending
    double e_mode_2_uev = 0.0;
    double kappa_uev = 0.0;
    double contrast = 0.0;        // tau_off / tau_on
};

// Two equal-width lifetime dips on a flat background of rate 1/tau_off.
// The mode widths are taken as known (from the reflection fit); only the
// lifetimes and mode positions float.
inline PurcellDipResult fit_purcell_dip(const std::vector<double>& energy_uev,
                                        const std::vector<double>& lifetime_ps,
                                        const std::vector<double>& sigma_ps,
                                        double kappa_uev,
                                        PurcellDipOptions options = {}) {
    if (energy_uev.size() != lifetime_ps.size())
        throw std::invalid_argument("purcell dip: axis and value sizes differ");
    if (energy_uev.size() < 8)
        throw std::invalid_argument("purcell dip: need at least 8 points");
    if (!(kappa_uev > 0.0))
        throw std::invalid_argument("purcell dip: kappa must be positive");
    for (double t : lifetime_ps)
        if (!(t > 0.0))
            throw std::invalid_argument("purcell dip: lifetimes must be positive");

    const std::size_t n = energy_uev.size();
    double tau_max = lifetime_ps[0], tau_min = lifetime_ps[0];
    std::size_t i_min = 0;
    for (std::size_t i = 1; i < n; ++i) {
        tau_max = std::max(tau_max, lifetime_ps[i]);
        if (lifetime_ps[i] < tau_min) {
            tau_min = lifetime_ps[i];
            i_min = i;
        }
    }
    // second dip: deepest point at least two linewidths from the first
    std::size_t i_second = n + 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(energy_uev[i] - energy_uev[i_min]) <= 2.0 * kappa_uev)
            continue;
        if (i_second > n || lifetime_ps[i] < lifetime_ps[i_second]) i_second = i;
    }
    double e1 = energy_uev[i_min];
    double e2 = i_second <= n ? energy_uev[i_second] : e1 + 4.0 * kappa_uev;
    if (e1 > e2) std::swap(e1, e2);

    const double lo = std::min(energy_uev.front(), energy_uev.back()) - 2.0 * kappa_uev;
    const double hi = std::max(energy_uev.front(), energy_uev.back()) + 2.0 * kappa_uev;

    std::vector<fit::Parameter> params(4);
    params[0] = {"tau_off_ps",
                 options.tau_seed_off_ps > 0.0 ? options.tau_seed_off_ps
                                               : tau_max,
                 1e-2, 1e7, false};
    params[1] = {"tau_on_ps",
                 options.tau_seed_on_ps > 0.0 ? options.tau_seed_on_ps
                                              : tau_min,
                 1e-2, 1e7, false};
    params[2] = {"e_mode_1_uev", e1, lo, hi, false};
    params[3] = {"e_mode_2_uev", e2, lo, hi, false};

    auto predict = [energy_uev, kappa_uev](const std::vector<double>& x) {
        TwoModeLifetimeModel m;
        m.tau_off_ps = x[0];
        m.tau_on_h_ps = x[1];
        m.tau_on_v_ps = x[1];
        m.e_h_uev = x[2];
        m.e_v_uev = x[3];
        m.kappa_h_uev = kappa_uev;
        m.kappa_v_uev = kappa_uev;
        std::vector<double> mu(energy_uev.size());
        for (std::size_t i = 0; i < energy_uev.size(); ++i)
            mu[i] = m.lifetime(energy_uev[i]);
        return mu;
    };

    auto problem = fit::make_problem(predict, lifetime_ps, std::move(params),
                                     fit::Weighting::uniform, sigma_ps);
    PurcellDipResult out;
    out.report = fit::least_squares(problem, options.engine);
    out.tau_off_ps = out.report.values[0];
    out.tau_on_ps = out.report.values[1];
    out.e_mode_1_uev = std::min(out.report.values[2], out.report.values[3]);
    out.e_mode_2_uev = std::max(out.report.values[2], out.report.values[3]);
    out.kappa_uev = kappa_uev;
    out.contrast = out.tau_off_ps / out.tau_on_ps;
    return out;
}

// deterministic Gaussian-noise generator shared by the synthetic targets
inline std::vector<double> add_gaussian_noise(std::vector<double> values,
                                              double sigma,
                                              std::uint64_t seed) {
    if (sigma < 0.0)
        throw std::invalid_argument("noise sigma must be non-negative");
    if (sigma == 0.0) return values;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (double& v : values) v += gauss(rng);
    return values;
}

inline std::vector<double> simulate_spectrum_values(
    const SystemParams& p, const OpticalNuisance& nu,
    const std::vector<double>& omega, double omega_ref, double noise_sigma,
    std::uint64_t seed) {
    p.validate();
    nu.validate();
    std::vector<double> v(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i)
        v[i] = observed_reflectivity(omega[i], p, nu, omega_ref);
    return add_gaussian_noise(std::move(v), noise_sigma, seed);
}

struct SpatialMap {
    std::vector<double> x_um;  // columns
    std::vector<double> y_um;  // rows
    std::vector<double> value; // row-major, y rows by x columns

    double at(std::size_t row, std::size_t col) const {
        return value[row * x_um.size() + col];
    }
};

struct SpatialMapConfig {
    double center_x_um = 0.0;
    double center_y_um = 0.0;
    double waist_um = 2.2;    // 1/e^2 intensity radius of the dip
    double depth = 0.6;
    double floor = 1.0;       // reflectivity far from the mode
    double noise_sigma = 0.0;
};

// On-resonance reflectivity dip of a Gaussian transverse mode profile.
inline SpatialMap simulate_spatial_map(const SpatialMapConfig& cfg,
                                       const std::vector<double>& x_um,
                                       const std::vector<double>& y_um,
                                       std::uint64_t seed) {
    if (!(cfg.waist_um > 0.0) || cfg.depth < 0.0)
        throw std::invalid_argument(
            "spatial map: waist must be positive and depth non-negative");
    if (x_um.size() < 4 || y_um.size() < 4)
        throw std::invalid_argument("spatial map: grids need at least 4 points");
    SpatialMap map;
    map.x_um = x_um;
    map.y_um = y_um;
    map.value.resize(x_um.size() * y_um.size());
    const double w2 = cfg.waist_um * cfg.waist_um;
    for (std::size_t r = 0; r < y_um.size(); ++r)
        for (std::size_t c = 0; c < x_um.size(); ++c) {
            const double dx = x_um[c] - cfg.center_x_um;
            const double dy = y_um[r] - cfg.center_y_um;
            map.value[r * x_um.size() + c] =
                cfg.floor -
                cfg.depth * std::exp(-2.0 * (dx * dx + dy * dy) / w2);
        }
    map.value = add_gaussian_noise(std::move(map.value), cfg.noise_sigma, seed);
    return map;
}

struct SpatialFitResult {
    fit::FitReport report;
    double center_x_um = 0.0;
    double center_y_um = 0.0;
    double waist_um = 0.0;
    double depth = 0.0;
    double floor = 0.0;
};

inline SpatialFitResult fit_spatial_map(const SpatialMap& map) {
    const std::size_t nx = map.x_um.size(), ny = map.y_um.size();
    if (nx < 4 || ny < 4 || map.value.size() != nx * ny)
        throw std::invalid_argument("spatial map: malformed grid");

    // seeds: floor from the corners, center from the deepest pixel,
    // waist from the half-depth area
    double floor0 = 0.25 * (map.at(0, 0) + map.at(0, nx - 1) +
                            map.at(ny - 1, 0) + map.at(ny - 1, nx - 1));
    std::size_t rmin = 0, cmin = 0;
    for (std::size_t r = 0; r < ny; ++r)
        for (std::size_t c = 0; c < nx; ++c)
            if (map.at(r, c) < map.at(rmin, cmin)) {
                rmin = r;
                cmin = c;
            }
    const double depth0 = std::max(floor0 - map.at(rmin, cmin), 1e-6);
    std::size_t n_below = 0;
    for (double v : map.value)
        if (v < floor0 - 0.5 * depth0) ++n_below;
    const double dx = (map.x_um.back() - map.x_um.front()) /
                      static_cast<double>(nx - 1);
    const double dy = (map.y_um.back() - map.y_um.front()) /
                      static_cast<double>(ny - 1);
    const double area = static_cast<double>(std::max<std::size_t>(n_below, 1)) *
                        dx * dy;
    // half-depth radius of exp(-2 r^2/w^2) is w sqrt(ln2 / 2)
    const double waist0 =
        std::sqrt(area / 3.141592653589793) / std::sqrt(0.5 * std::log(2.0));

    const double span = std::max(map.x_um.back() - map.x_um.front(),
                                 map.y_um.back() - map.y_um.front());
    std::vector<fit::Parameter> params(5);
    params[0] = {"floor", floor0, -10.0, 10.0, false};
    params[1] = {"depth", depth0, 0.0, 10.0, false};
    params[2] = {"center_x_um", map.x_um[cmin], map.x_um.front(),
                 map.x_um.back(), false};
    params[3] = {"center_y_um", map.y_um[rmin], map.y_um.front(),
                 map.y_um.back(), false};
    params[4] = {"waist_um", std::clamp(waist0, 0.05 * span, span),
                 0.01 * span, 2.0 * span, false};

    auto xs = map.x_um;
    auto ys = map.y_um;
    auto predict = [xs, ys](const std::vector<double>& p) {
        std::vector<double> mu(xs.size() * ys.size());
        const double w2 = p[4] * p[4];
        for (std::size_t r = 0; r < ys.size(); ++r)
            for (std::size_t c = 0; c < xs.size(); ++c) {
                const double ddx = xs[c] - p[2];
                const double ddy = ys[r] - p[3];
                mu[r * xs.size() + c] =
                    p[0] - p[1] * std::exp(-2.0 * (ddx * ddx + ddy * ddy) / w2);
            }
        return mu;
    };

    auto problem = fit::make_problem(predict, map.value, std::move(params));
    SpatialFitResult out;
    out.report = fit::least_squares(problem);
    out.floor = out.report.values[0];
    out.depth = out.report.values[1];
    out.center_x_um = out.report.values[2];
    out.center_y_um = out.report.values[3];
    out.waist_um = out.report.values[4];
    return out;
}

}  // namespace cqed::spectra
