// Acceptance gate for the toolkit. Each numbered check prints one PASS or
// FAIL line with the measured quantity and its pinned tolerance; the
// process exits nonzero if any check fails. Checks 1 and 3 also enforce
// wall-clock budgets so the oracle and the Monte-Carlo loop stay cheap
// enough to run on every commit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/core.hpp"
#include "cqed/g2.hpp"
#include "cqed/lindblad.hpp"
#include "cqed/spectra.hpp"
#include "cqed/tcspc.hpp"
#include "cqed/tuning.hpp"
#include "cqed/version.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return g;
}

int failures = 0;

void report(int id, bool ok, const std::string& what,
            const std::string& detail) {
    std::printf("%s  check %2d: %s | %s\n", ok ? "PASS" : "FAIL", id,
                what.c_str(), detail.c_str());
    if (!ok) ++failures;
}

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

cqed::SystemParams benchmark_params() {
    cqed::SystemParams p;
    p.g = 9.7;
    p.kappa = 24.1;
    p.gamma = 1.9;
    return p;
}

// 1: closed-form reflection vs the steady-state master equation, full dip.
void check_oracle_equivalence() {
    const auto t0 = Clock::now();
    const auto p = benchmark_params();
    cqed::oracle::HilbertConfig hc;
    double max_rel = 0.0;
    for (double w : linspace(-5.0 * p.kappa, 5.0 * p.kappa, 201)) {
        const double rc = cqed::reflectance(w, p);
        const double ro = cqed::oracle::steady_state_reflectivity(p, hc, w);
        max_rel = std::max(max_rel, std::abs(ro - rc) / rc);
    }
    const double dt = seconds_since(t0);
    report(1, max_rel < 1e-3 && dt < 10.0,
           "closed-form reflection matches the master-equation oracle",
           "max rel dev " + fmt(max_rel, "%.2e") + " < 1e-03 over 201 points, " +
               fmt(dt, "%.2f") + " s < 10 s");
}

// 2: the empty-cavity dip width is 2 kappa and the quality factor follows.
void check_dip_geometry() {
    cqed::SystemParams p0 = benchmark_params();
    p0.g = 0.0;

    // half-depth crossings of the closed form by bisection
    auto half_crossing = [&](double lo, double hi) {
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (cqed::reflectance(mid, p0) > 0.5)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double left = half_crossing(-5.0 * p0.kappa, 0.0);
    double rl = 5.0 * p0.kappa, rh = 0.0;  // descending side mirrored
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (rl + rh);
        if (cqed::reflectance(mid, p0) > 0.5)
            rl = mid;
        else
            rh = mid;
    }
    const double fwhm_numeric = 0.5 * (rl + rh) - left;

    // a blind fit of the simulated dip must report the same width as kappa
    const auto omega = linspace(-5.0 * p0.kappa, 5.0 * p0.kappa, 401);
    std::vector<double> values(omega.size());
    cqed::OpticalNuisance nu;
    for (std::size_t i = 0; i < omega.size(); ++i)
        values[i] = cqed::observed_reflectivity(omega[i], p0, nu, 0.0);
    cqed::spectra::SpectrumFitOptions opts;
    opts.empty_cavity = true;
    const auto res = cqed::spectra::fit_spectrum(omega, values, {}, opts);

    const double fwhm_rel = std::abs(fwhm_numeric - 2.0 * p0.kappa) /
                            (2.0 * p0.kappa);
    const double fit_rel =
        std::abs(2.0 * res.params.kappa - fwhm_numeric) / fwhm_numeric;
    const double q = cqed::q_factor(24.1, 1.3014e6);
    const double q_rel = std::abs(q - 27000.0) / 27000.0;
    report(2,
           fwhm_rel < 1e-3 && fit_rel < 1e-3 && res.report.converged &&
               q_rel < 0.01,
           "reflection dip FWHM equals 2 kappa and Q = E/(2 kappa)",
           "numeric FWHM " + fmt(fwhm_numeric, "%.6f") + " vs 2k = 48.2 (rel " +
               fmt(fwhm_rel, "%.1e") + " < 1e-03), fitted 2k rel dev " +
               fmt(fit_rel, "%.1e") + ", Q = " + fmt(q, "%.1f") +
               " within 1% of 27000");
}

// 3: blind closed-loop spectrum fit at one percent noise, plus coverage.
void check_spectrum_closed_loop() {
    const auto t0 = Clock::now();
    const auto p = benchmark_params();
    cqed::OpticalNuisance nu;
    nu.eta = 0.96;
    const auto omega = linspace(-5.0 * p.kappa, 5.0 * p.kappa, 201);
    const double noise = 0.01;
    const std::vector<double> sigma(omega.size(), noise);

    auto fit_seed = [&](std::uint64_t seed) {
        const auto values = cqed::spectra::simulate_spectrum_values(
            p, nu, omega, 0.0, noise, seed);
        return cqed::spectra::fit_spectrum(omega, values, sigma);
    };

    // canonical run, asserted parameter by parameter
    const auto c = fit_seed(1000);
    const bool canonical_ok =
        c.report.converged &&
        std::abs(c.params.g - p.g) / p.g < 0.02 &&
        std::abs(c.params.kappa - p.kappa) / p.kappa < 0.02 &&
        std::abs(c.params.gamma - p.gamma) / p.gamma < 0.10 &&
        std::abs(c.nuisance.eta - nu.eta) < 0.01 &&
        std::abs(c.regime.ratio_g_kappa - 0.402) < 0.01 &&
        c.regime.regime == cqed::Regime::near_strong;

    int cover_g = 0, cover_k = 0, converged = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto r = fit_seed(seed);
        if (!r.report.converged) continue;
        ++converged;
        if (std::abs(r.params.g - p.g) <= 2.0 * r.sigma("g")) ++cover_g;
        if (std::abs(r.params.kappa - p.kappa) <= 2.0 * r.sigma("kappa"))
            ++cover_k;
    }
    const double dt = seconds_since(t0);
    report(3,
           canonical_ok && converged == 100 && cover_g >= 90 && cover_k >= 90 &&
               dt < 60.0,
           "blind spectrum fit recovers g, kappa, gamma, eta at 1% noise",
           "canonical g/kappa = " + fmt(c.regime.ratio_g_kappa, "%.4f") +
               " (0.402 +/- 0.01), regime " +
               std::string(cqed::to_string(c.regime.regime)) +
               ", 2-sigma coverage g " + std::to_string(cover_g) + "/100, kappa " +
               std::to_string(cover_k) + "/100 (>= 90), " + fmt(dt, "%.1f") +
               " s < 60 s");
}

// 4: the on-resonance reflectivity identity, closed form and oracle.
void check_joint_resonance() {
    const auto p = benchmark_params();
    const double r = cqed::reflectance(0.0, p);
    const double x = p.g * p.g / (p.g * p.g + p.gamma * p.kappa);
    const double identity = x * x;
    const double closed_dev = std::abs(r - identity);

    cqed::oracle::HilbertConfig hc;
    const double ro = cqed::oracle::steady_state_reflectivity(p, hc, 0.0);
    const double oracle_rel = std::abs(ro - r) / r;
    report(4, closed_dev < 1e-12 && oracle_rel < 1e-3,
           "joint-resonance reflectivity equals (g^2/(g^2+gamma kappa))^2",
           "R(0) = " + fmt(r, "%.10f") + ", identity dev " +
               fmt(closed_dev, "%.1e") + " < 1e-12, oracle rel dev " +
               fmt(oracle_rel, "%.1e") + " < 1e-03");
}

// 5: reconvolution lifetime fits are unbiased and honestly report sigma.
void check_lifetime_recovery() {
    const auto protocol = [&](double tau_ps, double bias_limit_ps,
                              std::string* detail) {
        const auto model = cqed::tcspc::DecayModel::mono(1.0, tau_ps);
        const auto irf = cqed::tcspc::InstrumentResponse::gaussian(150.0, 400.0);
        const cqed::tcspc::HistogramGrid grid{1024, 4.0, 0.0};

        // deviance residuals keep reported sigma honest in low-count tail bins
        cqed::tcspc::LifetimeFitOptions fit_opts;
        fit_opts.weighting = cqed::fit::Weighting::poisson_mle;

        std::vector<double> taus, sigmas;
        int converged = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            const auto hist =
                cqed::tcspc::simulate_decay(model, irf, grid, 1000000, seed);
            const auto rep = cqed::tcspc::fit_lifetime(
                hist, irf, cqed::tcspc::DecayKind::mono, fit_opts);
            if (!rep.converged) continue;
            ++converged;
            taus.push_back(rep.values[1]);
            sigmas.push_back(rep.one_sigma[1]);
        }
        const double mean =
            std::accumulate(taus.begin(), taus.end(), 0.0) / taus.size();
        double var = 0.0;
        for (double t : taus) var += (t - mean) * (t - mean);
        const double scatter = std::sqrt(var / (taus.size() - 1));
        std::nth_element(sigmas.begin(), sigmas.begin() + sigmas.size() / 2,
                         sigmas.end());
        const double sigma_hat = sigmas[sigmas.size() / 2];
        const double bias = std::abs(mean - tau_ps);
        const double ratio = sigma_hat / scatter;

        *detail += "tau " + fmt(tau_ps, "%.0f") + ": bias " + fmt(bias, "%.2f") +
                   " < " + fmt(bias_limit_ps, "%.0f") + " ps, sigma/scatter " +
                   fmt(ratio, "%.2f") + "; ";
        return converged == 100 && bias < bias_limit_ps && ratio > 2.0 / 3.0 &&
               ratio < 1.5;
    };
    std::string detail;
    const bool short_ok = protocol(137.0, 10.0, &detail);
    const bool long_ok = protocol(321.0, 5.0, &detail);
    report(5, short_ok && long_ok,
           "lifetime fits through a 150 ps response are unbiased",
           detail + "100 seeds each at 1e6 counts");
}

// 6: rate and enhancement arithmetic is exact.
void check_budget_arithmetic() {
    const double budget = cqed::photon_budget(80e6, 0.25, 0.15);
    const double fp_low = cqed::purcell_factor(616.0, 220.0);
    const double fp_high = cqed::purcell_factor(1298.0, 220.0);
    report(6, budget == 3.0e6 && fp_low == 2.8 && fp_high == 5.9,
           "photon budget and lifetime-ratio enhancements are exact",
           "80 MHz x 0.25 x 0.15 = " + fmt(budget, "%.1f") +
               ", 616/220 = " + fmt(fp_low, "%.1f") + ", 1298/220 = " +
               fmt(fp_high, "%.1f"));
}

// 7: two lifetime dips at ten percent noise localize both modes.
void check_purcell_dip() {
    const double kappa = 20.0;
    cqed::TwoModeLifetimeModel truth;
    truth.tau_off_ps = 1100.0;
    truth.tau_on_h_ps = 220.0;
    truth.tau_on_v_ps = 220.0;
    truth.e_h_uev = 1301350.0;
    truth.e_v_uev = 1301480.0;
    truth.kappa_h_uev = kappa;
    truth.kappa_v_uev = kappa;

    const auto energy = linspace(1301250.0, 1301600.0, 15);
    std::vector<double> tau(energy.size()), sigma(energy.size());
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < energy.size(); ++i) {
        const double t = truth.lifetime(energy[i]);
        sigma[i] = 0.1 * t;
        tau[i] = t + sigma[i] * gauss(rng);
    }
    const auto res = cqed::spectra::fit_purcell_dip(energy, tau, sigma, kappa);
    const double e1_dev = std::abs(res.e_mode_1_uev - truth.e_h_uev);
    const double e2_dev = std::abs(res.e_mode_2_uev - truth.e_v_uev);
    const double tau_rel = std::abs(res.tau_on_ps - 220.0) / 220.0;
    report(7,
           res.report.converged && e1_dev < 0.2 * kappa &&
               e2_dev < 0.2 * kappa && tau_rel < 0.10,
           "two-mode lifetime dip fit at 10% noise, 15 points",
           "mode devs " + fmt(e1_dev, "%.2f") + ", " + fmt(e2_dev, "%.2f") +
               " ueV < 0.2 kappa = " + fmt(0.2 * kappa, "%.1f") +
               ", tau_on rel dev " + fmt(tau_rel, "%.3f") + " < 0.10");
}

// Event-level two-detector model: one signal photon per pulse at most,
// Poisson background per detector. Same statistics as the unit suite.
double brute_force_g2(double background_fraction, double eta,
                      std::uint64_t n_pulses, std::uint64_t seed,
                      double* mc_sigma) {
    const double mu_b = eta * background_fraction / (1.0 - background_fraction);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::poisson_distribution<int> bg(mu_b / 2.0);

    double same = 0.0, adjacent = 0.0;
    int prev_b = 0;
    bool have_prev = false;
    for (std::uint64_t i = 0; i < n_pulses; ++i) {
        int na = bg(rng);
        int nb = bg(rng);
        const double r = u01(rng);
        if (r < eta / 2.0)
            ++na;
        else if (r < eta)
            ++nb;
        same += static_cast<double>(na) * nb;
        if (have_prev) adjacent += static_cast<double>(na) * prev_b;
        prev_b = nb;
        have_prev = true;
    }
    const double g2 = same / adjacent;
    *mc_sigma = g2 * std::sqrt(1.0 / same + 1.0 / adjacent);
    return g2;
}

// 8: the area-ratio estimator and the background composition law.
void check_g2_estimator() {
    bool ok = true;
    std::string detail;

    const struct {
        double target;
        std::uint64_t seed;
    } cases[] = {{0.0, 5}, {0.2, 9}, {0.5, 13}};
    double est_02 = 1.0;
    for (const auto& cs : cases) {
        cqed::g2::PulsedEmitter em;
        em.lifetime_ps = 137.0;
        em.g2_zero_target = cs.target;
        const auto sim = cqed::g2::simulate_g2(em, 80e6, 100000, cs.seed);
        const auto est = cqed::g2::estimate_g2_zero(sim.hist);
        if (cs.target == 0.2) est_02 = est.g2_zero;
        const double dev = std::abs(est.g2_zero - cs.target);
        ok = ok && dev <= 0.03;
        detail += "target " + fmt(cs.target, "%.1f") + " -> " +
                  fmt(est.g2_zero, "%.3f") + "; ";
    }
    const bool classifier_ok = est_02 < 0.25;
    detail += std::string("0.2 case ") +
              (classifier_ok ? "passes" : "FAILS") + " the < 0.25 criterion; ";

    for (double b : {0.1, 0.3}) {
        const double expected = 2.0 * b - b * b;
        double mc_sigma = 0.0;
        const double bf = brute_force_g2(b, 0.4, 4000000, 77, &mc_sigma);
        const double dev = std::abs(bf - expected);
        ok = ok && dev < 4.0 * mc_sigma;
        detail += "b=" + fmt(b, "%.1f") + ": " + fmt(bf, "%.4f") + " vs " +
                  fmt(expected, "%.4f") + " (" + fmt(dev / mc_sigma, "%.1f") +
                  " sigma); ";
    }
    report(8, ok && classifier_ok,
           "g2(0) estimates hit their targets and the 2b - b^2 law",
           detail + "1e5 coincidences per target");
}

// 9: resonance crossing roots and the charge-transition discontinuity.
void check_tuning() {
    const auto model = cqed::tuning::ChargePlateauModel::example();
    const std::vector<cqed::tuning::CavityMode> modes = {
        {"A", 1301460.0, 12.0}, {"B", 1295550.0, 12.0}};
    const auto crossings =
        cqed::tuning::find_resonance_crossings(model, modes);

    double worst = 0.0;
    int usable = 0;
    for (const auto& c : crossings) {
        if (c.degenerate) continue;
        ++usable;
        double e_mode = 0.0;
        for (const auto& m : modes)
            if (m.label == c.mode_label) e_mode = m.energy_uev;
        worst = std::max(
            worst, std::abs(model.transition_energy(c.bias_v) - e_mode));
    }

    const double shift_below = model.plateau_at(0.3 - 1e-6).shift_uev;
    const double shift_at = model.plateau_at(0.3).shift_uev;
    const double jump = shift_below - shift_at;
    report(9, usable >= 2 && worst < 1e-9 && jump == 6000.0,
           "resonance crossings solve the tuning curve exactly",
           std::to_string(usable) + " crossings, worst |E(V) - E_mode| = " +
               fmt(worst, "%.1e") + " < 1e-09 ueV, charge-transition jump " +
               fmt(jump, "%.0f") + " ueV = 6 meV");
}

// 10: what deliberately cannot be validated without the physical device.
void check_scope_statement() {
    report(10, true, "device-scale results are out of numerical scope",
           "fabricated-pillar Q, absolute detected count rates, and measured "
           "bias-tuning curves need hardware; they are covered here by "
           "synthetic round trips and closed-form identities instead");
}

}  // namespace

int main() {
    std::printf("acceptance gate, toolkit version %s\n", cqed::version);
    const auto t0 = Clock::now();

    check_oracle_equivalence();
    check_dip_geometry();
    check_spectrum_closed_loop();
    check_joint_resonance();
    check_lifetime_recovery();
    check_budget_arithmetic();
    check_purcell_dip();
    check_g2_estimator();
    check_tuning();
    check_scope_statement();

    std::printf("%s (%d of 10 passed, %.1f s total)\n",
                failures == 0 ? "ALL CHECKS PASSED" : "CHECKS FAILED",
                10 - failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
