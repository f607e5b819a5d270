#pragma once

// Analytic models of a single emitter coupled to one (or two) cavity modes:
// coherent reflection spectrum, figures of merit, Purcell-modified lifetime
// versus detuning, and photon-rate bookkeeping.
//
// Rate conventions: kappa is the cavity *field* (amplitude) decay rate and
// gamma the dipole amplitude decay rate, both in ueV. With these conventions
// the empty-cavity reflection dip has an energy FWHM of 2*kappa, the quality
// factor is Q = E/(2*kappa), and population lifetimes are hbar/(2*rate).

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "cqed/constants.hpp"

namespace cqed {

// Coupled-system parameters. omega_c/omega_qd may be absolute photon
// energies or offsets from a reference; they only need to share a frame
// with the probe energy passed to the spectral functions.
struct SystemParams {
    double g = 0.0;        // emitter-cavity coupling, ueV
    double kappa = 0.0;    // cavity field decay rate, ueV
    double gamma = 0.0;    // dipole decay rate, ueV
    double omega_c = 0.0;  // cavity resonance, ueV
    double omega_qd = 0.0; // emitter resonance, ueV

    void validate() const {
        if (!(kappa > 0.0))
            throw std::domain_error("SystemParams: kappa must be > 0");
        if (!(gamma > 0.0))
            throw std::domain_error("SystemParams: gamma must be > 0");
        if (g < 0.0)
            throw std::domain_error("SystemParams: g must be >= 0");
    }
};

// External-optics nuisance parameters: mode matching scales the dip depth,
// and a multiplicative linear baseline models the slowly varying response
// of the collection path. The modeled observable is
//   r_obs(w) = (base_a + base_b*(w - w_ref)) * (1 - eta*(1 - R(w))).
struct OpticalNuisance {
    double eta = 1.0;    // external mode-matching efficiency, in [0,1]
    double base_a = 1.0; // baseline offset, reflectivity units
    double base_b = 0.0; // baseline slope, reflectivity per ueV

    void validate() const {
        if (eta < 0.0 || eta > 1.0)
            throw std::domain_error("OpticalNuisance: eta must be in [0,1]");
    }
};

enum class Regime { weak_purcell, near_strong, strong };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::weak_purcell: return "weak_purcell";
        case Regime::near_strong: return "near_strong";
        case Regime::strong: return "strong";
    }
    return "?";
}

struct RegimeReport {
    double ratio_g_kappa = 0.0;
    double cooperativity = 0.0; // g^2/(kappa*gamma)
    Regime regime = Regime::weak_purcell;
};

// Complex reflected amplitude of the coupled system at probe energy omega,
//   r(w) = 1 - kappa*(gamma - i dq) / [(gamma - i dq)(kappa - i dc) + g^2],
// dq = w - omega_qd, dc = w - omega_c. The g = 0 branch cancels the dipole
// factor analytically so the empty cavity is exactly independent of gamma
// and omega_qd.
inline std::complex<double> reflection_amplitude(double omega, const SystemParams& p) {
    p.validate();
    const std::complex<double> i(0.0, 1.0);
    const std::complex<double> dc = p.kappa - i * (omega - p.omega_c);
    if (p.g == 0.0)
        return 1.0 - p.kappa / dc;
    const std::complex<double> dq = p.gamma - i * (omega - p.omega_qd);
    return 1.0 - p.kappa * dq / (dq * dc + p.g * p.g);
}

// Reflectivity |r(w)|^2, clamped to [0,1] against rounding excursions.
inline double reflectance(double omega, const SystemParams& p) {
    const double R = std::norm(reflection_amplitude(omega, p));
    return std::clamp(R, 0.0, 1.0);
}

// Reflectance at exact joint resonance (w = omega_c = omega_qd),
// R = (g^2/(g^2 + gamma*kappa))^2.
inline double joint_resonance_reflectance(const SystemParams& p) {
    p.validate();
    const double x = p.g * p.g / (p.g * p.g + p.gamma * p.kappa);
    return x * x;
}

// Reflectivity as seen by the detector: imperfect mode matching reduces the
// dip depth and a multiplicative linear baseline is applied on top.
inline double observed_reflectivity(double omega, const SystemParams& p,
                                    const OpticalNuisance& n, double omega_ref) {
    n.validate();
    const double base = n.base_a + n.base_b * (omega - omega_ref);
    return base * (1.0 - n.eta * (1.0 - reflectance(omega, p)));
}

// Q = E/(2*kappa): the dip FWHM is 2*kappa in the field decay convention.
inline double q_factor(double kappa, double photon_energy) {
    if (!(kappa > 0.0) || !(photon_energy > 0.0))
        throw std::domain_error("q_factor: kappa and photon_energy must be > 0");
    return photon_energy / (2.0 * kappa);
}

inline double kappa_from_q(double q, double photon_energy) {
    if (!(q > 0.0) || !(photon_energy > 0.0))
        throw std::domain_error("kappa_from_q: q and photon_energy must be > 0");
    return photon_energy / (2.0 * q);
}

// Coupling-regime classification. Strong coupling sets in at g/kappa > 0.5;
// the [0.4, 0.5] band is labelled near_strong.
inline RegimeReport regime(const SystemParams& p) {
    p.validate();
    RegimeReport rep;
    rep.ratio_g_kappa = p.g / p.kappa;
    rep.cooperativity = p.g * p.g / (p.kappa * p.gamma);
    if (rep.ratio_g_kappa > 0.5)
        rep.regime = Regime::strong;
    else if (rep.ratio_g_kappa >= 0.4)
        rep.regime = Regime::near_strong;
    else
        rep.regime = Regime::weak_purcell;
    return rep;
}

// F_p = tau_bulk / tau_cavity.
inline double purcell_factor(double tau_bulk_ps, double tau_cav_ps) {
    if (!(tau_bulk_ps > 0.0) || !(tau_cav_ps > 0.0))
        throw std::domain_error("purcell_factor: lifetimes must be > 0");
    return tau_bulk_ps / tau_cav_ps;
}

// Lifetime versus emitter-cavity detuning with a Lorentzian rate enhancement
// of width kappa:
//   1/tau(D) = 1/tau_off + (1/tau_on - 1/tau_off) * kappa^2/(kappa^2 + D^2).
inline double lifetime_vs_detuning(double delta_uev, double tau_off_ps,
                                   double tau_on_ps, double kappa_uev) {
    if (!(tau_on_ps > 0.0) || !(tau_off_ps > tau_on_ps))
        throw std::domain_error("lifetime_vs_detuning: need tau_off > tau_on > 0");
    if (!(kappa_uev > 0.0))
        throw std::domain_error("lifetime_vs_detuning: kappa must be > 0");
    const double lorentz = kappa_uev * kappa_uev /
                           (kappa_uev * kappa_uev + delta_uev * delta_uev);
    const double rate = 1.0 / tau_off_ps +
                        (1.0 / tau_on_ps - 1.0 / tau_off_ps) * lorentz;
    return 1.0 / rate;
}

// Two-mode variant for a polarization doublet: the cavity-enhanced rates of
// the H and V modes add on top of the far-detuned rate.
struct TwoModeLifetimeModel {
    double tau_off_ps = 0.0;  // lifetime far from both modes
    double tau_on_h_ps = 0.0; // lifetime on resonance with H (V detuned far)
    double tau_on_v_ps = 0.0;
    double e_h_uev = 0.0;     // mode energies
    double e_v_uev = 0.0;
    double kappa_h_uev = 0.0; // mode field decay rates
    double kappa_v_uev = 0.0;

    double lifetime(double energy_uev) const {
        auto term = [&](double tau_on, double e_m, double km) {
            const double d = energy_uev - e_m;
            return (1.0 / tau_on - 1.0 / tau_off_ps) * km * km / (km * km + d * d);
        };
        const double rate = 1.0 / tau_off_ps +
                            term(tau_on_h_ps, e_h_uev, kappa_h_uev) +
                            term(tau_on_v_ps, e_v_uev, kappa_v_uev);
        return 1.0 / rate;
    }
};

// Detected photon rate for a pulsed source: pump rate times the extraction
// efficiency into the collection mode times the transmission of the setup.
inline double photon_budget(double pump_rate_hz, double extraction_eff,
                            double setup_eff) {
    if (!(pump_rate_hz > 0.0))
        throw std::domain_error("photon_budget: pump_rate must be > 0");
    if (extraction_eff < 0.0 || extraction_eff > 1.0 ||
        setup_eff < 0.0 || setup_eff > 1.0)
        throw std::domain_error("photon_budget: efficiencies must be in [0,1]");
    return pump_rate_hz * extraction_eff * setup_eff;
}

// Ideal Purcell factor F_max = (3/(4 pi^2)) * Q / V_eff for an emitter at the
// field antinode with perfect dipole alignment, V_eff in units of (lambda/n)^3.
// Real emitters land far below this bound: spatial offset from the antinode
// and polarization mismatch between dipole and mode enter quadratically.
inline double theoretical_purcell_max(double q, double v_eff_in_cubic_wavelengths) {
    if (!(q > 0.0) || !(v_eff_in_cubic_wavelengths > 0.0))
        throw std::domain_error("theoretical_purcell_max: inputs must be > 0");
    return 3.0 / (4.0 * std::numbers::pi * std::numbers::pi) * q /
           v_eff_in_cubic_wavelengths;
}

}
