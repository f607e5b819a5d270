#pragma once

// Unit conventions used throughout:
//   energies and rates in ueV (hbar = 1, so a rate of X ueV decays amplitudes
//   as exp(-X * t / hbar_uev_ps) when t is in ps), times in ps unless a field
//   name says otherwise (g2 histograms use ns), biases in V, lengths in um.
// This header is the only place the ueV <-> ps conversion constant lives.

namespace cqed {

// hbar = 6.582119569e-16 eV s  =  658.2119569 ueV ps
inline constexpr double hbar_uev_ps = 658.2119569;

// Amplitude-decay time in ps for a field decay rate given in ueV.
inline constexpr double amplitude_time_ps(double rate_uev) {
    return hbar_uev_ps / rate_uev;
}

// Population (energy) lifetime in ps for an amplitude decay rate in ueV:
// populations decay at twice the amplitude rate.
inline constexpr double population_lifetime_ps(double amplitude_rate_uev) {
    return hbar_uev_ps / (2.0 * amplitude_rate_uev);
}

}
