#pragma once

// Bias tuning of a charge-tunable emitter: a quadratic Stark curve shared
// across charge plateaus, each plateau adding its binding-energy shift.
// Crossings with fixed cavity modes are found in closed form per plateau,
// including the degenerate case of a flat plateau sitting on a mode.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cqed::tuning {

struct StarkModel {
    double e0_uev = 0.0;               // transition energy at v_ref
    double slope_uev_per_v = 0.0;
    double curvature_uev_per_v2 = 0.0;
    double v_ref = 0.0;

    double energy(double bias_v) const {
        const double x = bias_v - v_ref;
        return e0_uev + slope_uev_per_v * x + curvature_uev_per_v2 * x * x;
    }
};

struct ChargePlateau {
    std::string label;
    double v_lo = 0.0;
    double v_hi = 0.0;       // half-open interval [v_lo, v_hi)
    double shift_uev = 0.0;  // binding shift added to the Stark curve
};

struct ChargePlateauModel {
    StarkModel stark;
    std::vector<ChargePlateau> plateaus;  // ascending and non-overlapping

    void validate() const {
        if (plateaus.empty())
            throw std::invalid_argument("tuning: no charge plateaus defined");
        for (std::size_t i = 0; i < plateaus.size(); ++i) {
            if (!(plateaus[i].v_lo < plateaus[i].v_hi))
                throw std::invalid_argument("tuning: empty plateau interval");
            if (i > 0 && plateaus[i].v_lo < plateaus[i - 1].v_hi)
                throw std::invalid_argument(
                    "tuning: plateaus overlap or are out of order");
        }
    }
    double v_min() const { return plateaus.front().v_lo; }
    double v_max() const { return plateaus.back().v_hi; }

    const ChargePlateau& plateau_at(double bias_v) const {
        for (const auto& p : plateaus)
            if (bias_v >= p.v_lo && bias_v < p.v_hi) return p;
        throw std::out_of_range("tuning: bias " + std::to_string(bias_v) +
                                " V outside the gated range [" +
                                std::to_string(v_min()) + ", " +
                                std::to_string(v_max()) + ")");
    }
    double transition_energy(double bias_v) const {
        return stark.energy(bias_v) + plateau_at(bias_v).shift_uev;
    }

    // charge-tunable reference device: neutral line with a 6 meV
    // binding-shifted charged line above the tunneling threshold
    static ChargePlateauModel example() {
        ChargePlateauModel m;
        m.stark = {1.3014e6, 400.0, -80.0, 0.0};
        m.plateaus = {{"neutral", -0.20, 0.30, 0.0},
                      {"charged", 0.30, 0.65, -6000.0}};
        return m;
    }
};

struct CavityMode {
    std::string label;
    double energy_uev = 0.0;
    double kappa_uev = 0.0;  // HWHM of the Lorentzian mode line
};

struct ResonanceCrossing {
    double bias_v = 0.0;
    std::string mode_label;
    std::string plateau_label;
    bool degenerate = false;  // a flat plateau matches the mode everywhere
    double interval_lo = 0.0;
    double interval_hi = 0.0;
};

namespace detail {

inline constexpr double kDegenerateTolUev = 1e-9;

// roots of beta x^2 + p x + c = 0, numerically stable form
inline int quadratic_roots(double beta, double p, double c, double out[2]) {
    if (beta == 0.0) {
        if (p == 0.0) return 0;
        out[0] = -c / p;
        return 1;
    }
    const double disc = p * p - 4.0 * beta * c;
    if (disc < 0.0) return 0;
    const double sq = std::sqrt(disc);
    if (p == 0.0) {
        out[0] = -sq / (2.0 * beta);
        out[1] = sq / (2.0 * beta);
        return disc == 0.0 ? 1 : 2;
    }
    const double q = -0.5 * (p + std::copysign(sq, p));
    out[0] = q / beta;
    if (disc == 0.0) return 1;
    out[1] = c / q;
    return 2;
}

}  // namespace detail

inline std::vector<ResonanceCrossing> find_resonance_crossings(
    const ChargePlateauModel& model, const std::vector<CavityMode>& modes) {
    model.validate();
    std::vector<ResonanceCrossing> out;
    const double beta = model.stark.curvature_uev_per_v2;
    const double p = model.stark.slope_uev_per_v;
    for (const auto& mode : modes) {
        for (const auto& plat : model.plateaus) {
            const double c =
                model.stark.e0_uev + plat.shift_uev - mode.energy_uev;
            if (beta == 0.0 && p == 0.0) {
                if (std::abs(c) < detail::kDegenerateTolUev) {
                    ResonanceCrossing r;
                    r.bias_v = 0.5 * (plat.v_lo + plat.v_hi);
                    r.mode_label = mode.label;
                    r.plateau_label = plat.label;
                    r.degenerate = true;
                    r.interval_lo = plat.v_lo;
                    r.interval_hi = plat.v_hi;
                    out.push_back(r);
                }
                continue;
            }
            double roots[2];
            const int n = detail::quadratic_roots(beta, p, c, roots);
            for (int i = 0; i < n; ++i) {
                const double v = roots[i] + model.stark.v_ref;
                if (v < plat.v_lo || v >= plat.v_hi) continue;
                ResonanceCrossing r;
                r.bias_v = v;
                r.mode_label = mode.label;
                r.plateau_label = plat.label;
                out.push_back(r);
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const ResonanceCrossing& a, const ResonanceCrossing& b) {
                  return a.bias_v < b.bias_v;
              });
    return out;
}

struct BiasMap {
    std::vector<double> bias_v;      // rows
    std::vector<double> energy_uev;  // columns
    std::vector<double> intensity;   // row-major, rows x columns

    double at(std::size_t row, std::size_t col) const {
        return intensity[row * energy_uev.size() + col];
    }
};

// Photoluminescence-style map: a Stark-shifted emitter stripe over fixed
// mode lines, with the stripe brightened where it meets a mode.
inline BiasMap simulate_bias_map(const ChargePlateauModel& model,
                                 const std::vector<CavityMode>& modes,
                                 const std::vector<double>& bias_grid,
                                 const std::vector<double>& energy_grid,
                                 double emitter_linewidth_uev = 25.0,
                                 double crossing_boost = 4.0) {
    model.validate();
    if (bias_grid.empty() || energy_grid.empty())
        throw std::invalid_argument("tuning: bias map needs non-empty grids");
    if (!(emitter_linewidth_uev > 0.0))
        throw std::invalid_argument("tuning: emitter linewidth must be positive");

    BiasMap map;
    map.bias_v = bias_grid;
    map.energy_uev = energy_grid;
    map.intensity.assign(bias_grid.size() * energy_grid.size(), 0.0);

    const double gl = emitter_linewidth_uev;
    for (std::size_t r = 0; r < bias_grid.size(); ++r) {
        const double e_qd = model.transition_energy(bias_grid[r]);
        double boost = 1.0;
        for (const auto& m : modes) {
            const double d = e_qd - m.energy_uev;
            boost += crossing_boost * m.kappa_uev * m.kappa_uev /
                     (m.kappa_uev * m.kappa_uev + d * d);
        }
        for (std::size_t cidx = 0; cidx < energy_grid.size(); ++cidx) {
            const double e = energy_grid[cidx];
            double v = boost * gl * gl /
                       (gl * gl + (e - e_qd) * (e - e_qd));
            for (const auto& m : modes) {
                const double dm = e - m.energy_uev;
                v += 0.2 * m.kappa_uev * m.kappa_uev /
                     (m.kappa_uev * m.kappa_uev + dm * dm);
            }
            map.intensity[r * energy_grid.size() + cidx] = v;
        }
    }
    return map;
}

}  // namespace cqed::tuning
