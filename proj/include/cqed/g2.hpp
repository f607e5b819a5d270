#pragma once

// Pulsed photon-correlation histograms: synthetic coincidence records for
// a pulsed single-photon emitter and the area-ratio estimator of g2(0).
//
// The histogram model superposes two-sided exponential peaks of unit area
// at integer multiples of the repetition period; the central peak carries
// the composed zero-delay correlation
//     s = 1 - (1-b)^2 (1 - g2_emitter)
// for background fraction b (b alone gives the familiar 2b - b^2). Peak
// areas are integrated exactly per bin, so simulation and estimation share
// no sampling bias.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cqed::g2 {

struct PulsedEmitter {
    double lifetime_ps = 137.0;
    double g2_zero_target = 0.0;    // intrinsic zero-delay correlation
    double background_fraction = 0.0;  // fraction of detected photons

    void validate() const {
        if (!(lifetime_ps > 0.0))
            throw std::invalid_argument("g2: lifetime must be positive");
        if (g2_zero_target < 0.0 || g2_zero_target > 1.0)
            throw std::invalid_argument("g2: target g2(0) must lie in [0, 1]");
        if (background_fraction < 0.0 || background_fraction >= 1.0)
            throw std::invalid_argument(
                "g2: background fraction must lie in [0, 1)");
    }
    double central_scale() const {
        const double clean = 1.0 - background_fraction;
        return 1.0 - clean * clean * (1.0 - g2_zero_target);
    }
};

struct G2Histogram {
    double rep_period_ns = 0.0;
    double window_ns = 0.0;   // per-peak integration window
    double bin_width_ns = 0.0;
    double t_start_ns = 0.0;  // left edge of the first bin
    std::vector<std::uint64_t> counts;

    int n_bins() const { return static_cast<int>(counts.size()); }
    double center(int i) const { return t_start_ns + (i + 0.5) * bin_width_ns; }
    void validate() const {
        if (!(rep_period_ns > 0.0))
            throw std::invalid_argument("g2: rep period must be positive");
        if (!(window_ns > 0.0) || window_ns > rep_period_ns)
            throw std::invalid_argument(
                "g2: window must be positive and at most one rep period");
        if (!(bin_width_ns > 0.0))
            throw std::invalid_argument("g2: bin width must be positive");
        if (counts.size() < 16)
            throw std::invalid_argument("g2: histogram too short");
    }
};

struct G2SimResult {
    G2Histogram hist;
    std::vector<std::string> warnings;
};

namespace detail {

// CDF of the two-sided unit-area exponential centered at zero
inline double two_sided_cdf(double t, double tau) {
    return t < 0.0 ? 0.5 * std::exp(t / tau) : 1.0 - 0.5 * std::exp(-t / tau);
}

}  // namespace detail

// Expected counts per bin before Poisson sampling; exposed for tests.
inline std::vector<double> g2_expected_counts(const PulsedEmitter& em,
                                              double rep_rate_hz,
                                              std::uint64_t n_coincidences,
                                              int n_side_peaks,
                                              int bins_per_period) {
    em.validate();
    if (!(rep_rate_hz > 0.0))
        throw std::invalid_argument("g2: rep rate must be positive");
    if (n_side_peaks < 1 || bins_per_period < 16)
        throw std::invalid_argument("g2: histogram geometry too small");

    const double period_ns = 1e9 / rep_rate_hz;
    const double tau_ns = em.lifetime_ps / 1000.0;
    const double bin = period_ns / bins_per_period;
    const int k_max = n_side_peaks;
    const int n_bins = (2 * k_max + 1) * bins_per_period;
    const double t_start = -(k_max + 0.5) * period_ns;

    const double s_central = em.central_scale();
    // n_coincidences is the expected histogram total
    const double side_area =
        static_cast<double>(n_coincidences) / (2.0 * k_max + s_central);

    std::vector<double> mu(n_bins, 0.0);
    for (int k = -(k_max + 3); k <= k_max + 3; ++k) {
        const double weight = k == 0 ? s_central : 1.0;
        if (weight == 0.0) continue;
        const double c = k * period_ns;
        for (int i = 0; i < n_bins; ++i) {
            const double lo = t_start + i * bin - c;
            const double hi = lo + bin;
            mu[i] += side_area * weight *
                     (detail::two_sided_cdf(hi, tau_ns) -
                      detail::two_sided_cdf(lo, tau_ns));
        }
    }
    return mu;
}

inline G2SimResult simulate_g2(const PulsedEmitter& em, double rep_rate_hz,
                               std::uint64_t n_coincidences, std::uint64_t seed,
                               int n_side_peaks = 6, int bins_per_period = 250) {
    const auto mu = g2_expected_counts(em, rep_rate_hz, n_coincidences,
                                       n_side_peaks, bins_per_period);
    const double period_ns = 1e9 / rep_rate_hz;

    G2SimResult out;
    out.hist.rep_period_ns = period_ns;
    out.hist.window_ns = period_ns;  // full inter-peak span
    out.hist.bin_width_ns = period_ns / bins_per_period;
    out.hist.t_start_ns = -(n_side_peaks + 0.5) * period_ns;
    out.hist.counts.resize(mu.size());

    if (period_ns * 1000.0 < 5.0 * em.lifetime_ps)
        out.warnings.push_back(
            "rep period is under five lifetimes; peaks overlap and the "
            "area estimator will mix neighbors");

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < mu.size(); ++i)
        out.hist.counts[i] = static_cast<std::uint64_t>(
            std::poisson_distribution<long long>(std::max(mu[i], 0.0))(rng));
    return out;
}

struct G2Estimate {
    double g2_zero = 0.0;
    double sigma = 0.0;
    double central_area = 0.0;   // counts in the zero-delay window
    double side_mean = 0.0;      // mean side-peak area (counts)
    std::vector<double> side_areas;
    int n_side_peaks = 0;
    double tail_lifetime_ns = 0.0;  // folded side-peak decay estimate
    bool overlap_warning = false;
};

// Central-to-side area ratio with Poisson error propagation.
inline G2Estimate estimate_g2_zero(const G2Histogram& hist) {
    hist.validate();
    const double period = hist.rep_period_ns;
    const double half_window = hist.window_ns / 2.0;
    const double t_end = hist.t_start_ns + hist.n_bins() * hist.bin_width_ns;

    double central = 0.0;
    std::vector<double> side_areas;
    std::vector<std::pair<double, double>> side_samples;  // (|u|, counts)
    {
        // peaks whose full window lies inside the histogram
        const int k_lo = static_cast<int>(
            std::ceil((hist.t_start_ns + half_window) / period - 1e-9));
        const int k_hi = static_cast<int>(
            std::floor((t_end - half_window) / period + 1e-9));
        for (int k = k_lo; k <= k_hi; ++k) {
            double area = 0.0;
            for (int i = 0; i < hist.n_bins(); ++i) {
                const double u = hist.center(i) - k * period;
                if (std::abs(u) > half_window) continue;
                area += static_cast<double>(hist.counts[i]);
                if (k != 0)
                    side_samples.emplace_back(std::abs(u),
                                              static_cast<double>(hist.counts[i]));
            }
            if (k == 0)
                central = area;
            else
                side_areas.push_back(area);
        }
    }
    if (side_areas.size() < 5)
        throw std::invalid_argument(
            "g2: need at least 5 complete side peaks for normalization, have " +
            std::to_string(side_areas.size()));

    const double side_sum =
        std::accumulate(side_areas.begin(), side_areas.end(), 0.0);
    const double side_mean = side_sum / static_cast<double>(side_areas.size());
    if (!(side_mean > 0.0))
        throw std::invalid_argument("g2: side peaks contain no counts");

    G2Estimate est;
    est.n_side_peaks = static_cast<int>(side_areas.size());
    est.central_area = central;
    est.side_areas = side_areas;
    est.side_mean = side_mean;
    est.g2_zero = central / side_mean;
    // Poisson: var(C)/S^2 + C^2 var(S_mean)/S^4, var floors at one count
    const double var_c = std::max(central, 1.0);
    const double var_side_mean =
        side_sum / (static_cast<double>(side_areas.size()) *
                    static_cast<double>(side_areas.size()));
    est.sigma = std::sqrt(var_c / (side_mean * side_mean) +
                          central * central * var_side_mean /
                              (side_mean * side_mean * side_mean * side_mean));

    // folded tail lifetime: mean |u| over the side windows
    double wsum = 0.0, usum = 0.0;
    for (const auto& [u, c] : side_samples) {
        usum += u * c;
        wsum += c;
    }
    est.tail_lifetime_ns = wsum > 0.0 ? usum / wsum : 0.0;
    if (est.tail_lifetime_ns > 0.0) {
        const double tau = est.tail_lifetime_ns;
        const double leak = std::exp(-(period - half_window) / tau) -
                            std::exp(-(period + half_window) / tau);
        est.overlap_warning = leak > 0.05;
    }
    return est;
}

}  // namespace cqed::g2
