#pragma once

// Time-correlated single-photon-counting models: exponential decays
// convolved with an instrument response on a periodic histogram grid,
// Poisson sampling, and reconvolution lifetime fitting.
//
// Everything lives on the histogram grid (n bins of width dt starting at
// t_start, period T = n*dt). Decay components and the IRF kernel are both
// periodic on that grid, so the convolution is circular and conserves
// counts exactly: sum(model) = sum(amplitudes) + n*offset. Lifetime
// extraction is reconvolution fitting, never Fourier division.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqed/fit.hpp"

namespace cqed::tcspc {

struct HistogramGrid {
    int n_bins = 0;
    double bin_width_ps = 0.0;
    double t_start_ps = 0.0;

    double span_ps() const { return n_bins * bin_width_ps; }
    double center(int i) const { return t_start_ps + (i + 0.5) * bin_width_ps; }
    void validate() const {
        if (n_bins < 8) throw std::invalid_argument("tcspc: need at least 8 bins");
        if (!(bin_width_ps > 0.0))
            throw std::invalid_argument("tcspc: bin width must be positive");
    }
};

enum class DecayKind { mono, biexp, mono_plus_background_decay };

inline const char* to_string(DecayKind k) {
    switch (k) {
        case DecayKind::mono: return "mono";
        case DecayKind::biexp: return "biexp";
        default: return "mono_plus_background_decay";
    }
}

struct DecayModel {
    DecayKind kind = DecayKind::mono;
    std::vector<double> amplitudes;    // relative weights, one per component
    std::vector<double> lifetimes_ps;  // one per component
    double offset = 0.0;               // flat floor per bin, same units

    static DecayModel mono(double amplitude, double tau_ps, double offset = 0.0) {
        return {DecayKind::mono, {amplitude}, {tau_ps}, offset};
    }
    static DecayModel biexp(double a_fast, double tau_fast_ps, double a_slow,
                            double tau_slow_ps, double offset = 0.0) {
        return {DecayKind::biexp, {a_fast, a_slow}, {tau_fast_ps, tau_slow_ps},
                offset};
    }
    static DecayModel with_background(double amplitude, double tau_ps, double a_bg,
                                      double tau_bg_ps, double offset = 0.0) {
        return {DecayKind::mono_plus_background_decay,
                {amplitude, a_bg},
                {tau_ps, tau_bg_ps},
                offset};
    }

    std::size_t n_components() const {
        return kind == DecayKind::mono ? 1 : 2;
    }
    void validate() const {
        if (amplitudes.size() != n_components() ||
            lifetimes_ps.size() != n_components())
            throw std::invalid_argument(
                "tcspc: component count mismatches the decay kind");
        for (double a : amplitudes)
            if (!(a >= 0.0))
                throw std::invalid_argument("tcspc: amplitudes must be >= 0");
        for (double tau : lifetimes_ps)
            if (!(tau > 0.0))
                throw std::invalid_argument("tcspc: lifetimes must be positive");
        if (!(offset >= 0.0))
            throw std::invalid_argument("tcspc: offset must be >= 0");
        if (kind == DecayKind::biexp && !(lifetimes_ps[0] < lifetimes_ps[1]))
            throw std::invalid_argument(
                "tcspc: biexp lifetimes must be ordered fast < slow");
    }
};

struct InstrumentResponse {
    enum class Shape { gaussian, tabulated };
    Shape shape = Shape::gaussian;
    double fwhm_ps = 0.0;   // gaussian width; 0 collapses to a delta
    double t0_ps = 0.0;     // peak position (gaussian) or circular shift
    std::vector<double> samples;  // tabulated curve on the histogram grid

    static InstrumentResponse gaussian(double fwhm_ps, double t0_ps) {
        InstrumentResponse irf;
        irf.shape = Shape::gaussian;
        irf.fwhm_ps = fwhm_ps;
        irf.t0_ps = t0_ps;
        return irf;
    }
    static InstrumentResponse tabulated(std::vector<double> samples,
                                        double t0_ps = 0.0) {
        InstrumentResponse irf;
        irf.shape = Shape::tabulated;
        irf.t0_ps = t0_ps;
        irf.samples = std::move(samples);
        return irf;
    }

    // unit-sum kernel on the grid; periodic (wrapped) in both shapes
    std::vector<double> kernel(const HistogramGrid& grid) const {
        grid.validate();
        const int n = grid.n_bins;
        const double period = grid.span_ps();
        std::vector<double> k(n, 0.0);
        if (shape == Shape::gaussian) {
            if (fwhm_ps < 0.0)
                throw std::invalid_argument("tcspc: IRF fwhm must be >= 0");
            if (fwhm_ps < grid.bin_width_ps / 100.0) {
                // effectively a delta: split between neighboring bins
                const double pos = (t0_ps - grid.t_start_ps) / grid.bin_width_ps - 0.5;
                const double fl = std::floor(pos);
                const double frac = pos - fl;
                const long base = static_cast<long>(fl);
                auto wrap = [&](long i) {
                    long m = i % n;
                    return static_cast<int>(m < 0 ? m + n : m);
                };
                k[wrap(base)] += 1.0 - frac;
                k[wrap(base + 1)] += frac;
                return k;
            }
            const double sigma = fwhm_ps / (2.0 * std::sqrt(2.0 * std::log(2.0)));
            for (int i = 0; i < n; ++i) {
                const double d = grid.center(i) - t0_ps;
                for (int w = -2; w <= 2; ++w) {
                    const double u = d + w * period;
                    k[i] += std::exp(-u * u / (2.0 * sigma * sigma));
                }
            }
        } else {
            if (static_cast<int>(samples.size()) != n)
                throw std::invalid_argument(
                    "tcspc: tabulated IRF must match the histogram grid (" +
                    std::to_string(samples.size()) + " samples, " +
                    std::to_string(n) + " bins)");
            // circular shift by t0 with linear interpolation between bins
            const double shift = t0_ps / grid.bin_width_ps;
            const double fl = std::floor(shift);
            const double frac = shift - fl;
            const long s0 = static_cast<long>(fl);
            auto wrap = [&](long i) {
                long m = i % n;
                return static_cast<int>(m < 0 ? m + n : m);
            };
            for (int i = 0; i < n; ++i) {
                const double a = samples[wrap(i - s0)];
                const double b = samples[wrap(i - s0 - 1)];
                k[i] = (1.0 - frac) * a + frac * b;
            }
        }
        const double sum = std::accumulate(k.begin(), k.end(), 0.0);
        if (!(sum > 0.0))
            throw std::invalid_argument("tcspc: IRF kernel has no weight");
        for (double& v : k) v /= sum;
        return k;
    }
};

struct DecayHistogram {
    double bin_width_ps = 0.0;
    double t_start_ps = 0.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total_counts = 0;

    HistogramGrid grid() const {
        return {static_cast<int>(counts.size()), bin_width_ps, t_start_ps};
    }
    void validate() const {
        grid().validate();
        const auto sum = std::accumulate(counts.begin(), counts.end(),
                                         std::uint64_t{0});
        if (sum != total_counts)
            throw std::invalid_argument(
                "tcspc: total_counts disagrees with the bin sum");
    }
};

namespace detail {

// periodic unit-sum exponential anchored at the grid start
inline std::vector<double> component_shape(const HistogramGrid& grid, double tau) {
    const int n = grid.n_bins;
    std::vector<double> d(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        d[i] = std::exp(-(i + 0.5) * grid.bin_width_ps / tau);
        sum += d[i];
    }
    for (double& v : d) v /= sum;
    return d;
}

// circular convolution, kernel truncated to its numerically relevant support
inline std::vector<double> circular_convolve(const std::vector<double>& shape,
                                             const std::vector<double>& kernel) {
    const int n = static_cast<int>(shape.size());
    const double kmax = *std::max_element(kernel.begin(), kernel.end());
    std::vector<int> support;
    for (int m = 0; m < n; ++m)
        if (kernel[m] > 1e-16 * kmax) support.push_back(m);
    std::vector<double> out(n, 0.0);
    for (int m : support) {
        const double km = kernel[m];
        for (int j = 0; j < n; ++j) {
            int idx = j - m;
            if (idx < 0) idx += n;
            out[j] += shape[idx] * km;
        }
    }
    return out;
}

}  // namespace detail

// Expected (noise-free) counts per bin for a decay model seen through an
// instrument: sum_c A_c * (shape_c (*) kernel) + offset.
inline std::vector<double> expected_counts(const DecayModel& model,
                                           const InstrumentResponse& irf,
                                           const HistogramGrid& grid) {
    model.validate();
    grid.validate();
    const auto kernel = irf.kernel(grid);
    std::vector<double> mu(grid.n_bins, model.offset);
    for (std::size_t c = 0; c < model.n_components(); ++c) {
        const auto conv = detail::circular_convolve(
            detail::component_shape(grid, model.lifetimes_ps[c]), kernel);
        for (int i = 0; i < grid.n_bins; ++i) mu[i] += model.amplitudes[c] * conv[i];
    }
    return mu;
}

// Poisson-samples a histogram whose expectation integrates to total_counts.
inline DecayHistogram simulate_decay(const DecayModel& model,
                                     const InstrumentResponse& irf,
                                     const HistogramGrid& grid,
                                     std::uint64_t total_counts,
                                     std::uint64_t seed) {
    if (total_counts == 0)
        throw std::invalid_argument("tcspc: total_counts must be positive");
    if (irf.shape == InstrumentResponse::Shape::gaussian && irf.fwhm_ps > 0.0 &&
        grid.bin_width_ps > irf.fwhm_ps / 3.0)
        throw std::invalid_argument(
            "tcspc: bin width " + std::to_string(grid.bin_width_ps) +
            " ps is too coarse for a " + std::to_string(irf.fwhm_ps) +
            " ps IRF; use bins <= fwhm/3 so the response is resolved");

    auto mu = expected_counts(model, irf, grid);
    const double mu_sum = std::accumulate(mu.begin(), mu.end(), 0.0);
    if (!(mu_sum > 0.0))
        throw std::invalid_argument("tcspc: model predicts zero counts");
    const double scale = static_cast<double>(total_counts) / mu_sum;

    DecayHistogram hist;
    hist.bin_width_ps = grid.bin_width_ps;
    hist.t_start_ps = grid.t_start_ps;
    hist.counts.resize(grid.n_bins);
    std::mt19937_64 rng(seed);
    std::uint64_t sum = 0;
    for (int i = 0; i < grid.n_bins; ++i) {
        const double m = std::max(mu[i] * scale, 0.0);
        const auto c = static_cast<std::uint64_t>(
            std::poisson_distribution<long long>(m)(rng));
        hist.counts[i] = c;
        sum += c;
    }
    hist.total_counts = sum;
    return hist;
}

struct LifetimeFitOptions {
    fit::Weighting weighting = fit::Weighting::poisson_neyman;
    fit::Options engine{};
};

namespace detail {

// tail log-slope lifetime seed, robust enough to start LM
inline double seed_lifetime(const std::vector<double>& y,
                            const HistogramGrid& grid, double offset0,
                            int skip_after_peak) {
    const int n = grid.n_bins;
    const int peak =
        static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (int i = peak + skip_after_peak; i < n; ++i) {
        const double v = y[i] - offset0;
        if (v < std::max(5.0, 3.0 * std::sqrt(offset0 + 1.0))) break;
        const double t = grid.center(i);
        const double ly = std::log(v);
        sx += t;
        sy += ly;
        sxx += t * t;
        sxy += t * ly;
        ++m;
    }
    if (m < 8) return grid.span_ps() / 10.0;
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    if (!(slope < 0.0)) return grid.span_ps() / 10.0;
    return std::clamp(-1.0 / slope, grid.bin_width_ps, 10.0 * grid.span_ps());
}

}  // namespace detail

// Reconvolution fit of a decay histogram. Parameter layout by kind:
//   mono:   amplitude, tau_ps, offset, t0_ps
//   biexp:  a_fast, tau_fast_ps, a_slow, tau_slow_ps, offset, t0_ps
//   mono_plus_background_decay:
//           amplitude, tau_ps, a_bg, tau_bg_ps, offset, t0_ps
inline fit::FitReport fit_lifetime(const DecayHistogram& hist,
                                   const InstrumentResponse& irf, DecayKind kind,
                                   const LifetimeFitOptions& options = {}) {
    hist.validate();
    if (hist.total_counts < 100)
        throw std::invalid_argument(
            "tcspc: need at least 100 counts to fit a lifetime");
    const HistogramGrid grid = hist.grid();
    const int n = grid.n_bins;

    std::vector<double> y(hist.counts.begin(), hist.counts.end());

    std::vector<double> sorted = y;
    std::nth_element(sorted.begin(), sorted.begin() + n / 10, sorted.end());
    const double offset0 = std::max(sorted[n / 10], 0.0);
    const double total = static_cast<double>(hist.total_counts);
    const double a0 = std::max(total - n * offset0, 0.01 * total);
    const int skip =
        irf.shape == InstrumentResponse::Shape::gaussian
            ? static_cast<int>(std::ceil(2.0 * irf.fwhm_ps / grid.bin_width_ps))
            : 3;
    const double tau0 = detail::seed_lifetime(y, grid, offset0, skip);

    const double tau_lo = grid.bin_width_ps / 100.0;
    const double tau_hi = 100.0 * grid.span_ps();
    const double t0_half_range =
        std::max(irf.shape == InstrumentResponse::Shape::gaussian
                     ? 3.0 * irf.fwhm_ps
                     : 0.0,
                 20.0 * grid.bin_width_ps);

    std::vector<fit::Parameter> params;
    if (kind == DecayKind::mono) {
        params = {{"amplitude", a0, 0.0, 10.0 * total},
                  {"tau_ps", tau0, tau_lo, tau_hi},
                  {"offset", offset0, 0.0, total},
                  {"t0_ps", irf.t0_ps, irf.t0_ps - t0_half_range,
                   irf.t0_ps + t0_half_range}};
    } else if (kind == DecayKind::biexp) {
        params = {{"a_fast", 0.7 * a0, 0.0, 10.0 * total},
                  {"tau_fast_ps", tau0 / 3.0, tau_lo, tau_hi},
                  {"a_slow", 0.3 * a0, 0.0, 10.0 * total},
                  {"tau_slow_ps", 3.0 * tau0, tau_lo, tau_hi},
                  {"offset", offset0, 0.0, total},
                  {"t0_ps", irf.t0_ps, irf.t0_ps - t0_half_range,
                   irf.t0_ps + t0_half_range}};
    } else {
        params = {{"amplitude", 0.96 * a0, 0.0, 10.0 * total},
                  {"tau_ps", tau0, tau_lo, tau_hi},
                  {"a_bg", 0.04 * a0, 0.0, 10.0 * total},
                  {"tau_bg_ps", 3.0 * tau0, tau_lo, tau_hi},
                  {"offset", offset0, 0.0, total},
                  {"t0_ps", irf.t0_ps, irf.t0_ps - t0_half_range,
                   irf.t0_ps + t0_half_range}};
    }

    auto prediction = [grid, irf, kind](const std::vector<double>& p) {
        DecayModel m;
        InstrumentResponse shifted = irf;
        if (kind == DecayKind::mono) {
            m = DecayModel::mono(p[0], p[1], p[2]);
            shifted.t0_ps = p[3];
        } else if (kind == DecayKind::biexp) {
            // bypass the ordering check while the optimizer explores
            m.kind = DecayKind::mono_plus_background_decay;
            m.amplitudes = {p[0], p[2]};
            m.lifetimes_ps = {p[1], p[3]};
            m.offset = p[4];
            shifted.t0_ps = p[5];
        } else {
            m = DecayModel::with_background(p[0], p[1], p[2], p[3], p[4]);
            shifted.t0_ps = p[5];
        }
        return expected_counts(m, shifted, grid);
    };

    auto prob = fit::make_problem(prediction, y, params, options.weighting);
    fit::FitReport rep = fit::least_squares(prob, options.engine);

    if (kind != DecayKind::mono) {
        const double t1 = rep.values[1], t2 = rep.values[3];
        if (std::abs(t1 - t2) <= 0.05 * std::max(t1, t2))
            rep.notes.push_back(
                "component lifetimes agree within 5%; a mono fit is better "
                "determined");
        for (int c : {0, 2})
            if (rep.values[c] < 2.0 * rep.one_sigma[c])
                rep.notes.push_back("component '" + rep.param_names[c] +
                                    "' amplitude is consistent with zero");
    }
    return rep;
}

}  // namespace cqed::tcspc
