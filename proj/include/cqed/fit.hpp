#pragma once

// Damped least-squares engine used by every curve fit in this project.
//
// Levenberg-Marquardt with Marquardt diagonal scaling and a gain-ratio
// update: a step that agrees with the local quadratic model (ratio > 0.9)
// switches the next attempt to an undamped Gauss-Newton step, so linear
// problems finish in two iterations. Bounds use smooth parameter
// transforms (sinusoidal for two-sided, hyperbolic for one-sided) so the
// internal optimization space is unconstrained; the covariance is mapped
// back through the transform Jacobian.
//
// Weighting conventions:
//   uniform         residuals are y - f(x); covariance is scaled by the
//                   reduced chi-square (noise level estimated from the fit)
//   poisson_neyman  residuals (y - f)/sqrt(max(y,1))
//   poisson_mle     signed deviance residuals; exact Poisson likelihood
// Problems built directly from a residual callable behave like `uniform`
// unless residuals_in_sigma_units is set.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cqed::fit {

enum class Weighting { uniform, poisson_neyman, poisson_mle };
enum class CovScale { automatic, none, reduced_chi2 };

struct Parameter {
    std::string name;
    double value = 0.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    bool fixed = false;
};

struct FitProblem {
    // parameters -> residual vector; the quantity minimized is the sum of squares
    std::function<std::vector<double>(const std::vector<double>&)> residuals;
    std::vector<Parameter> params;
    Weighting weights = Weighting::uniform;
    // true when residuals are already unit-variance (sigma-normalized or
    // Poisson); controls CovScale::automatic and the profile target
    bool residuals_in_sigma_units = false;
    // optional analytic d r_i / d x_j, columns in params order (fixed included)
    std::function<Eigen::MatrixXd(const std::vector<double>&)> jacobian;
};

struct Options {
    int max_iter = 200;
    double ftol = 1e-10;        // relative cost decrease per accepted step
    double gtol = 1e-8;         // gradient infinity-norm
    double xtol = 1e-11;        // step norm relative to the parameter norm
    double jac_rel_step = 1e-6; // central-difference relative step
    double lambda_init = 1e-3;
    double lambda_grow = 10.0;
    double lambda_shrink = 0.1;
    double lambda_max = 1e12;
    int restarts = 0;           // extra randomized starts, best result kept
    std::uint64_t seed = 1;     // restart RNG seed
    CovScale cov_scale = CovScale::automatic;
};

struct FitReport {
    std::vector<std::string> param_names;
    std::vector<double> values;
    std::vector<double> one_sigma;      // 0 for fixed parameters
    Eigen::MatrixXd covariance;         // full order, zero rows/cols for fixed
    double chi2 = 0.0;
    double reduced_chi2 = 0.0;
    int n_iter = 0;                     // outer iterations (Jacobian builds)
    bool converged = false;
    double condition_number = 0.0;      // of J^T J at the solution
    std::vector<std::string> notes;
    int n_data = 0;
    int n_free = 0;
};

struct ProfileInterval {
    double lower = 0.0;          // parameter values at the two crossings
    double upper = 0.0;
    double sigma_minus = 0.0;    // center - lower
    double sigma_plus = 0.0;     // upper - center
    bool bound_limited_lower = false;
    bool bound_limited_upper = false;
};

namespace detail {

struct Transform {
    enum Kind { unconstrained, two_sided, lower_only, upper_only } kind;
    double lo = 0.0, hi = 0.0;

    double to_external(double u) const {
        switch (kind) {
        case two_sided:  return lo + (hi - lo) * (std::sin(u) + 1.0) / 2.0;
        case lower_only: return lo - 1.0 + std::sqrt(u * u + 1.0);
        case upper_only: return hi + 1.0 - std::sqrt(u * u + 1.0);
        default:         return u;
        }
    }
    double to_internal(double x) const {
        switch (kind) {
        case two_sided: {
            const double s = std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0);
            return std::asin(s);
        }
        case lower_only: {
            const double t = x - lo + 1.0;
            return std::sqrt(std::max(t * t - 1.0, 0.0));
        }
        case upper_only: {
            const double t = hi - x + 1.0;
            return std::sqrt(std::max(t * t - 1.0, 0.0));
        }
        default: return x;
        }
    }
    double dxdu(double u) const {
        switch (kind) {
        case two_sided:  return (hi - lo) * std::cos(u) / 2.0;
        case lower_only: return u / std::sqrt(u * u + 1.0);
        case upper_only: return -u / std::sqrt(u * u + 1.0);
        default:         return 1.0;
        }
    }
    static Transform make(const Parameter& p) {
        const bool has_lo = std::isfinite(p.lower);
        const bool has_hi = std::isfinite(p.upper);
        if (has_lo && has_hi) return {two_sided, p.lower, p.upper};
        if (has_lo) return {lower_only, p.lower, 0.0};
        if (has_hi) return {upper_only, 0.0, p.upper};
        return {unconstrained, 0.0, 0.0};
    }
};

// A start exactly on a bound has zero transform derivative (dead gradient);
// nudge strictly inside before seeding the internal coordinates.
inline double nudge_inside(double x, const Parameter& p) {
    const bool has_lo = std::isfinite(p.lower);
    const bool has_hi = std::isfinite(p.upper);
    if (has_lo && has_hi) {
        const double eps = 1e-10 * (p.upper - p.lower);
        return std::clamp(x, p.lower + eps, p.upper - eps);
    }
    if (has_lo && x <= p.lower) return p.lower + 1e-10 * std::max(1.0, std::abs(p.lower));
    if (has_hi && x >= p.upper) return p.upper - 1e-10 * std::max(1.0, std::abs(p.upper));
    return x;
}

inline bool finite_all(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

// Builds a FitProblem from data and a prediction map, applying the
// requested weighting. A nonempty sigma vector overrides the enum with
// per-point (y - f)/sigma residuals.
inline FitProblem make_problem(
    std::function<std::vector<double>(const std::vector<double>&)> prediction,
    std::vector<double> data, std::vector<Parameter> params,
    Weighting weights = Weighting::uniform, std::vector<double> sigma = {}) {
    if (!sigma.empty() && sigma.size() != data.size())
        throw std::invalid_argument("fit: sigma size mismatches data size");
    for (double s : sigma)
        if (!(s > 0.0)) throw std::invalid_argument("fit: sigma values must be positive");

    FitProblem prob;
    prob.params = std::move(params);
    prob.weights = weights;
    prob.residuals_in_sigma_units = !sigma.empty() || weights != Weighting::uniform;
    prob.residuals = [pred = std::move(prediction), y = std::move(data),
                      sig = std::move(sigma), weights](const std::vector<double>& x) {
        std::vector<double> mu = pred(x);
        if (mu.size() != y.size())
            throw std::invalid_argument("fit: prediction size mismatches data size");
        std::vector<double> r(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (!sig.empty()) {
                r[i] = (y[i] - mu[i]) / sig[i];
            } else if (weights == Weighting::poisson_neyman) {
                r[i] = (y[i] - mu[i]) / std::sqrt(std::max(y[i], 1.0));
            } else if (weights == Weighting::poisson_mle) {
                const double m = std::max(mu[i], 1e-12);
                double dev;
                if (y[i] > 0.0)
                    dev = 2.0 * (m - y[i] + y[i] * std::log(y[i] / m));
                else
                    dev = 2.0 * m;
                r[i] = (y[i] >= m ? 1.0 : -1.0) * std::sqrt(std::max(dev, 0.0));
            } else {
                r[i] = y[i] - mu[i];
            }
        }
        return r;
    };
    return prob;
}

// Central-difference Jacobian of a vector map, in the map's own space.
inline Eigen::MatrixXd numeric_jacobian(
    const std::function<std::vector<double>(const std::vector<double>&)>& fn,
    const std::vector<double>& x, double rel_step = 1e-6) {
    const auto f0 = fn(x);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(f0.size()),
                        static_cast<Eigen::Index>(x.size()));
    std::vector<double> xp = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(std::abs(x[j]), 1.0);
        xp[j] = x[j] + h;
        const auto fp = fn(xp);
        xp[j] = x[j] - h;
        const auto fm = fn(xp);
        xp[j] = x[j];
        for (std::size_t i = 0; i < f0.size(); ++i)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (fp[i] - fm[i]) / (2.0 * h);
    }
    return jac;
}

namespace detail {

struct LmState {
    std::vector<double> u;      // internal coordinates of free parameters
    std::vector<double> r;
    double chi2 = 0.0;
    int n_iter = 0;
    bool converged = false;
    std::vector<std::string> notes;
};

inline LmState run_lm(const FitProblem& prob, const Options& opts,
                      const std::vector<std::size_t>& free_idx,
                      const std::vector<Transform>& tf,
                      std::vector<double> u,
                      const std::vector<double>& fixed_template) {
    const auto k = free_idx.size();
    auto to_full = [&](const std::vector<double>& ui) {
        std::vector<double> x = fixed_template;
        for (std::size_t j = 0; j < k; ++j) x[free_idx[j]] = tf[j].to_external(ui[j]);
        return x;
    };
    auto eval = [&](const std::vector<double>& ui) { return prob.residuals(to_full(ui)); };
    auto chi2_of = [](const std::vector<double>& r) {
        double s = 0.0;
        for (double v : r) s += v * v;
        return s;
    };

    LmState st;
    st.u = std::move(u);
    st.r = eval(st.u);
    if (!finite_all(st.r))
        throw std::invalid_argument("fit: residuals not finite at the initial point");
    st.chi2 = chi2_of(st.r);
    const auto m = st.r.size();

    auto build_jacobian = [&](const std::vector<double>& ui) {
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        if (prob.jacobian) {
            const Eigen::MatrixXd jx = prob.jacobian(to_full(ui));
            for (std::size_t j = 0; j < k; ++j)
                jac.col(static_cast<Eigen::Index>(j)) =
                    jx.col(static_cast<Eigen::Index>(free_idx[j])) * tf[j].dxdu(ui[j]);
        } else {
            std::vector<double> up = ui;
            for (std::size_t j = 0; j < k; ++j) {
                const double h = opts.jac_rel_step * std::max(std::abs(ui[j]), 1.0);
                up[j] = ui[j] + h;
                const auto rp = eval(up);
                up[j] = ui[j] - h;
                const auto rm = eval(up);
                up[j] = ui[j];
                for (std::size_t i = 0; i < m; ++i)
                    jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        return jac;
    };

    double lambda = opts.lambda_init;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const Eigen::MatrixXd jac = build_jacobian(st.u);
        const Eigen::Map<const Eigen::VectorXd> rv(st.r.data(),
                                                   static_cast<Eigen::Index>(m));
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * rv;
        if (grad.size() > 0 && grad.lpNorm<Eigen::Infinity>() < opts.gtol) {
            st.converged = true;
            st.notes.push_back("gradient below tolerance");
            break;
        }
        ++st.n_iter;

        Eigen::VectorXd dscale = a.diagonal();
        const double dmax = dscale.maxCoeff();
        for (Eigen::Index j = 0; j < dscale.size(); ++j)
            dscale(j) = std::max(dscale(j), std::max(1e-32 * dmax, 1e-300));

        double lt = lambda;
        bool accepted = false;
        bool first_trial = true;
        double best_rejected = std::numeric_limits<double>::infinity();
        while (true) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += lt * dscale;
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            Eigen::VectorXd step;
            bool solvable = ldlt.info() == Eigen::Success;
            if (solvable) {
                step = ldlt.solve(-grad);
                solvable = step.allFinite();
            }
            if (solvable && first_trial) {
                // even the model's own best-case decrease is negligible
                const double pred0 =
                    lt * step.dot(dscale.asDiagonal() * step) - grad.dot(step);
                if (pred0 <= opts.ftol * st.chi2) {
                    st.converged = true;
                    st.notes.push_back("predicted decrease below tolerance");
                    break;
                }
                // an undamped proposal that no longer moves the parameters
                if (lt <= opts.lambda_init) {
                    double unorm = 0.0;
                    for (double uj : st.u) unorm += uj * uj;
                    if (step.norm() <=
                        opts.xtol * (std::sqrt(unorm) + opts.xtol)) {
                        st.converged = true;
                        st.notes.push_back("step below tolerance");
                        break;
                    }
                }
            }
            first_trial = false;
            if (solvable) {
                std::vector<double> ut(k);
                for (std::size_t j = 0; j < k; ++j)
                    ut[j] = st.u[j] + step(static_cast<Eigen::Index>(j));
                const auto rt = eval(ut);
                const double c2 = finite_all(rt)
                                      ? chi2_of(rt)
                                      : std::numeric_limits<double>::infinity();
                best_rejected = std::min(best_rejected, c2);
                if (c2 < st.chi2) {
                    const double pred =
                        lt * step.dot(dscale.asDiagonal() * step) - grad.dot(step);
                    const double rho = pred > 0.0 ? (st.chi2 - c2) / pred : 0.0;
                    const double drop = st.chi2 - c2;
                    st.u = std::move(ut);
                    st.r = rt;
                    const double old = st.chi2;
                    st.chi2 = c2;
                    // near-perfect quadratic agreement: try pure Gauss-Newton next
                    lambda = rho > 0.9 ? 0.0
                                       : (lt == 0.0 ? opts.lambda_init
                                                    : lt * opts.lambda_shrink);
                    accepted = true;
                    if (drop <= opts.ftol * old) {
                        st.converged = true;
                        st.notes.push_back("cost decrease below tolerance");
                    }
                    break;
                }
            }
            lt = lt == 0.0 ? opts.lambda_init : lt * opts.lambda_grow;
            if (lt > opts.lambda_max) break;
        }
        if (!accepted) {
            if (!st.converged) {
                // every trial direction is flat below the requested resolution
                if (best_rejected - st.chi2 <= opts.ftol * st.chi2) {
                    st.converged = true;
                    st.notes.push_back("cost flat within tolerance at damping limit");
                } else {
                    st.notes.push_back("no downhill step found before damping limit");
                }
            }
            break;
        }
        if (st.converged) break;
    }
    if (!st.converged && st.n_iter >= opts.max_iter)
        st.notes.push_back("iteration limit reached");
    return st;
}

}  // namespace detail

inline FitReport least_squares(const FitProblem& prob, const Options& opts = {}) {
    if (!prob.residuals) throw std::invalid_argument("fit: missing residual map");
    if (prob.params.empty()) throw std::invalid_argument("fit: no parameters");
    const auto n = prob.params.size();

    std::vector<std::size_t> free_idx;
    std::vector<double> fixed_template(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = prob.params[i];
        if (!(p.lower < p.upper))
            throw std::invalid_argument("fit: parameter '" + p.name +
                                        "' has lower >= upper");
        if (p.value < p.lower || p.value > p.upper)
            throw std::invalid_argument("fit: parameter '" + p.name +
                                        "' starts outside its bounds");
        fixed_template[i] = p.value;
        if (!p.fixed) free_idx.push_back(i);
    }
    if (free_idx.empty()) throw std::invalid_argument("fit: no free parameters");
    const auto k = free_idx.size();

    std::vector<detail::Transform> tf(k);
    std::vector<double> u0(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& p = prob.params[free_idx[j]];
        tf[j] = detail::Transform::make(p);
        u0[j] = tf[j].to_internal(detail::nudge_inside(p.value, p));
    }

    detail::LmState best = detail::run_lm(prob, opts, free_idx, tf, u0, fixed_template);
    if (opts.restarts > 0) {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int t = 0; t < opts.restarts; ++t) {
            std::vector<double> ur(k);
            for (std::size_t j = 0; j < k; ++j)
                ur[j] = u0[j] + gauss(rng) * std::max(std::abs(u0[j]), 1.0);
            try {
                detail::LmState trial =
                    detail::run_lm(prob, opts, free_idx, tf, ur, fixed_template);
                if (trial.chi2 < best.chi2) {
                    trial.notes.push_back("randomized restart " + std::to_string(t + 1) +
                                          " selected");
                    best = std::move(trial);
                }
            } catch (const std::invalid_argument&) {
                // restart landed where the model is undefined; skip it
            }
        }
    }

    FitReport rep;
    rep.n_data = static_cast<int>(best.r.size());
    rep.n_free = static_cast<int>(k);
    rep.chi2 = best.chi2;
    rep.n_iter = best.n_iter;
    rep.converged = best.converged;
    rep.notes = std::move(best.notes);
    rep.param_names.reserve(n);
    for (const auto& p : prob.params) rep.param_names.push_back(p.name);
    rep.values = fixed_template;
    for (std::size_t j = 0; j < k; ++j)
        rep.values[free_idx[j]] = tf[j].to_external(best.u[j]);

    const int dof = rep.n_data - rep.n_free;
    rep.reduced_chi2 =
        dof > 0 ? rep.chi2 / dof : std::numeric_limits<double>::quiet_NaN();

    // covariance from a fresh Jacobian at the solution
    Eigen::MatrixXd jac;
    {
        FitProblem at = prob;  // reuse the analytic path when present
        auto to_full = [&](const std::vector<double>& ui) {
            std::vector<double> x = fixed_template;
            for (std::size_t j = 0; j < k; ++j) x[free_idx[j]] = tf[j].to_external(ui[j]);
            return x;
        };
        jac.resize(rep.n_data, static_cast<Eigen::Index>(k));
        if (prob.jacobian) {
            const Eigen::MatrixXd jx = prob.jacobian(to_full(best.u));
            for (std::size_t j = 0; j < k; ++j)
                jac.col(static_cast<Eigen::Index>(j)) =
                    jx.col(static_cast<Eigen::Index>(free_idx[j])) * tf[j].dxdu(best.u[j]);
        } else {
            std::vector<double> up = best.u;
            for (std::size_t j = 0; j < k; ++j) {
                const double h = opts.jac_rel_step * std::max(std::abs(best.u[j]), 1.0);
                up[j] = best.u[j] + h;
                const auto rp = prob.residuals(to_full(up));
                up[j] = best.u[j] - h;
                const auto rm = prob.residuals(to_full(up));
                up[j] = best.u[j];
                for (int i = 0; i < rep.n_data; ++i)
                    jac(i, static_cast<Eigen::Index>(j)) = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
    }
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU |
                                                       Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    const double smin = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
    rep.condition_number = smin > 0.0 ? smax / smin
                                      : std::numeric_limits<double>::infinity();

    const double pinv_tol =
        smax * static_cast<double>(std::max<Eigen::Index>(a.rows(), a.cols())) *
        std::numeric_limits<double>::epsilon();
    Eigen::VectorXd inv_sv = sv;
    bool rank_deficient = false;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > pinv_tol) {
            inv_sv(i) = 1.0 / sv(i);
        } else {
            inv_sv(i) = 0.0;
            rank_deficient = true;
        }
    }
    Eigen::MatrixXd cov_int =
        svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    if (rank_deficient)
        rep.notes.push_back("normal equations rank-deficient; singular directions "
                            "dropped from the covariance");

    const bool scale =
        opts.cov_scale == CovScale::reduced_chi2 ||
        (opts.cov_scale == CovScale::automatic && !prob.residuals_in_sigma_units);
    if (scale) {
        if (dof > 0) {
            cov_int *= rep.reduced_chi2;
            rep.notes.push_back("covariance scaled by reduced chi-square");
        } else {
            rep.notes.push_back("no spare degrees of freedom; covariance unscaled");
        }
    }

    rep.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                           static_cast<Eigen::Index>(n));
    for (std::size_t a2 = 0; a2 < k; ++a2)
        for (std::size_t b2 = 0; b2 < k; ++b2) {
            const double t = tf[a2].dxdu(best.u[a2]) * tf[b2].dxdu(best.u[b2]);
            rep.covariance(static_cast<Eigen::Index>(free_idx[a2]),
                           static_cast<Eigen::Index>(free_idx[b2])) =
                t * cov_int(static_cast<Eigen::Index>(a2),
                            static_cast<Eigen::Index>(b2));
        }
    rep.covariance = ((rep.covariance + rep.covariance.transpose()) / 2.0).eval();
    rep.one_sigma.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        rep.one_sigma[i] =
            std::sqrt(std::max(rep.covariance(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(i)),
                               0.0));
    return rep;
}

// Chi-square profile interval for one parameter: scans the parameter with
// everything else re-optimized until the cost rises by one sigma-unit
// (exactly 1 for sigma-normalized residuals; the reduced chi-square
// otherwise, matching the covariance scaling). Asymmetric by construction.
inline ProfileInterval profile_uncertainty(const FitProblem& prob,
                                           const FitReport& report,
                                           const std::string& param_name,
                                           const Options& opts = {}) {
    if (!report.converged)
        throw std::invalid_argument("profile: requires a converged fit");
    std::size_t target_idx = prob.params.size();
    for (std::size_t i = 0; i < prob.params.size(); ++i)
        if (prob.params[i].name == param_name) target_idx = i;
    if (target_idx == prob.params.size())
        throw std::invalid_argument("profile: unknown parameter '" + param_name + "'");
    if (prob.params[target_idx].fixed)
        throw std::invalid_argument("profile: parameter '" + param_name +
                                    "' is fixed, not profilable");

    const bool sigma_units =
        prob.residuals_in_sigma_units || opts.cov_scale == CovScale::none;
    const double delta_target =
        sigma_units ? 1.0
                    : (report.reduced_chi2 > 0.0 && std::isfinite(report.reduced_chi2)
                           ? report.reduced_chi2
                           : 1.0);

    Options inner = opts;
    inner.restarts = 0;
    auto chi2_at = [&](double x) {
        FitProblem sub = prob;
        sub.params = prob.params;
        for (std::size_t i = 0; i < sub.params.size(); ++i)
            sub.params[i].value = report.values[i];
        sub.params[target_idx].value = x;
        sub.params[target_idx].fixed = true;
        bool any_free = false;
        for (const auto& p : sub.params) any_free |= !p.fixed;
        if (!any_free) {
            const auto r = prob.residuals([&] {
                std::vector<double> xs(report.values);
                xs[target_idx] = x;
                return xs;
            }());
            double s = 0.0;
            for (double v : r) s += v * v;
            return s;
        }
        return least_squares(sub, inner).chi2;
    };

    const double center = report.values[target_idx];
    const double sigma0 = report.one_sigma[target_idx] > 0.0
                              ? report.one_sigma[target_idx]
                              : 1e-3 * std::max(std::abs(center), 1.0);
    const double lo_bound = prob.params[target_idx].lower;
    const double hi_bound = prob.params[target_idx].upper;

    ProfileInterval out;
    auto solve_side = [&](int dir, bool& bound_limited) {
        const double bound = dir > 0 ? hi_bound : lo_bound;
        double step = sigma0;
        double inside = center;          // last point with delta below target
        double outside = 0.0;
        bool found = false;
        for (int i = 0; i < 60 && !found; ++i) {
            double x = center + dir * step;
            bool clipped = false;
            if ((dir > 0 && x >= bound) || (dir < 0 && x <= bound)) {
                x = bound;
                clipped = true;
            }
            const double d = chi2_at(x) - report.chi2;
            if (d >= delta_target) {
                outside = x;
                found = true;
            } else {
                inside = x;
                if (clipped) {
                    bound_limited = true;
                    return bound;
                }
                step *= 1.6;
            }
        }
        if (!found) {
            bound_limited = std::isfinite(bound);
            return std::isfinite(bound) ? bound : center + dir * step;
        }
        for (int i = 0; i < 80; ++i) {
            const double mid = 0.5 * (inside + outside);
            if (mid == inside || mid == outside) break;
            if (chi2_at(mid) - report.chi2 < delta_target)
                inside = mid;
            else
                outside = mid;
            if (std::abs(outside - inside) <
                1e-10 * std::max(std::abs(center), sigma0))
                break;
        }
        return 0.5 * (inside + outside);
    };

    out.lower = solve_side(-1, out.bound_limited_lower);
    out.upper = solve_side(+1, out.bound_limited_upper);
    out.sigma_minus = center - out.lower;
    out.sigma_plus = out.upper - center;
    return out;
}

}  // namespace cqed::fit
