#pragma once

// Independent numerical cross-check of the reflection formula and of
// cavity-modified decay: a truncated-Fock-space master-equation solver
// for one two-level emitter coupled to one cavity mode.
//
// Conventions (fixed by demanding the g=0 weak-drive limit reproduce the
// closed-form reflection amplitude exactly):
//   * basis ordering: emitter (x) field, dimension 2*(fock_cutoff+1)
//   * rotating frame of the probe; energies in ueV, times in ps
//   * H = (w_c - w) a'a + (w_qd - w) s+s- + g (a's- + a s+) + i eps (a' - a)
//     The drive phase makes <a> real-positive on resonance, so the
//     reflected amplitude is r = 1 - (kappa/eps) <a> with no phase factor.
//   * two symmetric mirrors, each a collapse operator sqrt(kappa) a
//     (amplitude decay kappa/2 per mirror, kappa total, matching the
//     closed form's single kappa)
//   * dipole collapse sqrt(2*gamma) s- (amplitude decay gamma)

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <boost/numeric/odeint.hpp>

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqed/constants.hpp"
#include "cqed/core.hpp"

namespace cqed::oracle {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

struct HilbertConfig {
    int fock_cutoff = 3;
    // ueV; unset selects kappa/300, well inside the weak-probe regime.
    // An explicit 0 builds the undriven generator.
    std::optional<double> drive_amplitude{};
    // multiplies the cavity collapse rates; anything but 1 deliberately
    // breaks the input-output convention (negative-control testing)
    double collapse_scale = 1.0;

    void validate() const {
        if (fock_cutoff < 1)
            throw std::invalid_argument("oracle: fock_cutoff must be >= 1");
        if (fock_cutoff > 12)
            throw std::invalid_argument(
                "oracle: fock_cutoff > 12 would build an oversized Liouvillian");
        if (drive_amplitude && *drive_amplitude < 0.0)
            throw std::invalid_argument("oracle: drive_amplitude must be >= 0");
        if (collapse_scale <= 0.0)
            throw std::invalid_argument("oracle: collapse_scale must be > 0");
    }
    double effective_drive(double kappa) const {
        return drive_amplitude ? *drive_amplitude : kappa / 300.0;
    }
};

struct Operators {
    int dim = 0;
    Matrix a;            // photon annihilation
    Matrix sigma_minus;  // emitter lowering
    Matrix identity;
};

inline Operators build_operators(int fock_cutoff) {
    const int nf = fock_cutoff + 1;
    const int dim = 2 * nf;

    Matrix a_field = Matrix::Zero(nf, nf);
    for (int n = 1; n < nf; ++n) a_field(n - 1, n) = std::sqrt(double(n));
    Matrix lower = Matrix::Zero(2, 2);
    lower(0, 1) = 1.0;  // |g><e|, basis {g, e}

    Operators ops;
    ops.dim = dim;
    ops.a = Eigen::kroneckerProduct(Matrix::Identity(2, 2), a_field);
    ops.sigma_minus = Eigen::kroneckerProduct(lower, Matrix::Identity(nf, nf));
    ops.identity = Matrix::Identity(dim, dim);
    return ops;
}

inline Matrix build_hamiltonian(const SystemParams& p, const HilbertConfig& cfg,
                                double probe_omega, double drive) {
    const auto ops = build_operators(cfg.fock_cutoff);
    const std::complex<double> i1(0.0, 1.0);
    const Matrix ad = ops.a.adjoint();
    const Matrix sp = ops.sigma_minus.adjoint();
    Matrix h = (p.omega_c - probe_omega) * (ad * ops.a) +
               (p.omega_qd - probe_omega) * (sp * ops.sigma_minus) +
               p.g * (ad * ops.sigma_minus + ops.a * sp);
    if (drive != 0.0) h += i1 * drive * (ad - ops.a);
    return h;
}

namespace detail {

inline Matrix assemble_generator(const SystemParams& p, const HilbertConfig& cfg,
                                 double probe_omega, double drive) {
    const auto ops = build_operators(cfg.fock_cutoff);
    const Matrix id = ops.identity;
    const std::complex<double> i1(0.0, 1.0);

    const Matrix h = build_hamiltonian(p, cfg, probe_omega, drive);
    Matrix lv = -i1 * (Eigen::kroneckerProduct(id, h).eval() -
                       Eigen::kroneckerProduct(h.transpose(), id).eval());

    const double mirror_rate = cfg.collapse_scale * p.kappa;
    const std::vector<Matrix> collapse = {std::sqrt(mirror_rate) * ops.a,
                                          std::sqrt(mirror_rate) * ops.a,
                                          std::sqrt(2.0 * p.gamma) * ops.sigma_minus};
    for (const Matrix& c : collapse) {
        const Matrix cdc = c.adjoint() * c;
        lv += Eigen::kroneckerProduct(c.conjugate(), c).eval();
        lv -= 0.5 * Eigen::kroneckerProduct(id, cdc).eval();
        lv -= 0.5 * Eigen::kroneckerProduct(cdc.transpose(), id).eval();
    }
    return lv;
}

}  // namespace detail

// Generator in column-major vectorization: d vec(rho)/dt = L vec(rho),
// with L in ueV (divide by hbar for time in ps).
inline Matrix build_liouvillian(const SystemParams& p, const HilbertConfig& cfg,
                                double probe_omega) {
    p.validate();
    cfg.validate();
    return detail::assemble_generator(p, cfg, probe_omega,
                                      cfg.effective_drive(p.kappa));
}

inline void check_density(const Matrix& rho) {
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw std::runtime_error("oracle: steady state not Hermitian (dev " +
                                 std::to_string(herm) + ")");
    const double tr = std::abs(rho.trace() - std::complex<double>(1.0, 0.0));
    if (tr > 1e-10)
        throw std::runtime_error("oracle: steady-state trace deviates by " +
                                 std::to_string(tr));
    const Eigen::SelfAdjointEigenSolver<Matrix> es((rho + rho.adjoint()) / 2.0);
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw std::runtime_error("oracle: steady state not positive (min eig " +
                                 std::to_string(es.eigenvalues().minCoeff()) + ")");
}

struct SteadyState {
    Matrix rho;
    std::complex<double> mean_a;
    double mean_photons = 0.0;
};

// Direct dense solve of L rho = 0 with the first row replaced by the trace
// constraint; exact for these <= 26-dimensional spaces.
inline SteadyState solve_steady_state(const SystemParams& p,
                                      const HilbertConfig& cfg,
                                      double probe_omega) {
    const Matrix lv = build_liouvillian(p, cfg, probe_omega);
    const int dim = 2 * (cfg.fock_cutoff + 1);
    const int dim2 = dim * dim;

    Matrix sys = lv;
    Vector rhs = Vector::Zero(dim2);
    sys.row(0).setZero();
    for (int k = 0; k < dim; ++k) sys(0, k * dim + k) = 1.0;  // trace row
    rhs(0) = 1.0;

    const Eigen::PartialPivLU<Matrix> lu(sys);
    const Vector x = lu.solve(rhs);
    const double residual = (sys * x - rhs).cwiseAbs().maxCoeff();
    if (!x.allFinite() || residual > 1e-8) {
        const Eigen::JacobiSVD<Matrix> svd(sys);
        const auto& sv = svd.singularValues();
        const double cond =
            sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                    : std::numeric_limits<double>::infinity();
        throw std::runtime_error(
            "oracle: steady-state solve failed (residual " +
            std::to_string(residual) + ", condition number " + std::to_string(cond) +
            ")");
    }

    SteadyState st;
    st.rho = Eigen::Map<const Matrix>(x.data(), dim, dim);
    check_density(st.rho);
    const auto ops = build_operators(cfg.fock_cutoff);
    st.mean_a = (st.rho * ops.a).trace();
    st.mean_photons = (st.rho * (ops.a.adjoint() * ops.a)).trace().real();
    return st;
}

// Weak-drive steady-state reflectivity |1 - (kappa/eps) <a>|^2.
inline double steady_state_reflectivity(const SystemParams& p,
                                        const HilbertConfig& cfg, double omega) {
    if (cfg.effective_drive(p.kappa) <= 0.0)
        throw std::invalid_argument(
            "oracle: reflectivity needs a nonzero probe drive");
    const SteadyState st = solve_steady_state(p, cfg, omega);
    if (st.mean_photons >= 0.01)
        throw std::runtime_error(
            "oracle: drive too strong for the weak-probe regime (<a'a> = " +
            std::to_string(st.mean_photons) + " >= 0.01); reduce drive_amplitude");
    const double eps = cfg.effective_drive(p.kappa);
    const std::complex<double> r = 1.0 - (p.kappa / eps) * st.mean_a;
    return std::norm(r);
}

inline std::vector<double> reflectivity_grid(const SystemParams& p,
                                             const HilbertConfig& cfg,
                                             const std::vector<double>& omegas) {
    std::vector<double> out;
    out.reserve(omegas.size());
    for (double w : omegas) out.push_back(steady_state_reflectivity(p, cfg, w));
    return out;
}

// Excited-state population versus time for the undriven system starting
// from |e, 0>. The frame rotation leaves populations untouched, so the
// trace is frame-independent.
inline std::vector<double> decay_trace(const SystemParams& p,
                                       const HilbertConfig& cfg,
                                       const std::vector<double>& t_grid_ps) {
    p.validate();
    cfg.validate();
    if (cfg.drive_amplitude && *cfg.drive_amplitude != 0.0)
        throw std::invalid_argument("oracle: decay_trace requires zero drive");
    if (t_grid_ps.empty())
        throw std::invalid_argument("oracle: empty time grid");
    for (std::size_t i = 0; i < t_grid_ps.size(); ++i) {
        if (t_grid_ps[i] < 0.0)
            throw std::invalid_argument("oracle: negative times not allowed");
        if (i > 0 && t_grid_ps[i] <= t_grid_ps[i - 1])
            throw std::invalid_argument("oracle: time grid must be ascending");
    }

    // zero drive regardless of the auto-drive default used for spectra
    const auto ops = build_operators(cfg.fock_cutoff);
    const int dim = ops.dim;
    const Matrix lh =
        detail::assemble_generator(p, cfg, p.omega_c, 0.0) / hbar_uev_ps;

    // |e,0>: emitter excited, field vacuum
    const int nf = cfg.fock_cutoff + 1;
    const int excited0 = nf;  // index of |e> (x) |0>
    using State = std::vector<std::complex<double>>;
    State x(static_cast<std::size_t>(dim) * dim, {0.0, 0.0});
    x[static_cast<std::size_t>(excited0) * dim + excited0] = 1.0;

    const Matrix pe = ops.sigma_minus.adjoint() * ops.sigma_minus;
    auto population = [&](const State& s) {
        const Eigen::Map<const Matrix> rho(s.data(), dim, dim);
        return (rho * pe).trace().real();
    };

    auto rhs = [&](const State& in, State& out, double) {
        const Eigen::Map<const Vector> vi(in.data(), static_cast<Eigen::Index>(in.size()));
        Eigen::Map<Vector> vo(out.data(), static_cast<Eigen::Index>(out.size()));
        vo = lh * vi;
    };

    std::vector<double> times = t_grid_ps;
    const bool prepend_zero = times.front() > 0.0;
    if (prepend_zero) times.insert(times.begin(), 0.0);

    std::vector<double> trace;
    trace.reserve(times.size());
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-9, 1e-9);
    try {
        ode::integrate_times(stepper, rhs, x, times.begin(), times.end(),
                             0.01 * (times.back() - times.front() + 1e-12) /
                                 static_cast<double>(times.size()),
                             [&](const State& s, double) {
                                 trace.push_back(population(s));
                             });
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("oracle: time integration failed: ") +
                                 e.what());
    }
    if (prepend_zero) trace.erase(trace.begin());
    return trace;
}

}  // namespace cqed::oracle
