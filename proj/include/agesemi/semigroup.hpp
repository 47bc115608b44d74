#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"
#include "agesemi/propagator.hpp"

namespace agesemi {

namespace detail {

inline int aligned_time_index(double t, double dt, const std::string& what) {
    const double raw = t / dt;
    const int m = static_cast<int>(std::llround(raw));
    if (m < 0 || std::abs(raw - m) > 1e-9 * std::max(1.0, raw))
        throw validation_error(what + ": time " + std::to_string(t) +
                               " is not a nonnegative multiple of the age step");
    return m;
}

inline void require_model_density(const ModelSpec& m, const PopulationDensity& phi,
                                  const std::string& what) {
    if (!phi.grid.same_as(m.grid) ||
        static_cast<int>(phi.values.size()) != m.grid.num_nodes() ||
        phi.state_dim() != m.state_dim())
        throw validation_error(what + ": density does not match the model grid");
}

/// Entrywise-nonnegative inverse of (I - N) for small nonnegative N; used for
/// the implicit diagonal of the time march. Round-off negatives are clamped.
inline Eigen::MatrixXd nonnegative_inverse(const Eigen::MatrixXd& N, const std::string& what) {
    const int n = static_cast<int>(N.rows());
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) - N;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    if (!(lu.rcond() > 1e-12))
        throw numerical_error(what + ": implicit diagonal is numerically singular");
    Eigen::MatrixXd inv = lu.inverse();
    clamp_nonnegative(inv, what + " (implicit diagonal inverse)");
    return inv;
}

} // namespace detail

/// March the birth output B(t_m) forward on the aligned time grid.
///
/// Each step solves the trapezoid discretization of the renewal equation:
/// the convolution of the birth kernel with past births over ages up to
/// min(t_m, a_max), plus the contribution of the initial cohort that has aged
/// by t_m (present while t_m <= a_max). Both quadratures are composite
/// trapezoid rules on their exact integration ranges; the same weights feed
/// the renewal operator, so the discrete growth rate of this march and the
/// Malthusian root of the spectral module coincide.
inline BirthTrajectory solve_birth(const ModelSpec& m, const Propagator& p,
                                   const PopulationDensity& phi, double T) {
    detail::require_model_density(m, phi, "solve_birth");
    const double dt = m.grid.da();
    const int M_t = detail::aligned_time_index(T, dt, "solve_birth");
    const int K = m.grid.K;
    const int n = m.state_dim();

    // convolution coefficients b_k * Pi(a_k, 0)
    std::vector<Eigen::MatrixXd> C(K + 1);
    for (int k = 0; k <= K; ++k) C[k] = m.birth.b[k] * p.prefix[k];

    const Eigen::MatrixXd implicit_inv =
        detail::nonnegative_inverse(0.5 * dt * m.birth.b[0], "solve_birth");

    // cohort streams: tail[k] holds Pi(a_{k+m}, a_k) phi(a_k) at step m
    std::vector<Eigen::VectorXd> tail(phi.values);

    BirthTrajectory B;
    B.dt = dt;
    B.values.reserve(M_t + 1);

    for (int mstep = 0; mstep <= M_t; ++mstep) {
        // initial-cohort quadrature over [0, a_max - t_m]
        Eigen::VectorXd F = Eigen::VectorXd::Zero(n);
        const int last = K - mstep;
        if (last >= 1) {
            for (int k = 0; k <= last; ++k) {
                const double w = (k == 0 || k == last) ? 0.5 * dt : dt;
                F.noalias() += w * (m.birth.b[k + mstep] * tail[k]);
            }
        }

        if (mstep == 0) {
            B.values.push_back(F);
        } else {
            // convolution over past births, ages up to min(t_m, a_max)
            const int jmax = std::min(mstep, K);
            Eigen::VectorXd rhs = F;
            for (int j = 1; j <= jmax; ++j) {
                const double w = (j == jmax) ? 0.5 * dt : dt;
                rhs.noalias() += w * (C[j] * B.values[mstep - j]);
            }
            B.values.push_back(implicit_inv * rhs);
        }

        // advance surviving cohort streams by one interval
        for (int k = 0; k < K - mstep; ++k) tail[k] = p.steps[k + mstep] * tail[k];
    }
    return B;
}

/// Evaluate the semigroup at one aligned time by the characteristics formula:
/// ages older than t carry the transported initial cohort, younger ages carry
/// propagated past births.
inline PopulationDensity apply_semigroup(const ModelSpec& m, const Propagator& p,
                                         const BirthTrajectory& B,
                                         const PopulationDensity& phi, double t) {
    detail::require_model_density(m, phi, "apply_semigroup");
    if (std::abs(B.dt - m.grid.da()) > 1e-12 * m.grid.da())
        throw validation_error("apply_semigroup: birth trajectory step does not match the grid");
    const int mstep = detail::aligned_time_index(t, m.grid.da(), "apply_semigroup");
    if (mstep > B.num_steps())
        throw validation_error("apply_semigroup: time beyond the birth trajectory horizon");

    PopulationDensity u(m.grid, m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k) {
        if (mstep <= k)
            u.values[k] = propagate_apply(p, k, k - mstep, phi.values[k - mstep]);
        else
            u.values[k] = p.prefix[k] * B.values[mstep - k];
    }
    return u;
}

/// Streaming evaluation of the whole trajectory: one interval shift per time
/// step. Agrees with apply_semigroup at every node (same product order).
class SemigroupTrajectory {
public:
    SemigroupTrajectory(const ModelSpec& m, const Propagator& p, const BirthTrajectory& B,
                        const PopulationDensity& phi)
        : model_(&m), prop_(&p), births_(&B), u_(phi), step_(0) {
        detail::require_model_density(m, phi, "trajectory");
    }

    int step_index() const { return step_; }
    double time() const { return step_ * model_->grid.da(); }
    const PopulationDensity& density() const { return u_; }

    bool can_step() const { return step_ < births_->num_steps(); }

    void step() {
        if (!can_step())
            throw validation_error("trajectory: stepping beyond the birth horizon");
        const int K = model_->grid.K;
        for (int k = K; k >= 1; --k) u_.values[k] = prop_->steps[k - 1] * u_.values[k - 1];
        ++step_;
        u_.values[0] = births_->values[step_];
    }

    void advance_to(double t) {
        const int target = detail::aligned_time_index(t, model_->grid.da(), "trajectory");
        if (target < step_)
            throw validation_error("trajectory: cannot step backwards");
        while (step_ < target) step();
    }

private:
    const ModelSpec* model_;
    const Propagator* prop_;
    const BirthTrajectory* births_;
    PopulationDensity u_;
    int step_;
};

/// || B(t_m) - integral of b against the evolved density || — the residual of
/// the birth-output identity at one aligned time.
inline double birth_consistency(const ModelSpec& m, const Propagator& p,
                                const BirthTrajectory& B, const PopulationDensity& phi,
                                double t) {
    const int mstep = detail::aligned_time_index(t, m.grid.da(), "birth_consistency");
    const PopulationDensity u = apply_semigroup(m, p, B, phi, t);
    const auto w = m.grid.trapezoid_weights();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k) q.noalias() += w[k] * (m.birth.b[k] * u.values[k]);
    return (B.values[mstep] - q).norm();
}

struct GrowthEnvelope {
    double envelope = 0.0;  // sup_m ||B_m|| * exp((omega_hat - zeta_hat) t_m)
    double zeta_hat = 0.0;  // M_hat * max_k ||b_k||
    double omega_hat = 0.0;
};

/// Check the a-priori exponential envelope of the birth output: the
/// renormalized supremum must stay bounded independently of the horizon.
inline GrowthEnvelope growth_envelope_check(const ModelSpec& m, const Propagator& p,
                                            const PopulationDensity& phi, double T) {
    const DecayEstimate est = decay_estimate(p);
    double max_b = 0.0;
    for (const auto& b : m.birth.b) max_b = std::max(max_b, detail::operator_norm_2(b));

    GrowthEnvelope env;
    env.omega_hat = est.omega_hat;
    env.zeta_hat = est.M_hat * max_b;

    const BirthTrajectory B = solve_birth(m, p, phi, T);
    double sup = 0.0;
    for (int mstep = 0; mstep < static_cast<int>(B.values.size()); ++mstep)
        sup = std::max(sup, B.values[mstep].norm() *
                                std::exp((env.omega_hat - env.zeta_hat) * B.time(mstep)));
    env.envelope = sup;
    return env;
}

} // namespace agesemi
