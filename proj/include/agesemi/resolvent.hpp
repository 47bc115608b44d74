#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"
#include "agesemi/propagator.hpp"
#include "agesemi/semigroup.hpp"
#include "agesemi/spectral.hpp"

namespace agesemi {

/// Quadrature of the birth kernel against a density: sum_k w_k b_k psi(a_k).
inline Eigen::VectorXd birth_quadrature(const ModelSpec& m, const PopulationDensity& d) {
    const auto w = m.grid.trapezoid_weights();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k) q.noalias() += w[k] * (m.birth.b[k] * d.values[k]);
    return q;
}

namespace detail {

/// LU of I - Q with a refusal guard: ||(I - Q)^{-1}|| is measured against the
/// problem scale max(1, ||Q||), not against ||I - Q|| itself, so a nearly
/// singular complement is caught in every dimension (rcond alone is
/// scale-invariant and blind for n = 1).
inline Eigen::PartialPivLU<Eigen::MatrixXd> factor_renewal_complement(
    const Eigen::MatrixXd& Q, double cond_threshold, double lambda, const std::string& what) {
    const int n = static_cast<int>(Q.rows());
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) - Q;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    const double m_norm = M.cwiseAbs().colwise().sum().maxCoeff();
    const double scale = std::max(1.0, Q.cwiseAbs().colwise().sum().maxCoeff());
    const double rcond = lu.rcond();
    const bool singular =
        !(rcond > 0.0) || !(m_norm > 0.0) || scale / (rcond * m_norm) > cond_threshold;
    if (singular)
        throw numerical_error(what + ": I - Q_lambda is numerically singular at lambda = " +
                              std::to_string(lambda) +
                              "; lambda is (numerically) an eigenvalue of the generator");
    return lu;
}

} // namespace detail

/// Inhomogeneous part of the resolvent: the tilted flow convolved with phi,
///   v(a_k) = trapezoid_{[0, a_k]} e^{-lambda (a_k - sigma)} Pi(a_k, sigma) phi(sigma),
/// advanced by one recurrence per node so each value carries the exact
/// sub-range trapezoid weights.
inline PopulationDensity resolvent_v_part(const ModelSpec& m, const Propagator& p,
                                          double lambda, const PopulationDensity& phi) {
    detail::require_model_density(m, phi, "resolvent_v_part");
    const double da = m.grid.da();
    const double twist = std::exp(-lambda * da);
    PopulationDensity v(m.grid, m.state_dim());
    for (int k = 0; k < m.grid.K; ++k) {
        const Eigen::VectorXd pushed = twist * (p.steps[k] * (v.values[k] + 0.5 * da * phi.values[k]));
        v.values[k + 1] = pushed + 0.5 * da * phi.values[k + 1];
    }
    return v;
}

struct ResolventSplit {
    PopulationDensity psi; // full resolvent output
    PopulationDensity v;   // zero-trace particular solution
    PopulationDensity w;   // boundary correction through (I - Q_lambda)^{-1}
};

/// Apply the resolvent by its closed formula. Refuses shifts where I - Q_lambda
/// is numerically singular (condition estimate above cond_threshold): such a
/// shift is an eigenvalue of the generator.
inline ResolventSplit resolvent_apply(const ModelSpec& m, const Propagator& p, double lambda,
                                      const PopulationDensity& phi,
                                      double cond_threshold = 1e12) {
    detail::require_model_density(m, phi, "resolvent_apply");
    const Eigen::MatrixXd Q = renewal_operator(m, p, lambda);
    const int n = m.state_dim();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu =
        detail::factor_renewal_complement(Q, cond_threshold, lambda, "resolvent_apply");

    ResolventSplit out;
    out.v = resolvent_v_part(m, p, lambda, phi);
    const Eigen::VectorXd w0 = lu.solve(birth_quadrature(m, out.v));

    out.w = PopulationDensity(m.grid, n);
    for (int k = 0; k <= m.grid.K; ++k)
        out.w.values[k] = std::exp(-lambda * m.grid.node(k)) * (p.prefix[k] * w0);

    out.psi = PopulationDensity(m.grid, n);
    for (int k = 0; k <= m.grid.K; ++k) out.psi.values[k] = out.v.values[k] + out.w.values[k];
    for (const auto& val : out.psi.values)
        if (!val.allFinite())
            throw numerical_error("resolvent_apply: non-finite output at lambda = " +
                                  std::to_string(lambda));
    return out;
}

struct DomainCheck {
    double pde_residual = 0.0; // backward-difference equation residual, O(da)
    double bc_residual = 0.0;  // renewal boundary residual, quadrature-exact
};

/// Verify that psi behaves like a domain element mapped by (lambda + A)^{-1}:
/// it satisfies the transport equation with source phi up to first order and
/// the renewal boundary identity up to round-off.
inline DomainCheck domain_check(const ModelSpec& m, const Propagator& p, double lambda,
                                const PopulationDensity& phi, const PopulationDensity& psi) {
    detail::require_model_density(m, phi, "domain_check");
    detail::require_model_density(m, psi, "domain_check");
    DomainCheck res;
    const double da = m.grid.da();
    for (int k = 1; k <= m.grid.K; ++k) {
        const Eigen::VectorXd r = (psi.values[k] - psi.values[k - 1]) / da +
                                  lambda * psi.values[k] + m.gen.A[k] * psi.values[k] -
                                  phi.values[k];
        res.pde_residual = std::max(res.pde_residual, r.norm());
    }
    res.bc_residual = (psi.values[0] - birth_quadrature(m, psi)).norm();
    return res;
}

/// Independent route to the resolvent: the time-domain Laplace transform of
/// the simulated trajectory, trapezoid in t over [0, T]. Rejects when the
/// damped integrand has not decayed below quad_tol by the horizon — either
/// the trajectory outgrows the shift or T is too short.
inline PopulationDensity laplace_oracle(const ModelSpec& m, const Propagator& p, double lambda,
                                        const PopulationDensity& phi, double T,
                                        double quad_tol) {
    detail::require_model_density(m, phi, "laplace_oracle");
    const double dt = m.grid.da();
    const int M = detail::aligned_time_index(T, dt, "laplace_oracle");
    if (M < 2) throw validation_error("laplace_oracle: horizon must span several steps");

    const BirthTrajectory B = solve_birth(m, p, phi, T);
    SemigroupTrajectory traj(m, p, B, phi);

    PopulationDensity acc(m.grid, m.state_dim());
    double tail_half = 0.0, tail_end = 0.0;
    for (int mstep = 0; mstep <= M; ++mstep) {
        if (mstep > 0) traj.step();
        const double wt = ((mstep == 0 || mstep == M) ? 0.5 * dt : dt);
        const double damp = std::exp(-lambda * mstep * dt);
        for (int k = 0; k <= m.grid.K; ++k)
            acc.values[k].noalias() += (wt * damp) * traj.density().values[k];
        if (mstep == M / 2) tail_half = damp * e0_norm(traj.density());
        if (mstep == M) tail_end = damp * e0_norm(traj.density());
    }

    if (tail_end > quad_tol) {
        if (tail_end >= tail_half)
            throw numerical_error(
                "laplace_oracle: damped integrand is not decaying (trajectory growth rate >= "
                "lambda)");
        throw numerical_error("laplace_oracle: integrand tail " + std::to_string(tail_end) +
                              " exceeds quad_tol at the horizon; increase T");
    }
    return acc;
}

} // namespace agesemi
