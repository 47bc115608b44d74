#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"
#include "agesemi/propagator.hpp"

namespace agesemi {

/// Perron data of a nonnegative matrix: spectral radius, primal/dual
/// eigenvectors (phi0 sums to one, <wstar, phi0> = 1), and the modulus gap to
/// the second eigenvalue.
struct SpectralReport {
    double lambda = 0.0;
    Eigen::MatrixXd Q;
    double r = 0.0;
    Eigen::VectorXd phi0;
    Eigen::VectorXd wstar;
    double gap = 0.0;
    int iterations = 0;
};

/// Next-generation operator at tilt lambda: the birth kernel integrated
/// against the tilted flow from age zero, on the same trapezoid weights as
/// the time march.
inline Eigen::MatrixXd renewal_operator(const ModelSpec& m, const Propagator& p,
                                        double lambda) {
    if (m.infinite_age && !(lambda > -m.decay_margin))
        throw validation_error("renewal_operator: lambda = " + std::to_string(lambda) +
                               " is not above the declared decay margin " +
                               std::to_string(-m.decay_margin));
    const auto w = m.grid.trapezoid_weights();
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m.state_dim(), m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k)
        Q.noalias() += w[k] * std::exp(-lambda * m.grid.node(k)) * (m.birth.b[k] * p.prefix[k]);
    if (!Q.allFinite())
        throw numerical_error("renewal_operator: non-finite entries (lambda too far left?)");
    return Q;
}

namespace detail {

struct PowerResult {
    double r = 0.0;
    Eigen::VectorXd v;
    int iterations = 0;
};

/// Power iteration from a strictly positive, deliberately asymmetric start;
/// iterates are kept sum-normalized. Non-convergence reports the oscillation
/// diagnostic instead of returning a bogus vector.
template <typename Apply>
PowerResult power_iteration(int n, Apply&& apply, double tol, int max_iter) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i) / (10.0 * n);
    v /= v.sum();

    double r = 0.0, r_prev = 0.0, resid = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd y = apply(v);
        const double s = y.sum();
        if (!(s > 0.0))
            throw numerical_error("perron_root: iteration collapsed to zero; spectral radius "
                                  "is numerically zero (nilpotent or reducible structure)");
        r_prev = r;
        r = s;
        resid = (y - r * v).norm();
        v = y / s;
        if (resid <= tol * std::max(1.0, r)) return {r, v, it};
    }
    throw numerical_error(
        "perron_root: power iteration did not converge within " + std::to_string(max_iter) +
        " iterations (last r = " + std::to_string(r) + ", previous r = " + std::to_string(r_prev) +
        ", residual = " + std::to_string(resid) +
        "); oscillation suggests reducible or periodic structure");
}

/// Modulus of the second-largest eigenvalue via two-dimensional subspace
/// iteration seeded with the Perron vector.
inline double second_modulus(const Eigen::MatrixXd& Q, const Eigen::VectorXd& perron,
                             double r) {
    const int n = static_cast<int>(Q.rows());
    if (n == 1) return 0.0;

    Eigen::MatrixXd Z(n, 2);
    Z.col(0) = perron.normalized();
    for (int i = 0; i < n; ++i) Z.col(1)[i] = ((i % 2) ? -1.0 : 1.0) * (1.0 + i / (3.0 * n));
    Z.col(1) -= Z.col(0) * Z.col(0).dot(Z.col(1));
    Z.col(1).normalize();

    double prev = -1.0;
    for (int it = 0; it < 5000; ++it) {
        Eigen::MatrixXd Y = Q * Z;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
        Z = qr.householderQ() * Eigen::MatrixXd::Identity(n, 2);
        const Eigen::Matrix2d T = Z.transpose() * (Q * Z);
        const double tr = T.trace(), det = T.determinant();
        const double disc = tr * tr - 4.0 * det;
        double second;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            second = std::min(std::abs(0.5 * (tr + sq)), std::abs(0.5 * (tr - sq)));
        } else {
            second = std::sqrt(det); // complex pair, equal moduli
        }
        if (std::abs(second - prev) <= 1e-11 * std::max(1.0, r)) return second;
        prev = second;
    }
    return prev;
}

} // namespace detail

/// Perron root and eigenvectors of a nonnegative matrix by power iteration on
/// the matrix and its transpose. Throws when the iteration does not settle or
/// when the root fails the numerical simplicity test (gap <= 1e-8 * r).
inline SpectralReport perron_root(const Eigen::MatrixXd& Q, double tol = 1e-12,
                                  int max_iter = 50000) {
    if (Q.rows() != Q.cols()) throw validation_error("perron_root: matrix must be square");
    if (!Q.allFinite() || Q.minCoeff() < 0.0)
        throw validation_error("perron_root: matrix must be entrywise nonnegative and finite");
    if (Q.cwiseAbs().maxCoeff() == 0.0)
        throw validation_error("perron_root: matrix must be nonzero");

    const int n = static_cast<int>(Q.rows());
    auto primal = detail::power_iteration(
        n, [&](const Eigen::VectorXd& x) { return (Q * x).eval(); }, tol, max_iter);
    auto dual = detail::power_iteration(
        n, [&](const Eigen::VectorXd& x) { return (Q.transpose() * x).eval(); }, tol, max_iter);

    SpectralReport rep;
    rep.Q = Q;
    rep.r = primal.r;
    rep.iterations = primal.iterations + dual.iterations;
    rep.phi0 = primal.v / primal.v.sum();
    const double pairing = dual.v.dot(rep.phi0);
    if (!(pairing > 0.0))
        throw numerical_error("perron_root: primal/dual eigenvector pairing is not positive "
                              "(reducible structure)");
    rep.wstar = dual.v / pairing;
    rep.gap = (n == 1) ? rep.r
                       : std::max(0.0, rep.r - detail::second_modulus(Q, primal.v, primal.r));
    if (!(rep.gap > 1e-8 * rep.r))
        throw numerical_error("perron_root: spectral radius " + std::to_string(rep.r) +
                              " is not numerically simple (gap = " + std::to_string(rep.gap) +
                              "); reducible or periodic structure suspected");
    return rep;
}

/// r(Q_lambda) sampled along a non-decreasing list of shifts. Strictly
/// increasing shifts must produce strictly decreasing radii; a violation
/// reports the offending pair.
inline std::vector<std::pair<double, double>> spectral_radius_curve(
    const ModelSpec& m, const Propagator& p, const std::vector<double>& lambdas,
    double tol = 1e-12) {
    std::vector<std::pair<double, double>> out;
    out.reserve(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (i > 0 && lambdas[i] < lambdas[i - 1])
            throw validation_error("spectral_radius_curve: shifts must be non-decreasing");
        const double r = perron_root(renewal_operator(m, p, lambdas[i]), tol).r;
        if (i > 0 && lambdas[i] > lambdas[i - 1] && !(r < out.back().second))
            throw numerical_error("spectral_radius_curve: monotonicity violated between lambda = " +
                                  std::to_string(out.back().first) + " (r = " +
                                  std::to_string(out.back().second) + ") and lambda = " +
                                  std::to_string(lambdas[i]) + " (r = " + std::to_string(r) + ")");
        out.emplace_back(lambdas[i], r);
    }
    return out;
}

/// The Malthusian root r(Q_{lambda0}) = 1 with its bracketing interval.
struct MalthusianResult {
    double lambda0 = 0.0;
    double residual = 0.0; // |r(Q_{lambda0}) - 1|
    std::pair<double, double> bracket{0.0, 0.0};
    int evaluations = 0;
};

/// Locate the unique shift where the renewal operator has unit spectral
/// radius: geometric bracket expansion from zero followed by bisection.
/// Returns nullopt when no admissible shift reaches radius one (possible only
/// in the truncated-infinite regime), as distinct from numerical failure.
inline std::optional<MalthusianResult> find_lambda0(const ModelSpec& m, const Propagator& p,
                                                    double tol = 1e-8) {
    if (!(tol > 0.0)) throw validation_error("find_lambda0: tol must be positive");
    int evals = 0;
    auto g = [&](double lam) {
        ++evals;
        return perron_root(renewal_operator(m, p, lam), 1e-12).r - 1.0;
    };

    const double g0 = g(0.0);
    if (std::abs(g0) <= tol) {
        MalthusianResult res;
        res.lambda0 = 0.0;
        res.residual = std::abs(g0);
        res.bracket = {-tol, tol};
        res.evaluations = evals;
        return res;
    }

    double lo, hi;
    const double overflow_cap = 600.0 / m.grid.a_max;
    if (g0 > 0.0) {
        lo = 0.0;
        double cand = 1.0;
        for (;;) {
            if (cand > overflow_cap)
                throw numerical_error("find_lambda0: bracket expansion overflow on the right");
            if (g(cand) <= 0.0) {
                hi = cand;
                break;
            }
            lo = cand;
            cand *= 2.0;
        }
    } else {
        hi = 0.0;
        const bool clipped_regime = m.infinite_age;
        const double lo_limit =
            clipped_regime ? -m.decay_margin + std::max(1e-12, 1e-6 * m.decay_margin)
                           : -overflow_cap;
        double cand = -1.0;
        for (;;) {
            bool clipped = false;
            if (cand <= lo_limit) {
                cand = lo_limit;
                clipped = true;
            }
            if (!clipped_regime && clipped)
                throw numerical_error("find_lambda0: bracket expansion overflow on the left");
            if (g(cand) >= 0.0) {
                lo = cand;
                break;
            }
            if (clipped) return std::nullopt; // no Malthusian parameter in admissible range
            hi = cand;
            cand *= 2.0;
        }
    }

    for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (std::abs(gm) <= tol) {
            MalthusianResult res;
            res.lambda0 = mid;
            res.residual = std::abs(gm);
            res.bracket = {lo, hi};
            res.evaluations = evals;
            return res;
        }
        if (gm > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    throw numerical_error("find_lambda0: bisection failed to reach the residual tolerance");
}

enum class StabilityClass { Stable, Critical, AsynchronousGrowth };

inline const char* to_string(StabilityClass c) {
    switch (c) {
        case StabilityClass::Stable: return "Stable";
        case StabilityClass::Critical: return "Critical";
        default: return "AsynchronousGrowth";
    }
}

struct StabilityReport {
    StabilityClass verdict = StabilityClass::Critical;
    double r_q0 = 0.0;
};

/// Trichotomy on r(Q_0): below one the population dies out, above one it
/// grows; a band of width eps_band around one absorbs quadrature error.
inline StabilityReport classify_stability(const ModelSpec& m, const Propagator& p,
                                          double eps_band = 1e-6) {
    StabilityReport rep;
    rep.r_q0 = perron_root(renewal_operator(m, p, 0.0)).r;
    if (rep.r_q0 < 1.0 - eps_band)
        rep.verdict = StabilityClass::Stable;
    else if (rep.r_q0 > 1.0 + eps_band)
        rep.verdict = StabilityClass::AsynchronousGrowth;
    else
        rep.verdict = StabilityClass::Critical;
    return rep;
}

struct EigenfunctionResult {
    PopulationDensity phi;
    double bc_residual = 0.0;
    double pde_residual = 0.0;
};

/// Eigenprofile of the generator at a shift where r(Q_lambda) = 1: the tilted
/// flow applied to the Perron vector. Reports the renewal-boundary residual
/// and the backward-difference equation residual (first order in the step).
inline EigenfunctionResult generator_eigenfunction(const ModelSpec& m, const Propagator& p,
                                                   double lambda, double tol = 1e-6) {
    const SpectralReport rep = perron_root(renewal_operator(m, p, lambda));
    if (std::abs(rep.r - 1.0) > tol)
        throw validation_error("generator_eigenfunction: r(Q_lambda) = " + std::to_string(rep.r) +
                               " is not 1 within tolerance; lambda is not an eigenvalue");

    EigenfunctionResult res;
    res.phi = PopulationDensity(m.grid, m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k)
        res.phi.values[k] = std::exp(-lambda * m.grid.node(k)) * (p.prefix[k] * rep.phi0);

    const auto w = m.grid.trapezoid_weights();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m.state_dim());
    for (int k = 0; k <= m.grid.K; ++k) q.noalias() += w[k] * (m.birth.b[k] * res.phi.values[k]);
    res.bc_residual = (res.phi.values[0] - q).norm();

    const double da = m.grid.da();
    for (int k = 1; k <= m.grid.K; ++k) {
        const Eigen::VectorXd r = (res.phi.values[k] - res.phi.values[k - 1]) / da +
                                  lambda * res.phi.values[k] + m.gen.A[k] * res.phi.values[k];
        res.pde_residual = std::max(res.pde_residual, r.norm());
    }
    return res;
}

} // namespace agesemi
