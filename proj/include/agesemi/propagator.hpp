#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"

namespace agesemi {

/// Cached evolution-operator data on the age grid:
///   steps[k]  ~ Pi(a_{k+1}, a_k)         (one-interval flow)
///   prefix[k] =  Pi(a_k, 0)              (prefix[0] = I, prefix[k+1] = steps[k]*prefix[k])
/// All step matrices are entrywise nonnegative; tiny negative round-off from
/// the exponential is clamped to zero so the discrete flow preserves the
/// nonnegative orthant exactly.
struct Propagator {
    double dt = 0.0;
    int substeps = 1;
    std::vector<Eigen::MatrixXd> steps;
    std::vector<Eigen::MatrixXd> prefix;

    int num_intervals() const { return static_cast<int>(steps.size()); }
    int state_dim() const { return prefix.empty() ? 0 : static_cast<int>(prefix[0].rows()); }
};

namespace detail {

/// Zero out negative entries that are round-off noise; reject anything worse.
inline void clamp_nonnegative(Eigen::MatrixXd& M, const std::string& what) {
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    const double tol = 1e-13 * scale;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            if (M(i, j) < 0.0) {
                if (M(i, j) < -tol)
                    throw numerical_error(what + ": negative entry " +
                                          std::to_string(M(i, j)) +
                                          " beyond round-off tolerance");
                M(i, j) = 0.0;
            }
        }
}

inline Eigen::MatrixXd interval_flow(const ModelSpec& m, int k, int substeps) {
    const double h = m.grid.da() / substeps;
    const int n = m.state_dim();
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n);
    for (int j = 0; j < substeps; ++j) {
        // midpoint value of A on the sub-interval, by linear interpolation
        // between the two enclosing grid nodes
        const double theta = (j + 0.5) / substeps;
        const Eigen::MatrixXd A_mid = (1.0 - theta) * m.gen.A[k] + theta * m.gen.A[k + 1];
        Eigen::MatrixXd E = (-h * A_mid).exp();
        if (!E.allFinite())
            throw numerical_error("propagator: non-finite matrix exponential on age interval [" +
                                  std::to_string(m.grid.node(k)) + ", " +
                                  std::to_string(m.grid.node(k + 1)) + "]");
        clamp_nonnegative(E, "propagator step");
        S = E * S;
    }
    return S;
}

inline bool generator_is_age_constant(const ModelSpec& m) {
    for (std::size_t k = 1; k < m.gen.A.size(); ++k)
        if (m.gen.A[k] != m.gen.A[0]) return false;
    return true;
}

} // namespace detail

/// Build the cached flow by midpoint exponential stepping: each age interval
/// is split into `substeps` panels and advanced by exp(-h * A(midpoint)).
inline Propagator build_propagator(const ModelSpec& m, int substeps = 4) {
    if (substeps < 1) throw validation_error("build_propagator: substeps must be >= 1");
    if (auto err = generator_sign_violation(m.gen, m.grid.num_nodes()))
        throw validation_error("build_propagator: " + *err);

    Propagator p;
    p.dt = m.grid.da();
    p.substeps = substeps;
    p.steps.reserve(m.grid.K);
    p.prefix.reserve(m.grid.num_nodes());

    const int n = m.state_dim();
    if (detail::generator_is_age_constant(m)) {
        const Eigen::MatrixXd S = detail::interval_flow(m, 0, substeps);
        p.steps.assign(m.grid.K, S);
    } else {
        for (int k = 0; k < m.grid.K; ++k)
            p.steps.push_back(detail::interval_flow(m, k, substeps));
    }

    p.prefix.push_back(Eigen::MatrixXd::Identity(n, n));
    for (int k = 0; k < m.grid.K; ++k) p.prefix.push_back(p.steps[k] * p.prefix[k]);
    return p;
}

/// Pi(a_j, a_i), assembled from the cached interval steps.
inline Eigen::MatrixXd propagate(const Propagator& p, int j, int i) {
    if (i < 0 || j > p.num_intervals() || i > j)
        throw validation_error("propagate: need 0 <= i <= j <= K");
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(p.state_dim(), p.state_dim());
    for (int s = i; s < j; ++s) R = p.steps[s] * R;
    return R;
}

/// Apply Pi(a_j, a_i) to a single state vector in O(j - i) matrix-vector
/// products.
inline Eigen::VectorXd propagate_apply(const Propagator& p, int j, int i,
                                       Eigen::VectorXd v) {
    if (i < 0 || j > p.num_intervals() || i > j)
        throw validation_error("propagate_apply: need 0 <= i <= j <= K");
    for (int s = i; s < j; ++s) v = p.steps[s] * v;
    return v;
}

/// e^{-lambda (a_j - a_i)} Pi(a_j, a_i).
inline Eigen::MatrixXd twisted_propagate(const Propagator& p, double lambda, int j, int i) {
    return std::exp(-lambda * (j - i) * p.dt) * propagate(p, j, i);
}

/// Complex shifts only twist the scalar factor; the flow itself stays real.
inline Eigen::MatrixXcd twisted_propagate(const Propagator& p, std::complex<double> lambda,
                                          int j, int i) {
    return std::exp(-lambda * ((j - i) * p.dt)) * propagate(p, j, i).cast<std::complex<double>>();
}

struct DecayEstimate {
    double M_hat = 1.0;     // prefactor, >= 1 since Pi(0,0) = I
    double omega_hat = 0.0; // uniform exponential decay rate
};

namespace detail {

inline double operator_norm_2(const Eigen::MatrixXd& M) {
    if (M.rows() == 1 && M.cols() == 1) return std::abs(M(0, 0));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues()(0);
}

} // namespace detail

/// Fit ||Pi(a_k, 0)|| <= M_hat * exp(-omega_hat * a_k): the rate is the
/// least-squares slope of -log||prefix|| over the tail half of the grid, the
/// prefactor the smallest constant making the bound hold on every node.
inline DecayEstimate decay_estimate(const Propagator& p) {
    const int K = p.num_intervals();
    std::vector<double> norms(K + 1);
    for (int k = 0; k <= K; ++k) norms[k] = detail::operator_norm_2(p.prefix[k]);

    const int k0 = K / 2;
    double sa = 0.0, sy = 0.0, saa = 0.0, say = 0.0;
    int cnt = 0;
    for (int k = k0; k <= K; ++k) {
        const double a = k * p.dt;
        const double y = -std::log(norms[k]);
        sa += a;
        sy += y;
        saa += a * a;
        say += a * y;
        ++cnt;
    }
    const double denom = cnt * saa - sa * sa;
    DecayEstimate est;
    est.omega_hat = denom > 0.0 ? (cnt * say - sa * sy) / denom : 0.0;
    double M = 0.0;
    for (int k = 0; k <= K; ++k)
        M = std::max(M, norms[k] * std::exp(est.omega_hat * k * p.dt));
    est.M_hat = M;
    return est;
}

} // namespace agesemi
