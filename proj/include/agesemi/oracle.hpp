#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"
#include "agesemi/semigroup.hpp"

namespace agesemi {

/// Brute-force reference discretization: first-order upwind in age with the
/// renewal boundary eliminated by substitution. The evolved state holds the
/// nodes k = 1..K; the age-zero value is slaved to the birth quadrature
///   u_0 = (I - w_0 b_0)^{-1} sum_{k>=1} w_k b_k u_k
/// and recovered through `boundary`. Deliberately low order: its only job is
/// independence from the characteristics formulas.
struct OracleMatrix {
    AgeGrid grid;
    int n = 0;
    Eigen::MatrixXd G;        // (n*K) x (n*K) generator of the reduced system
    Eigen::MatrixXd boundary; // n x (n*K), recovers the age-zero block
};

inline OracleMatrix assemble_oracle(const ModelSpec& m) {
    if (auto err = generator_sign_violation(m.gen, m.grid.num_nodes()))
        throw validation_error("assemble_oracle: " + *err);
    if (auto err = birth_sign_violation(m.birth, m.gen.n, m.grid.num_nodes()))
        throw validation_error("assemble_oracle: " + *err);

    const int n = m.state_dim();
    const int K = m.grid.K;
    const int N = n * K;
    if (N > 2500)
        throw validation_error("assemble_oracle: dense oracle capped at n*K <= 2500 (got " +
                               std::to_string(N) + ")");

    const auto w = m.grid.trapezoid_weights();
    const double da = m.grid.da();
    const Eigen::MatrixXd R = detail::nonnegative_inverse(w[0] * m.birth.b[0], "assemble_oracle");

    OracleMatrix om;
    om.grid = m.grid;
    om.n = n;
    om.boundary = Eigen::MatrixXd::Zero(n, N);
    for (int k = 1; k <= K; ++k)
        om.boundary.middleCols((k - 1) * n, n) = R * (w[k] * m.birth.b[k]);

    om.G = Eigen::MatrixXd::Zero(N, N);
    for (int k = 1; k <= K; ++k) {
        const int row = (k - 1) * n;
        om.G.block(row, row, n, n) =
            -(1.0 / da) * Eigen::MatrixXd::Identity(n, n) - m.gen.A[k];
        if (k >= 2)
            om.G.block(row, row - n, n, n) = (1.0 / da) * Eigen::MatrixXd::Identity(n, n);
    }
    om.G.topRows(n) += (1.0 / da) * om.boundary;
    return om;
}

inline Eigen::VectorXd oracle_state(const OracleMatrix& om, const PopulationDensity& d) {
    Eigen::VectorXd x(om.n * om.grid.K);
    for (int k = 1; k <= om.grid.K; ++k) x.segment((k - 1) * om.n, om.n) = d.values[k];
    return x;
}

inline PopulationDensity oracle_density(const OracleMatrix& om, const Eigen::VectorXd& state) {
    PopulationDensity d(om.grid, om.n);
    d.values[0] = om.boundary * state;
    for (int k = 1; k <= om.grid.K; ++k) d.values[k] = state.segment((k - 1) * om.n, om.n);
    return d;
}

inline Eigen::MatrixXd oracle_expm(const OracleMatrix& om, double t) {
    if (t < 0.0) throw validation_error("oracle: time must be nonnegative");
    return (t * om.G).exp();
}

/// exp(t G) applied to the initial density. t = 0 returns the density
/// unchanged; for t > 0 the age-zero node follows the slaved boundary.
inline PopulationDensity oracle_evolve(const OracleMatrix& om, const PopulationDensity& phi,
                                       double t) {
    if (!phi.grid.same_as(om.grid) || phi.state_dim() != om.n)
        throw validation_error("oracle_evolve: density does not match the oracle grid");
    if (t == 0.0) return phi;
    return oracle_density(om, oracle_expm(om, t) * oracle_state(om, phi));
}

inline double oracle_rightmost_eigenvalue(const OracleMatrix& om) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(om.G, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

} // namespace agesemi
