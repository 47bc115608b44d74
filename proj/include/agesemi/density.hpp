#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "agesemi/errors.hpp"
#include "agesemi/grid.hpp"

namespace agesemi {

/// Age-indexed family of state vectors: one vector of dimension n per grid
/// node. This is the discrete phase-space element; its norm is the grid
/// quadrature of the pointwise vector norm.
struct PopulationDensity {
    AgeGrid grid;
    std::vector<Eigen::VectorXd> values;

    PopulationDensity() = default;
    PopulationDensity(const AgeGrid& g, int n)
        : grid(g), values(g.num_nodes(), Eigen::VectorXd::Zero(n)) {}

    int state_dim() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

inline PopulationDensity constant_density(const AgeGrid& grid, int n, double value = 1.0) {
    PopulationDensity d(grid, n);
    for (auto& v : d.values) v.setConstant(value);
    return d;
}

/// Weighted L_p norm over the age grid (trapezoid weights), p = 2 by default.
inline double e0_norm(const PopulationDensity& d, double p = 2.0) {
    if (!(p >= 1.0)) throw validation_error("e0_norm: p must be >= 1");
    const auto w = d.grid.trapezoid_weights();
    double acc = 0.0;
    if (p == 2.0) {
        for (std::size_t k = 0; k < d.values.size(); ++k)
            acc += w[k] * d.values[k].squaredNorm();
        return std::sqrt(acc);
    }
    for (std::size_t k = 0; k < d.values.size(); ++k)
        acc += w[k] * std::pow(d.values[k].norm(), p);
    return std::pow(acc, 1.0 / p);
}

inline double e0_inner(const PopulationDensity& a, const PopulationDensity& b) {
    const auto w = a.grid.trapezoid_weights();
    double acc = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) acc += w[k] * a.values[k].dot(b.values[k]);
    return acc;
}

inline PopulationDensity axpy(double alpha, const PopulationDensity& x,
                              const PopulationDensity& y) {
    PopulationDensity r = y;
    for (std::size_t k = 0; k < r.values.size(); ++k) r.values[k] += alpha * x.values[k];
    return r;
}

inline PopulationDensity scaled(double alpha, const PopulationDensity& x) {
    PopulationDensity r = x;
    for (auto& v : r.values) v *= alpha;
    return r;
}

inline double e0_distance(const PopulationDensity& a, const PopulationDensity& b) {
    return e0_norm(axpy(-1.0, b, a));
}

/// Birth output on the aligned time grid t_m = m*dt (dt equals the age step).
struct BirthTrajectory {
    double dt = 0.0;
    std::vector<Eigen::VectorXd> values;

    int num_steps() const { return static_cast<int>(values.size()) - 1; }
    double time(int m) const { return m * dt; }
};

} // namespace agesemi
