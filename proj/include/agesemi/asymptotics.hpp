#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/model.hpp"
#include "agesemi/propagator.hpp"
#include "agesemi/resolvent.hpp"
#include "agesemi/semigroup.hpp"
#include "agesemi/spectral.hpp"

namespace agesemi {

/// Birth kernel integrated against the resolvent convolution part:
/// H_lambda phi = sum_k w_k b_k v_lambda(a_k).
inline Eigen::VectorXd h_lambda(const ModelSpec& m, const Propagator& p, double lambda,
                                const PopulationDensity& phi) {
    return birth_quadrature(m, resolvent_v_part(m, p, lambda, phi));
}

/// Rank-one spectral projection onto the growth mode at the Malthusian root:
///
///   P phi = [ <w*, H_{l0} phi> / <w*, sum_k w_k a_k e^{-l0 a_k} b_k Pi(a_k,0) Phi0> ]
///           * e^{-l0 a} Pi(a, 0) Phi0.
///
/// The denominator quadrature uses the same weights as H, which makes the
/// projector idempotent on the grid to round-off.
class SpectralProjector {
public:
    SpectralProjector(const ModelSpec& m, const Propagator& p, const MalthusianResult& mal,
                      double tol = 1e-6)
        : model_(&m), prop_(&p), lambda0_(mal.lambda0) {
        if (!(mal.residual <= tol))
            throw validation_error("projection: Malthusian residual " +
                                   std::to_string(mal.residual) + " exceeds tolerance");
        const SpectralReport rep = perron_root(renewal_operator(m, p, lambda0_));
        if (!(rep.gap > 0.0))
            throw numerical_error("projection: Perron data at lambda0 has no spectral gap");
        wstar_ = rep.wstar;

        eigenfunction_ = PopulationDensity(m.grid, m.state_dim());
        const auto w = m.grid.trapezoid_weights();
        Eigen::VectorXd den_vec = Eigen::VectorXd::Zero(m.state_dim());
        for (int k = 0; k <= m.grid.K; ++k) {
            const double a = m.grid.node(k);
            eigenfunction_.values[k] = std::exp(-lambda0_ * a) * (p.prefix[k] * rep.phi0);
            den_vec.noalias() += (w[k] * a) * (m.birth.b[k] * eigenfunction_.values[k]);
        }
        denominator_ = wstar_.dot(den_vec);
        const double scale = wstar_.norm() * den_vec.norm();
        if (!(denominator_ > 1e-12 * std::max(1.0, scale)))
            throw numerical_error("projection: denominator pairing is not positive; "
                                  "inconsistent Perron data");
    }

    double lambda0() const { return lambda0_; }
    const PopulationDensity& eigenfunction() const { return eigenfunction_; }

    double coefficient(const PopulationDensity& phi) const {
        return wstar_.dot(h_lambda(*model_, *prop_, lambda0_, phi)) / denominator_;
    }

    PopulationDensity apply(const PopulationDensity& phi) const {
        return scaled(coefficient(phi), eigenfunction_);
    }

private:
    const ModelSpec* model_;
    const Propagator* prop_;
    double lambda0_;
    Eigen::VectorXd wstar_;
    PopulationDensity eigenfunction_;
    double denominator_ = 0.0;
};

inline PopulationDensity projection_apply(const ModelSpec& m, const Propagator& p,
                                          const MalthusianResult& mal,
                                          const PopulationDensity& phi) {
    return SpectralProjector(m, p, mal).apply(phi);
}

struct ProjectionPropertiesReport {
    double max_idempotence_rel = 0.0;   // ||P(P phi) - P phi|| / ||phi||
    double max_collinearity_rel = 0.0;  // distance of P phi to span(eigenfunction), / ||phi||
    double max_commutation_const = 0.0; // ||P S(t) phi - e^{l0 t} P phi|| / (da e^{l0 t} ||phi||)
};

/// Exercise the structural properties of the projection on a batch of
/// densities: idempotence, one-dimensional range, and commutation with the
/// semigroup at a few aligned times up to t = 3.
inline ProjectionPropertiesReport projection_properties_check(
    const ModelSpec& m, const Propagator& p, const MalthusianResult& mal,
    const std::vector<PopulationDensity>& samples) {
    const SpectralProjector proj(m, p, mal);
    const PopulationDensity& ef = proj.eigenfunction();
    const double ef_sq = e0_inner(ef, ef);
    const double da = m.grid.da();
    const std::vector<double> times = {1.0, 2.0, 3.0};

    ProjectionPropertiesReport rep;
    for (const auto& phi : samples) {
        const double phi_norm = e0_norm(phi);
        if (!(phi_norm > 0.0)) throw validation_error("projection properties: zero sample");
        const PopulationDensity Pphi = proj.apply(phi);

        rep.max_idempotence_rel = std::max(
            rep.max_idempotence_rel, e0_distance(proj.apply(Pphi), Pphi) / phi_norm);

        const double c = e0_inner(Pphi, ef) / ef_sq;
        rep.max_collinearity_rel = std::max(
            rep.max_collinearity_rel, e0_norm(axpy(-c, ef, Pphi)) / phi_norm);

        const BirthTrajectory B = solve_birth(m, p, phi, times.back());
        SemigroupTrajectory traj(m, p, B, phi);
        for (double t : times) {
            traj.advance_to(t);
            const double growth = std::exp(proj.lambda0() * t);
            const double err =
                e0_distance(proj.apply(traj.density()), scaled(growth, Pphi));
            rep.max_commutation_const =
                std::max(rep.max_commutation_const, err / (da * growth * phi_norm));
        }
    }
    return rep;
}

struct AsyncGrowthReport {
    std::vector<double> times;
    std::vector<double> errors; // e(t) = || e^{-l0 t} S(t) phi - P phi ||
    double fitted_rate = 0.0;   // g in e(t) ~ C exp(-g t) over the fit window
    double transient_cutoff = 0.0;
    bool decay_detected = false;
    bool already_converged = false;
};

/// Follow e(t) = ||e^{-lambda0 t} S(t) phi - P phi|| along the trajectory and
/// fit its decay rate on the last half of the samples above the noise floor.
/// No decay (fitted rate <= 0) is reported, not thrown, with the trajectory
/// attached.
inline AsyncGrowthReport async_growth_verify(const ModelSpec& m, const Propagator& p,
                                             const MalthusianResult& mal,
                                             const PopulationDensity& phi, double T) {
    const double phi_norm = e0_norm(phi);
    if (!(phi_norm > 0.0)) throw validation_error("async_growth_verify: phi must be nonzero");
    const SpectralProjector proj(m, p, mal);
    const PopulationDensity Pphi = proj.apply(phi);

    const BirthTrajectory B = solve_birth(m, p, phi, T);
    SemigroupTrajectory traj(m, p, B, phi);

    AsyncGrowthReport rep;
    const int M = B.num_steps();
    rep.times.reserve(M + 1);
    rep.errors.reserve(M + 1);
    for (int mstep = 0; mstep <= M; ++mstep) {
        if (mstep > 0) traj.step();
        const double t = traj.time();
        const double damp = std::exp(-mal.lambda0 * t);
        rep.times.push_back(t);
        rep.errors.push_back(e0_distance(scaled(damp, traj.density()), Pphi));
    }

    rep.transient_cutoff = rep.times.back();
    for (std::size_t i = 0; i < rep.errors.size(); ++i)
        if (rep.errors[i] < 0.5 * rep.errors.front()) {
            rep.transient_cutoff = rep.times[i];
            break;
        }

    const double noise = 1e-12 * std::max(1.0, phi_norm);
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < rep.errors.size(); ++i)
        if (rep.errors[i] > noise) usable.push_back(i);

    if (usable.size() < 4) {
        rep.already_converged = true;
        rep.decay_detected = true;
        rep.fitted_rate = 0.0;
        return rep;
    }

    double st = 0.0, se = 0.0, stt = 0.0, ste = 0.0;
    const std::size_t begin = usable.size() / 2;
    int cnt = 0;
    for (std::size_t i = begin; i < usable.size(); ++i) {
        const double t = rep.times[usable[i]];
        const double le = std::log(rep.errors[usable[i]]);
        st += t;
        se += le;
        stt += t * t;
        ste += t * le;
        ++cnt;
    }
    const double denom = cnt * stt - st * st;
    rep.fitted_rate = denom > 0.0 ? -(cnt * ste - st * se) / denom : 0.0;
    rep.decay_detected = rep.fitted_rate > 0.0;
    return rep;
}

struct ResiduePoint {
    double delta = 0.0;
    double error = 0.0;
    bool refused = false; // conditioning refusal at this offset
};

struct ResidueCheckReport {
    std::vector<ResiduePoint> points;
    double projection_norm = 0.0;
};

/// Approach the Malthusian root from the right and compare the scaled
/// near-pole resolvent core (lambda - lambda0)(I - Q_lambda)^{-1} H_lambda phi,
/// pushed through the tilted flow, against the projection formula.
inline ResidueCheckReport residue_limit_check(const ModelSpec& m, const Propagator& p,
                                              const MalthusianResult& mal,
                                              const PopulationDensity& phi,
                                              const std::vector<double>& deltas = {1e-2, 1e-3,
                                                                                   1e-4},
                                              double cond_threshold = 1e12) {
    const SpectralProjector proj(m, p, mal);
    const PopulationDensity Pphi = proj.apply(phi);

    ResidueCheckReport rep;
    rep.projection_norm = e0_norm(Pphi);
    const int n = m.state_dim();
    for (double delta : deltas) {
        ResiduePoint pt;
        pt.delta = delta;
        const double lambda = mal.lambda0 + delta;
        const Eigen::MatrixXd Q = renewal_operator(m, p, lambda);
        Eigen::VectorXd core(n);
        try {
            core = detail::factor_renewal_complement(Q, cond_threshold, lambda,
                                                     "residue_limit_check")
                       .solve(h_lambda(m, p, lambda, phi));
        } catch (const numerical_error&) {
            pt.refused = true;
            rep.points.push_back(pt);
            continue;
        }
        PopulationDensity R(m.grid, n);
        for (int k = 0; k <= m.grid.K; ++k)
            R.values[k] =
                delta * std::exp(-lambda * m.grid.node(k)) * (p.prefix[k] * core);
        pt.error = e0_distance(R, Pphi);
        rep.points.push_back(pt);
    }
    return rep;
}

} // namespace agesemi
