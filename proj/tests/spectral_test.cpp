#include <gtest/gtest.h>

#include <random>

#include "agesemi/agesemi.hpp"
#include "test_support.hpp"

using namespace agesemi;

TEST(RenewalOperator, ScalarClosedForms) {
    const ModelSpec crit = scalar_model(1.0, 0.0, 1.0, 200);
    const Propagator pc = build_propagator(crit, 1);
    EXPECT_NEAR(renewal_operator(crit, pc, 0.0)(0, 0), 1.0, 1e-6);

    // beta (1 - e^{-(lambda+mu) a_max}) / (lambda + mu) with the quadrature
    // resolved fine enough for the contract tolerance
    const ModelSpec damped = scalar_model(2.0, 1.0, 10.0, 10000);
    const Propagator pd = build_propagator(damped, 1);
    const double expected = 2.0 * (1.0 - std::exp(-20.0)) / 2.0;
    EXPECT_NEAR(renewal_operator(damped, pd, 1.0)(0, 0), expected, 1e-6);

    const ModelSpec zero = scalar_model(0.0, 0.0, 1.0, 100);
    const Propagator pz = build_propagator(zero, 1);
    EXPECT_DOUBLE_EQ(renewal_operator(zero, pz, 3.0)(0, 0), 0.0);
}

TEST(RenewalOperator, InfiniteRegimeAdmissibility) {
    SpatialSpec sp;
    AgeGridSpec gs;
    gs.a_max = 1.0;
    gs.K = 100;
    gs.infinite = true;
    gs.decay_margin = 1.0;
    const ModelSpec m = build_diffusion_model(sp, PiecewiseLinear::constant(1.0),
                                              PiecewiseLinear::constant(0.5), gs);
    const Propagator p = build_propagator(m, 1);
    EXPECT_THROW(renewal_operator(m, p, -1.0), validation_error);
    EXPECT_THROW(renewal_operator(m, p, -1.5), validation_error);
    EXPECT_NO_THROW(renewal_operator(m, p, -0.5));
}

TEST(PerronRoot, OneByOne) {
    const SpectralReport rep = perron_root(Eigen::MatrixXd::Constant(1, 1, 2.0));
    EXPECT_DOUBLE_EQ(rep.r, 2.0);
    EXPECT_DOUBLE_EQ(rep.phi0[0], 1.0);
    EXPECT_DOUBLE_EQ(rep.wstar[0], 1.0);
    EXPECT_DOUBLE_EQ(rep.gap, 2.0);
}

TEST(PerronRoot, PermutationMatrixFlagsOscillation) {
    Eigen::MatrixXd P(2, 2);
    P << 0, 1, 1, 0;
    EXPECT_THROW(perron_root(P), numerical_error);
}

TEST(PerronRoot, SymmetricTwoByTwo) {
    Eigen::MatrixXd Q(2, 2);
    Q << 2, 1, 1, 2;
    const SpectralReport rep = perron_root(Q);
    EXPECT_NEAR(rep.r, 3.0, 1e-10);
    EXPECT_NEAR(rep.phi0[0], 0.5, 1e-10);
    EXPECT_NEAR(rep.phi0[1], 0.5, 1e-10);
    EXPECT_NEAR(rep.gap, 2.0, 1e-6);
    EXPECT_NEAR(rep.wstar.dot(rep.phi0), 1.0, 1e-12);
    EXPECT_LE((Q * rep.phi0 - rep.r * rep.phi0).norm(), 1e-10);
    EXPECT_LE((Q.transpose() * rep.wstar - rep.r * rep.wstar).norm(), 1e-10);
}

TEST(PerronRoot, RejectsBadInput) {
    EXPECT_THROW(perron_root(Eigen::MatrixXd::Zero(3, 3)), validation_error);
    Eigen::MatrixXd neg(2, 2);
    neg << 1, -0.5, 0, 1;
    EXPECT_THROW(perron_root(neg), validation_error);
    // nilpotent: iterate collapses to zero
    Eigen::MatrixXd nil(2, 2);
    nil << 0, 0, 1, 0;
    EXPECT_THROW(perron_root(nil), numerical_error);
}

TEST(PerronRoot, PositiveVectorsOnRandomIrreducible) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelSpec m = testsupport::random_valid_model(rng, 40);
        const Propagator p = build_propagator(m, 1);
        const SpectralReport rep = perron_root(renewal_operator(m, p, 0.3));
        ASSERT_GT(rep.r, 0.0);
        ASSERT_GT(rep.phi0.minCoeff(), 0.0);
        ASSERT_GT(rep.wstar.minCoeff(), 0.0);
        ASSERT_NEAR(rep.phi0.sum(), 1.0, 1e-12);
        ASSERT_NEAR(rep.wstar.dot(rep.phi0), 1.0, 1e-12);
    }
}

TEST(PerronRoot, OnlyPerronEigenvectorIsPositive) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(unit(rng) * 3);
        Eigen::MatrixXd Q(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) Q(i, j) = 0.05 + unit(rng);
        const SpectralReport rep = perron_root(Q);
        Eigen::EigenSolver<Eigen::MatrixXd> es(Q);
        for (int e = 0; e < n; ++e) {
            if (std::abs(es.eigenvalues()[e].real() - rep.r) < 1e-8 &&
                std::abs(es.eigenvalues()[e].imag()) < 1e-8)
                continue; // the Perron root itself
            Eigen::VectorXcd v = es.eigenvectors().col(e);
            int imax;
            v.cwiseAbs().maxCoeff(&imax);
            v /= v[imax];
            const bool has_negative = v.real().minCoeff() < -1e-8;
            const bool has_imag = v.imag().cwiseAbs().maxCoeff() > 1e-8;
            ASSERT_TRUE(has_negative || has_imag) << "eigenvalue " << es.eigenvalues()[e];
            ++checked;
        }
    }
    EXPECT_GT(checked, 20);
}

TEST(SpectralCurve, ScalarClosedForm) {
    const ModelSpec m = scalar_model(1.0, 0.0, 1.0, 200);
    const Propagator p = build_propagator(m, 1);
    const auto curve = spectral_radius_curve(m, p, {0.0, 1.0, 2.0});
    EXPECT_NEAR(curve[0].second, 1.0, 1e-9);
    EXPECT_NEAR(curve[1].second, (1.0 - std::exp(-1.0)), 1e-5);
    EXPECT_NEAR(curve[2].second, (1.0 - std::exp(-2.0)) / 2.0, 1e-5);
}

TEST(SpectralCurve, LargeShiftDampsTheRadius) {
    std::mt19937_64 rng(8);
    const ModelSpec m = testsupport::random_valid_model(rng, 60);
    const Propagator p = build_propagator(m, 1);
    const double lam = 50.0 / m.grid.a_max;
    const auto curve = spectral_radius_curve(m, p, {lam});
    EXPECT_LT(curve[0].second, 0.05);
}

TEST(SpectralCurve, DuplicatesAndOrdering) {
    const ModelSpec m = scalar_model(1.0, 0.0, 1.0, 100);
    const Propagator p = build_propagator(m, 1);
    const auto curve = spectral_radius_curve(m, p, {0.5, 0.5, 1.0});
    EXPECT_EQ(curve[0].second, curve[1].second);
    EXPECT_THROW(spectral_radius_curve(m, p, {1.0, 0.5}), validation_error);
}

TEST(SpectralCurve, StrictDecreaseOnRandomModels) {
    std::mt19937_64 rng(12);
    const std::vector<double> lambdas = {-1.0, -0.5, 0.0, 0.4, 0.9, 1.5, 2.2, 3.0};
    for (int trial = 0; trial < 10; ++trial) {
        const ModelSpec m = testsupport::random_valid_model(rng, 50);
        const Propagator p = build_propagator(m, 1);
        const auto curve = spectral_radius_curve(m, p, lambdas);
        for (std::size_t i = 1; i < curve.size(); ++i)
            ASSERT_LT(curve[i].second, curve[i - 1].second);
    }
}

TEST(FindLambda0, ScalarPresets) {
    const double tol = 1e-8;

    const ModelSpec sup = scalar_model(2.0, 0.0, 1.0, 200);
    const auto mal_sup = find_lambda0(sup, build_propagator(sup, 1), tol);
    ASSERT_TRUE(mal_sup.has_value());
    EXPECT_NEAR(mal_sup->lambda0, testsupport::scalar_lotka_root(2.0), 1e-4);
    EXPECT_NEAR(mal_sup->lambda0, 1.5936, 2e-4);
    EXPECT_LE(mal_sup->residual, tol);
    EXPECT_LT(mal_sup->bracket.first, mal_sup->lambda0);
    EXPECT_GT(mal_sup->bracket.second, mal_sup->lambda0);

    const ModelSpec sub = scalar_model(0.5, 0.0, 1.0, 200);
    const auto mal_sub = find_lambda0(sub, build_propagator(sub, 1), tol);
    ASSERT_TRUE(mal_sub.has_value());
    EXPECT_NEAR(mal_sub->lambda0, testsupport::scalar_lotka_root(0.5), 1e-4);
    EXPECT_NEAR(mal_sub->lambda0, -1.2564, 2e-4);

    const ModelSpec crit = scalar_model(1.0, 0.0, 1.0, 200);
    const auto mal_crit = find_lambda0(crit, build_propagator(crit, 1), 1e-10);
    ASSERT_TRUE(mal_crit.has_value());
    EXPECT_NEAR(mal_crit->lambda0, 0.0, 1e-6);
}

TEST(FindLambda0, NoRootInTruncatedInfiniteRegime) {
    SpatialSpec sp;
    AgeGridSpec gs;
    gs.a_max = 1.0;
    gs.K = 50;
    gs.infinite = true;
    gs.decay_margin = 0.9;
    const ModelSpec m = build_diffusion_model(sp, PiecewiseLinear::constant(1.0),
                                              PiecewiseLinear::constant(0.05), gs);
    const auto mal = find_lambda0(m, build_propagator(m, 1), 1e-8);
    EXPECT_FALSE(mal.has_value());
}

TEST(Classify, ScalarTrichotomy) {
    for (auto [beta, expect_r] : std::vector<std::pair<double, double>>{
             {0.5, 0.5}, {2.0, 2.0}, {1.0, 1.0}}) {
        const ModelSpec m = scalar_model(beta, 0.0, 1.0, 200);
        const StabilityReport rep = classify_stability(m, build_propagator(m, 1));
        EXPECT_NEAR(rep.r_q0, expect_r, 1e-9);
        if (beta < 1.0) EXPECT_EQ(rep.verdict, StabilityClass::Stable);
        if (beta > 1.0) EXPECT_EQ(rep.verdict, StabilityClass::AsynchronousGrowth);
        if (beta == 1.0) EXPECT_EQ(rep.verdict, StabilityClass::Critical);
    }
}

TEST(Eigenfunction, CriticalConstantProfile) {
    const ModelSpec m = scalar_model(1.0, 0.0, 1.0, 200);
    const Propagator p = build_propagator(m, 1);
    const EigenfunctionResult ef = generator_eigenfunction(m, p, 0.0);
    for (const auto& v : ef.phi.values) ASSERT_NEAR(v[0], ef.phi.values[0][0], 1e-12);
    EXPECT_LE(ef.bc_residual, 1e-6);
    EXPECT_LE(ef.pde_residual, 1e-10);
}

TEST(Eigenfunction, SupercriticalExponentialProfile) {
    const ModelSpec m = scalar_model(2.0, 0.0, 1.0, 200);
    const Propagator p = build_propagator(m, 1);
    const auto mal = find_lambda0(m, p, 1e-10);
    ASSERT_TRUE(mal.has_value());
    const EigenfunctionResult ef = generator_eigenfunction(m, p, mal->lambda0);
    for (int k = 0; k <= m.grid.K; ++k) {
        const double expected =
            ef.phi.values[0][0] * std::exp(-mal->lambda0 * m.grid.node(k));
        ASSERT_NEAR(ef.phi.values[k][0], expected, 1e-9);
    }
    EXPECT_LE(ef.bc_residual, 1e-6);
    // first-order backward difference of a smooth profile
    EXPECT_LE(ef.pde_residual, 3.0 * mal->lambda0 * mal->lambda0 * m.grid.da());
}

TEST(Eigenfunction, RejectsShiftAwayFromRootAndOffRootPrecondition) {
    const ModelSpec m = scalar_model(2.0, 0.0, 1.0, 200);
    const Propagator p = build_propagator(m, 1);
    EXPECT_THROW(generator_eigenfunction(m, p, 0.0), validation_error);
}

TEST(Eigenfunction, DiffusionModalProfile) {
    SpatialSpec sp;
    sp.n = 10;
    sp.L = 1.0;
    sp.D = 1.0;
    const ModelSpec m = build_diffusion_model(sp, PiecewiseLinear::constant(0.0),
                                              PiecewiseLinear::constant(12.0), {1.0, 150});
    const Propagator p = build_propagator(m, 2);
    const auto mal = find_lambda0(m, p, 1e-10);
    ASSERT_TRUE(mal.has_value());
    const EigenfunctionResult ef = generator_eigenfunction(m, p, mal->lambda0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.gen.A0[0]);
    const double kappa1 = es.eigenvalues()(0);
    Eigen::VectorXd mode = es.eigenvectors().col(0);
    if (mode.sum() < 0) mode = -mode;

    for (int k = 0; k <= m.grid.K; ++k) {
        const Eigen::VectorXd v = ef.phi.values[k];
        const double amp = mode.dot(v);
        ASSERT_LE((v - amp * mode).norm(), 1e-8 * v.norm()) << "node " << k;
        const double expected =
            mode.dot(ef.phi.values[0]) * std::exp(-(mal->lambda0 + kappa1) * m.grid.node(k));
        ASSERT_NEAR(amp, expected, 1e-8 * std::abs(mode.dot(ef.phi.values[0])));
    }
    EXPECT_LE(ef.bc_residual, 1e-6);
}

TEST(Eigenfunction, EigenmodePropagatesExactly) {
    const ModelSpec m = scalar_model(2.0, 0.0, 1.0, 200);
    const Propagator p = build_propagator(m, 1);
    const auto mal = find_lambda0(m, p, 1e-10);
    ASSERT_TRUE(mal.has_value());
    const EigenfunctionResult ef = generator_eigenfunction(m, p, mal->lambda0);

    const BirthTrajectory B = solve_birth(m, p, ef.phi, 3.0);
    SemigroupTrajectory traj(m, p, B, ef.phi);
    for (double t : {1.0, 2.0, 3.0}) {
        traj.advance_to(t);
        const double growth = std::exp(mal->lambda0 * t);
        const double err = e0_distance(traj.density(), scaled(growth, ef.phi));
        ASSERT_LE(err, 1e-6 * growth * e0_norm(ef.phi));
    }
}
