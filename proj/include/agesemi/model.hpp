#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "agesemi/errors.hpp"
#include "agesemi/grid.hpp"

namespace agesemi {

/// Scalar rate given as (age, value) samples, linearly interpolated between
/// samples and extended by its end values outside the sampled range.
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;

    explicit PiecewiseLinear(std::vector<std::pair<double, double>> samples)
        : samples_(std::move(samples)) {
        if (samples_.empty())
            throw validation_error("rate: needs at least one (age, value) sample");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            if (!std::isfinite(samples_[i].first) || !std::isfinite(samples_[i].second))
                throw validation_error("rate: non-finite sample at index " + std::to_string(i));
            if (i > 0 && !(samples_[i].first > samples_[i - 1].first))
                throw validation_error("rate: sample ages must be strictly increasing (index " +
                                       std::to_string(i) + ")");
        }
    }

    static PiecewiseLinear constant(double value) {
        return PiecewiseLinear({{0.0, value}});
    }

    double operator()(double age) const {
        if (age <= samples_.front().first) return samples_.front().second;
        if (age >= samples_.back().first) return samples_.back().second;
        auto it = std::upper_bound(samples_.begin(), samples_.end(), age,
                                   [](double a, const auto& s) { return a < s.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double t = (age - lo.first) / (hi.first - lo.first);
        return (1.0 - t) * lo.second + t * hi.second;
    }

    const std::vector<std::pair<double, double>>& samples() const { return samples_; }

private:
    std::vector<std::pair<double, double>> samples_;
};

/// Per-node values of the age-dependent generator A(a) = A0(a) + mu(a)*I.
/// A(a) acts as a decay generator: densities evolve by d/da phi = -A(a) phi,
/// so every A_k must have nonpositive off-diagonal entries for the flow to
/// preserve the nonnegative orthant.
struct GeneratorFamily {
    int n = 0;
    std::vector<Eigen::MatrixXd> A;   // A_k = A0_k + mu_k * I
    std::vector<double> mu;
    std::vector<Eigen::MatrixXd> A0;
};

/// Per-node birth operators b(a_k), entrywise nonnegative.
struct BirthKernel {
    std::vector<Eigen::MatrixXd> b;
};

/// A complete finite-dimensional problem instance. When the model stands in
/// for an unbounded age span (infinite_age), decay_margin is the declared
/// uniform decay rate of the propagator and bounds the admissible spectral
/// shifts from below.
struct ModelSpec {
    AgeGrid grid;
    GeneratorFamily gen;
    BirthKernel birth;
    bool infinite_age = false;
    double decay_margin = 0.0;

    int state_dim() const { return gen.n; }
};

struct AgeGridSpec {
    double a_max = 1.0;
    int K = 100;
    bool infinite = false;
    double decay_margin = 0.0;
    double tail_tol = 1e-10;
};

/// Resolve an age-grid request. An infinite age span is truncated where the
/// declared decay margin pushes the propagator norm below tail_tol; the step
/// requested by (a_max, K) is kept and the grid extended if necessary.
inline AgeGrid resolve_age_grid(const AgeGridSpec& spec) {
    if (spec.infinite) {
        if (!(spec.decay_margin > 0.0))
            throw validation_error("age grid: infinite age span requires decay_margin > 0");
        if (!(spec.tail_tol > 0.0 && spec.tail_tol < 1.0))
            throw validation_error("age grid: tail_tol must lie in (0, 1)");
        const double needed = -std::log(spec.tail_tol) / spec.decay_margin;
        AgeGrid base(spec.a_max, spec.K);
        if (needed > base.a_max) {
            const int K = static_cast<int>(std::ceil(needed / base.da()));
            return AgeGrid(K * base.da(), K);
        }
        return base;
    }
    return AgeGrid(spec.a_max, spec.K);
}

enum class Boundary { Dirichlet, Neumann };

/// Assemble A0 = -D * (3-point second difference) on n interior points of an
/// interval of length L. Dirichlet uses h = L/(n+1); Neumann uses the
/// cell-centered grid h = L/n with mirrored corner rows (diagonal D/h^2).
inline Eigen::MatrixXd diffusion_operator_1d(int n, double L, double D, Boundary bc) {
    if (n < 1) throw validation_error("diffusion operator: need n >= 1 points");
    if (!(L > 0.0)) throw validation_error("diffusion operator: L must be positive");
    if (D < 0.0) throw validation_error("diffusion operator: diffusivity must be nonnegative");

    const double h = (bc == Boundary::Dirichlet) ? L / (n + 1) : L / n;
    const double c = D / (h * h);
    Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        A0(i, i) = 2.0 * c;
        if (i > 0) A0(i, i - 1) = -c;
        if (i + 1 < n) A0(i, i + 1) = -c;
    }
    if (bc == Boundary::Neumann) {
        A0(0, 0) = c;
        A0(n - 1, n - 1) = c;
    }
    return A0;
}

struct SpatialSpec {
    double L = 1.0;
    int n = 1;
    double D = 0.0;
    Boundary boundary = Boundary::Dirichlet;
};

/// Build a 1-D diffusion model: age-independent spatial part, scalar
/// mortality and birth rates sampled on the age grid, b(a) = beta(a)*I.
inline ModelSpec build_diffusion_model(const SpatialSpec& spatial,
                                       const PiecewiseLinear& mortality,
                                       const PiecewiseLinear& birth,
                                       const AgeGridSpec& grid_spec) {
    const AgeGrid grid = resolve_age_grid(grid_spec);
    const Eigen::MatrixXd A0 =
        diffusion_operator_1d(spatial.n, spatial.L, spatial.D, spatial.boundary);
    const int n = spatial.n;

    ModelSpec m;
    m.grid = grid;
    m.infinite_age = grid_spec.infinite;
    m.decay_margin = grid_spec.decay_margin;
    m.gen.n = n;
    m.gen.A.reserve(grid.num_nodes());
    m.gen.mu.reserve(grid.num_nodes());
    m.gen.A0.assign(grid.num_nodes(), A0);
    m.birth.b.reserve(grid.num_nodes());

    for (int k = 0; k <= grid.K; ++k) {
        const double a = grid.node(k);
        const double mu = mortality(a);
        const double beta = birth(a);
        if (mu < 0.0)
            throw validation_error("mortality rate negative at age node " + std::to_string(k) +
                                   " (a = " + std::to_string(a) + ")");
        if (beta < 0.0)
            throw validation_error("birth rate negative at age node " + std::to_string(k) +
                                   " (a = " + std::to_string(a) + ")");
        m.gen.mu.push_back(mu);
        m.gen.A.push_back(A0 + mu * Eigen::MatrixXd::Identity(n, n));
        m.birth.b.push_back(beta * Eigen::MatrixXd::Identity(n, n));
    }
    return m;
}

/// Scalar (space-free) model with constant rates: A = [mu], b = [beta].
inline ModelSpec scalar_model(double beta, double mu, double a_max, int K) {
    SpatialSpec sp;
    sp.n = 1;
    sp.D = 0.0;
    return build_diffusion_model(sp, PiecewiseLinear::constant(mu),
                                 PiecewiseLinear::constant(beta), {a_max, K});
}

/// First structural violation of the generator family, if any.
inline std::optional<std::string> generator_sign_violation(const GeneratorFamily& gen,
                                                           int num_nodes) {
    if (gen.n < 1) return "generator: state dimension must be >= 1";
    if (static_cast<int>(gen.A.size()) != num_nodes ||
        static_cast<int>(gen.mu.size()) != num_nodes ||
        static_cast<int>(gen.A0.size()) != num_nodes)
        return "generator: node count does not match the age grid";
    for (int k = 0; k < num_nodes; ++k) {
        const auto& A = gen.A[k];
        if (A.rows() != gen.n || A.cols() != gen.n)
            return "generator: A has wrong shape at node " + std::to_string(k);
        if (!A.allFinite())
            return "generator: non-finite entry in A at node " + std::to_string(k);
        if (!(gen.mu[k] >= 0.0))
            return "generator: mortality negative at node " + std::to_string(k);
        for (int i = 0; i < gen.n; ++i)
            for (int j = 0; j < gen.n; ++j)
                if (i != j && A(i, j) > 0.0)
                    return "generator: positive off-diagonal A(" + std::to_string(i) + "," +
                           std::to_string(j) + ") at node " + std::to_string(k);
        const Eigen::MatrixXd recomposed =
            gen.A0[k] + gen.mu[k] * Eigen::MatrixXd::Identity(gen.n, gen.n);
        if ((recomposed - A).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + A.cwiseAbs().maxCoeff()))
            return "generator: A != A0 + mu*I at node " + std::to_string(k);
    }
    return std::nullopt;
}

inline std::optional<std::string> birth_sign_violation(const BirthKernel& birth, int n,
                                                       int num_nodes) {
    if (static_cast<int>(birth.b.size()) != num_nodes)
        return "birth kernel: node count does not match the age grid";
    for (int k = 0; k < num_nodes; ++k) {
        const auto& b = birth.b[k];
        if (b.rows() != n || b.cols() != n)
            return "birth kernel: wrong shape at node " + std::to_string(k);
        if (!b.allFinite())
            return "birth kernel: non-finite entry at node " + std::to_string(k);
        if (b.minCoeff() < 0.0)
            return "birth kernel: negative entry at node " + std::to_string(k);
    }
    return std::nullopt;
}

/// True iff the directed graph with an edge i -> j whenever M(j, i) > 0 is
/// strongly connected. A 1x1 matrix counts irreducible iff its entry is
/// positive.
inline bool irreducibility_check(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols())
        throw validation_error("irreducibility check: matrix must be square");
    if (!M.allFinite() || M.minCoeff() < 0.0)
        throw validation_error("irreducibility check: matrix must be entrywise nonnegative");
    const int n = static_cast<int>(M.rows());
    if (n == 1) return M(0, 0) > 0.0;

    auto reaches_all = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int j = 0; j < n; ++j) {
                const double entry = transpose ? M(i, j) : M(j, i);
                if (!seen[j] && entry > 0.0) {
                    seen[j] = 1;
                    ++count;
                    stack.push_back(j);
                }
            }
        }
        return count == n;
    };
    return reaches_all(false) && reaches_all(true);
}

struct ValidationReport {
    bool metzler_ok = false;
    bool birth_nonneg_ok = false;
    bool irreducible_ok = false;
    std::vector<std::string> messages;

    bool all_ok() const { return metzler_ok && birth_nonneg_ok && irreducible_ok; }
};

} // namespace agesemi
