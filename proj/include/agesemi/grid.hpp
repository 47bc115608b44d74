#pragma once

#include <vector>

#include "agesemi/errors.hpp"

namespace agesemi {

/// Uniform age grid a_k = k*da on [0, a_max] with K intervals (K+1 nodes).
/// The time grid used elsewhere carries the same step, so characteristics
/// land on nodes.
struct AgeGrid {
    double a_max = 0.0;
    int K = 0;

    AgeGrid() = default;
    AgeGrid(double a_max_, int K_) : a_max(a_max_), K(K_) {
        if (!(a_max > 0.0))
            throw validation_error("AgeGrid: a_max must be positive");
        if (K < 1)
            throw validation_error("AgeGrid: need at least one interval");
    }

    double da() const { return a_max / K; }

    double node(int k) const { return k == K ? a_max : k * da(); }

    int num_nodes() const { return K + 1; }

    /// Composite trapezoid weights: da/2 at both ends, da inside.
    std::vector<double> trapezoid_weights() const {
        std::vector<double> w(K + 1, da());
        w.front() = 0.5 * da();
        w.back() = 0.5 * da();
        return w;
    }

    bool same_as(const AgeGrid& o) const { return K == o.K && a_max == o.a_max; }
};

} // namespace agesemi
