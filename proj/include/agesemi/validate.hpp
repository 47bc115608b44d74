#pragma once

#include <string>

#include <Eigen/Dense>

#include "agesemi/model.hpp"
#include "agesemi/propagator.hpp"

namespace agesemi {

/// Check the standing structural assumptions: generator sign structure,
/// nonnegative birth kernel, and irreducibility of the aggregated
/// birth-times-flow matrix sum_k da * b_k * Pi(a_k, 0). Pure: identical
/// inputs yield identical reports.
inline ValidationReport validate_model(const ModelSpec& m) {
    ValidationReport rep;

    if (auto err = generator_sign_violation(m.gen, m.grid.num_nodes())) {
        rep.messages.push_back(*err);
    } else {
        rep.metzler_ok = true;
    }
    if (auto err = birth_sign_violation(m.birth, m.gen.n, m.grid.num_nodes())) {
        rep.messages.push_back(*err);
    } else {
        rep.birth_nonneg_ok = true;
    }
    if (m.infinite_age && !(m.decay_margin > 0.0)) {
        rep.metzler_ok = false;
        rep.messages.push_back("model: infinite age span declared without decay_margin > 0");
    }

    if (!rep.metzler_ok || !rep.birth_nonneg_ok) {
        rep.messages.push_back("irreducibility check skipped: sign checks failed");
        return rep;
    }

    const Propagator p = build_propagator(m, 1);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m.gen.n, m.gen.n);
    for (int k = 0; k <= m.grid.K; ++k) M += m.grid.da() * m.birth.b[k] * p.prefix[k];
    rep.irreducible_ok = irreducibility_check(M);
    if (!rep.irreducible_ok)
        rep.messages.push_back("birth-flow matrix is reducible");
    return rep;
}

} // namespace agesemi
