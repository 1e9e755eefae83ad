#pragma once

// Reference systems shared across the test suites.

#include <random>

#include "fcm/model.hpp"

namespace testsys {

/// Fully actuated two-component reference system (analytic stage).
inline fcm::CoupledSystem m2_reference() {
    Eigen::MatrixXd G(2, 2), A(2, 2);
    G << 0.0, 0.4, -0.3, 0.2;
    A << 0.5, 1.0, 0.8, -0.3;
    return fcm::make_system_1d(2, 2, {1.0, 0.8}, G, A, 0.5, 1.0, 0.2, 0.8);
}

/// Four equations, three controls: the c >= h regime (h = 2).
inline fcm::CoupledSystem m4c3() {
    Eigen::MatrixXd G(4, 4), A(4, 4);
    // last-row couplings chosen so every 2x2 rank block is far from singular
    A << 0.20, -0.30, 0.10, 0.40,
        -0.10, 0.25, 0.35, -0.20,
        0.15, -0.05, -0.30, 0.10,
        0.90, 0.50, -0.70, 0.05;
    G << 0.00, 0.10, -0.20, 0.30,
        0.20, 0.00, 0.15, -0.10,
        -0.15, 0.25, 0.00, 0.20,
        0.40, -0.60, 0.30, 0.00;
    return fcm::make_system_1d(4, 3, {1.0, 0.9, 1.1, 0.8}, G, A, 0.5, 1.0, 0.2, 0.8);
}

/// Five equations, three controls: the c < h regime (h = 4), square-candidate path.
inline fcm::CoupledSystem m5c3(std::uint64_t seed = 42) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::MatrixXd G(5, 5), A(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            A(i, j) = unif(rng);
            G(i, j) = unif(rng);
        }
    std::vector<double> d;
    for (int p = 0; p < 5; ++p) d.push_back(1.0 + 0.2 * unif(rng));
    return fcm::make_system_1d(5, 3, d, G, A, 0.5, 1.0, 0.2, 0.8);
}

}  // namespace testsys
