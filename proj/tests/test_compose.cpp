#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fcm/compose.hpp"
#include "fcm/carleman.hpp"
#include "systems.hpp"

using namespace fcm;

namespace {

/// Smooth synthetic control supported strictly inside the cutoff support.
TrajectoryField synthetic_theta_v(const CoupledSystem& sys, const Grid& g,
                                  const CutoffFamily& cf) {
    TrajectoryField f(g, sys.m);
    const double xm = cf.center;
    const double w = 0.5 * (cf.supp_b - cf.supp_a);
    for (int k = 0; k <= g.Nt; ++k) {
        const double t = g.t(k);
        const double bump_t = std::pow(std::sin(M_PI * t / sys.T), 6);
        for (int p = 0; p < sys.m; ++p)
            for (int i = 0; i < g.Nx; ++i) {
                const double u = (g.x(i) - xm) / w;
                const double bump_x = std::abs(u) < 1.0 ? std::pow(1.0 - u * u, 6) : 0.0;
                f.at(k, p, i) = (1.0 + 0.3 * p) * bump_t * bump_x;
            }
    }
    return f;
}

}  // namespace

TEST_CASE("zero input synthesizes to zero") {
    CoupledSystem sys = testsys::m4c3();
    Grid g(80, 60, sys.L, sys.T);
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    auto [y_hat, u_hat] = synthesize_reduced(sys, op, TrajectoryField(g, 4), g);
    CHECK(y_hat.max_abs() == 0.0);
    CHECK(u_hat.max_abs() == 0.0);
    CHECK(verify_algebraic_residual(sys, y_hat, u_hat, TrajectoryField(g, 4), g) == 0.0);
}

TEST_CASE("fully actuated operator returns the negated source as control") {
    CoupledSystem sys = testsys::m2_reference();
    Grid g(60, 50, sys.L, sys.T);
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    CutoffFamily cf = build_cutoffs(sys.omega_a, sys.omega_b, 0, g.dx());
    TrajectoryField tv = synthetic_theta_v(sys, g, cf);
    auto [y_hat, u_hat] = synthesize_reduced(sys, op, tv, g);
    CHECK(y_hat.max_abs() == 0.0);
    for (int k = 0; k <= g.Nt; ++k)
        CHECK((u_hat.frame(k) + tv.frame(k)).cwiseAbs().maxCoeff() == 0.0);
    // residual vanishes to round-off: no derivatives are applied at all
    CHECK(verify_algebraic_residual(sys, y_hat, u_hat, tv, g) <= 1e-12);

    ComposedSolution sol = combine_and_verify(sys, y_hat, y_hat, u_hat, g);
    // y = 0 - 0, u = theta v on the actuated components
    CHECK(sol.terminal_norm == 0.0);
    for (int k = 0; k <= g.Nt; ++k)
        CHECK((sol.u.frame(k) - tv.frame(k)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synthesis is linear in the source") {
    CoupledSystem sys = testsys::m4c3();
    Grid g(100, 60, sys.L, sys.T);
    DifferentialOperator op = extract_inverse_operator(sys, 1);
    CutoffFamily cf = build_cutoffs(sys.omega_a, sys.omega_b, 1, g.dx());
    TrajectoryField tv = synthetic_theta_v(sys, g, cf);
    TrajectoryField tv3 = tv;
    for (int k = 0; k <= g.Nt; ++k) tv3.frame(k) *= -3.0;

    auto [y1, u1] = synthesize_reduced(sys, op, tv, g);
    auto [y3, u3] = synthesize_reduced(sys, op, tv3, g);
    for (int k = 0; k <= g.Nt; ++k) {
        CHECK((y3.frame(k) + 3.0 * y1.frame(k)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((u3.frame(k) + 3.0 * u1.frame(k)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("reduced solution satisfies its equation under refinement") {
    CoupledSystem sys = testsys::m4c3();
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    auto residual_at = [&](int Nx, int Nt) {
        Grid g(Nx, Nt, sys.L, sys.T);
        CutoffFamily cf = build_cutoffs(sys.omega_a, sys.omega_b, 0, g.dx());
        TrajectoryField tv = synthetic_theta_v(sys, g, cf);
        auto [y_hat, u_hat] = synthesize_reduced(sys, op, tv, g);
        return verify_algebraic_residual(sys, y_hat, u_hat, tv, g);
    };
    const double coarse = residual_at(200, 200);
    const double fine = residual_at(401, 400);
    CHECK(coarse / fine >= 1.8);
}

TEST_CASE("control support stays inside the control region") {
    CoupledSystem sys = testsys::m4c3();
    Grid g(200, 100, sys.L, sys.T);
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    CutoffFamily cf = build_cutoffs(sys.omega_a, sys.omega_b, 0, g.dx());
    TrajectoryField tv = synthetic_theta_v(sys, g, cf);
    auto [y_hat, u_hat] = synthesize_reduced(sys, op, tv, g);
    for (int k = 0; k <= g.Nt; ++k)
        for (int p = 0; p < sys.c; ++p)
            for (int i = 0; i < g.Nx; ++i)
                if (g.x(i) <= sys.omega_a || g.x(i) >= sys.omega_b)
                    CHECK(u_hat.at(k, p, i) == 0.0);
}

TEST_CASE("combination with a zero reduced pair returns the fictitious run") {
    CoupledSystem sys = testsys::m4c3();
    Grid g(60, 40, sys.L, sys.T);
    TrajectoryField y_tilde(g, 4);
    for (int k = 0; k <= g.Nt; ++k) y_tilde.frame(k).setRandom();
    ComposedSolution sol =
        combine_and_verify(sys, y_tilde, TrajectoryField(g, 4), TrajectoryField(g, 3), g);
    for (int k = 0; k <= g.Nt; ++k) {
        CHECK((sol.y.frame(k) - y_tilde.frame(k)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(sol.u.frame(k).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(sol.support_violation == 0.0);
    CHECK(sol.y_hat_initial_norm == 0.0);
    CHECK(sol.y_hat_terminal_norm == 0.0);
}

TEST_CASE("stencils that cannot fit are rejected") {
    CoupledSystem sys = testsys::m5c3();
    DifferentialOperator op = extract_inverse_operator(sys, 3);
    Grid tiny(6, 10, sys.L, sys.T);
    CHECK_THROWS_AS(synthesize_reduced(sys, op, TrajectoryField(tiny, 5), tiny), GridTooCoarse);
}
