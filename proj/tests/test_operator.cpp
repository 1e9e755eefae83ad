#include <catch2/catch_amalgamated.hpp>

#include "fcm/algebra.hpp"
#include "systems.hpp"

using namespace fcm;

TEST_CASE("fully actuated inverse is zero state and negated identity control") {
    CoupledSystem sys = testsys::m2_reference();
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    CHECK(op.out_dim == 4);
    CHECK(op.in_dim == 2);
    CHECK(op.max_space_order == 0);
    CHECK(op.max_time_order == 0);

    std::vector<Poly2> u{Poly2::monomial(1, 1), Poly2::monomial(1, 1)};  // t x per component
    auto out = apply_operator_polynomial(op, u);
    CHECK(out[0].max_abs_coeff() == 0.0);
    CHECK(out[1].max_abs_coeff() == 0.0);
    CHECK((out[2] + u[0]).max_abs_coeff() == 0.0);
    CHECK((out[3] + u[1]).max_abs_coeff() == 0.0);

    CHECK(verify_right_inverse(sys, op, 5) == 0.0);
}

TEST_CASE("polynomial application basics") {
    DifferentialOperator ddx;
    ddx.out_dim = 1;
    ddx.in_dim = 1;
    ddx.n = 1;
    ddx.add(1, 1, 0, {1}, 1.0);
    auto out = apply_operator_polynomial(ddx, {Poly2::monomial(0, 3)});
    CHECK(out[0].coeffs()(0, 2) == Catch::Approx(3.0));

    auto zero = apply_operator_polynomial(ddx, {Poly2::zero()});
    CHECK(zero[0].max_abs_coeff() == 0.0);

    CHECK_THROWS_AS(apply_operator_polynomial(ddx, {}), DimensionMismatch);
}

TEST_CASE("right inverse for three controls over four equations") {
    CoupledSystem sys = testsys::m4c3();
    for (int p : {0, 1}) {
        DifferentialOperator op = extract_inverse_operator(sys, p);
        CHECK(op.max_space_order <= p + 2);
        CHECK(op.max_time_order <= 1);
        CHECK(verify_right_inverse(sys, op, 20) <= 1e-8);
    }
}

TEST_CASE("right inverse through the square candidate") {
    CoupledSystem sys = testsys::m5c3();
    for (int p : {2, 3}) {  // the candidate block appears two prolongations in
        DifferentialOperator op = extract_inverse_operator(sys, p);
        CHECK(op.max_space_order <= p + 2);
        CHECK(op.max_time_order <= 1);
        CHECK(verify_right_inverse(sys, op, 20) <= 1e-8);
    }
}

TEST_CASE("a corrupted coefficient is caught by the polynomial identity") {
    CoupledSystem sys = testsys::m4c3();
    DifferentialOperator op = extract_inverse_operator(sys, 0);
    REQUIRE(!op.coeffs.empty());
    // perturb the first state-row coefficient
    for (auto& [key, v] : op.coeffs) {
        if (key.out <= sys.m) {
            v += 0.01;
            break;
        }
    }
    CHECK(verify_right_inverse(sys, op, 10) >= 1e-2);
}

TEST_CASE("degenerate systems are rejected at extraction") {
    CoupledSystem sys = testsys::m4c3();
    for (int k = 0; k < 4; ++k) {
        sys.A(3, k) = 0.0;
        sys.G[3][static_cast<size_t>(k)](0) = 0.0;
    }
    CHECK_THROWS_AS(extract_inverse_operator(sys, 0), NotSolvableAtP);
}

TEST_CASE("operator application is linear") {
    CoupledSystem sys = testsys::m4c3();
    DifferentialOperator op = extract_inverse_operator(sys, 1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    auto rnd = [&]() {
        Eigen::MatrixXd c(3, 4);
        for (int i = 0; i < c.rows(); ++i)
            for (int j = 0; j < c.cols(); ++j) c(i, j) = unif(rng);
        return Poly2(c);
    };
    std::vector<Poly2> u, w, combo;
    for (int i = 0; i < 4; ++i) {
        u.push_back(rnd());
        w.push_back(rnd());
        combo.push_back(2.0 * u.back() - 0.5 * w.back());
    }
    auto a = apply_operator_polynomial(op, u);
    auto b = apply_operator_polynomial(op, w);
    auto c = apply_operator_polynomial(op, combo);
    for (size_t i = 0; i < c.size(); ++i)
        CHECK((c[i] - (2.0 * a[i] - 0.5 * b[i])).max_abs_coeff() <= 1e-12);
}
