#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <set>

#include "fcm/algebra.hpp"
#include "systems.hpp"

using namespace fcm;

namespace {

// 4 x 3 pattern with structural rank 3 and two distinct maximum matchings
SparsePattern sample_4x3() {
    SparsePattern p;
    p.rows = 4;
    p.cols = 3;
    p.entries = {{0, 0, 1.0}, {0, 1, 2.0}, {1, 2, 3.0}, {2, 1, 4.0}, {3, 0, 5.0}, {3, 2, 6.0}};
    return p;
}

SparsePattern random_pattern(std::mt19937_64& rng, int max_dim = 30, double density = 0.2) {
    std::uniform_int_distribution<int> dim(1, max_dim);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::bernoulli_distribution hit(density);
    SparsePattern p;
    p.rows = dim(rng);
    p.cols = dim(rng);
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c)
            if (hit(rng)) p.entries.push_back({r, c, unif(rng)});
    return p;
}

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("maximum matching cardinalities") {
    CHECK(maximum_matching(sample_4x3()).size() == 3);

    SparsePattern diag;
    diag.rows = diag.cols = 5;
    for (int i = 0; i < 5; ++i) diag.entries.push_back({i, i, 1.0});
    Matching m = maximum_matching(diag);
    REQUIRE(m.size() == 5);
    for (auto [r, c] : m) CHECK(r == c);

    SparsePattern empty;
    empty.rows = 3;
    empty.cols = 4;
    CHECK(maximum_matching(empty).empty());
}

TEST_CASE("structural rank dominates numeric rank") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        SparsePattern p = random_pattern(rng);
        const size_t structural = maximum_matching(p).size();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(p.dense());
        lu.setThreshold(1e-10);
        CHECK(structural >= static_cast<size_t>(lu.rank()));
        CHECK(structural <= static_cast<size_t>(std::min(p.rows, p.cols)));
    }
}

TEST_CASE("alternating reachability from a prescribed matching") {
    SparsePattern p = sample_4x3();
    Matching m1 = {{0, 0}, {1, 2}, {2, 1}};
    DMDecomposition dm = dulmage_mendelsohn(p, m1);
    CHECK(as_set(dm.VR) == std::set<int>{0, 1, 2, 3});
    CHECK(as_set(dm.VC) == std::set<int>{0, 1, 2});
    CHECK(dm.HR.empty());
    CHECK(dm.SR.empty());
}

TEST_CASE("non-maximum or malformed matchings are rejected") {
    SparsePattern p = sample_4x3();
    CHECK_THROWS_AS(dulmage_mendelsohn(p, Matching{{0, 0}}), InvalidMatching);
    CHECK_THROWS_AS(dulmage_mendelsohn(p, Matching{{0, 2}, {1, 1}, {2, 0}}), InvalidMatching);
    CHECK_THROWS_AS(dulmage_mendelsohn(p, Matching{{0, 0}, {0, 1}}), InvalidMatching);
}

TEST_CASE("square perfectly matched pattern is a single block") {
    SparsePattern p;
    p.rows = p.cols = 3;
    p.entries = {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 2, 1}, {2, 0, 1}, {2, 2, 1}};
    DMDecomposition dm = dulmage_mendelsohn(p, maximum_matching(p));
    CHECK(dm.VR.empty());
    CHECK(dm.HR.empty());
    CHECK(as_set(dm.SR) == std::set<int>{0, 1, 2});
    CHECK(as_set(dm.SC) == std::set<int>{0, 1, 2});
}

TEST_CASE("partitions are exhaustive and the permuted form is block triangular") {
    std::mt19937_64 rng(321);
    for (int trial = 0; trial < 200; ++trial) {
        SparsePattern p = random_pattern(rng, 25, 0.15);
        Matching m = maximum_matching(p);
        DMDecomposition dm = dulmage_mendelsohn(p, m);

        CHECK(dm.VR.size() + dm.HR.size() + dm.SR.size() == static_cast<size_t>(p.rows));
        CHECK(dm.VC.size() + dm.HC.size() + dm.SC.size() == static_cast<size_t>(p.cols));

        Eigen::MatrixXd D = p.dense();
        Eigen::MatrixXd P(p.rows, p.cols);
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                P(r, c) = D(dm.row_perm[static_cast<size_t>(r)], dm.col_perm[static_cast<size_t>(c)]);

        const int hr = dm.row_block_bounds[1];
        const int sr = dm.row_block_bounds[2];
        const int hc = dm.col_block_bounds[2];  // all HC columns
        const int sc = dm.col_block_bounds[3];
        // rows below HR carry nothing in the HC columns
        if (p.rows > hr && hc > 0) CHECK(P.block(hr, 0, p.rows - hr, hc).cwiseAbs().maxCoeff() == 0.0);
        // rows of the overdetermined part carry nothing left of VC
        if (p.rows > sr && sc > 0) CHECK(P.block(sr, 0, p.rows - sr, sc).cwiseAbs().maxCoeff() == 0.0);

        // square diagonal blocks have nonzero diagonals
        for (int i = 0; i < dm.col_block_bounds[2] - dm.col_block_bounds[1]; ++i)
            CHECK(P(i, dm.col_block_bounds[1] + i) != 0.0);
        for (int i = 0; i < sc - hc; ++i) CHECK(P(hr + i, hc + i) != 0.0);
        for (int i = 0; i < dm.row_block_bounds[3] - sr; ++i)
            if (sr + i < dm.row_block_bounds[3] && i < static_cast<int>(dm.VC.size()))
                CHECK(P(sr + i, sc + i) != 0.0);
    }
}

TEST_CASE("block boundaries are matching independent") {
    std::mt19937_64 rng(555);
    for (int trial = 0; trial < 200; ++trial) {
        SparsePattern p = random_pattern(rng, 20, 0.2);
        Matching m1 = maximum_matching(p);

        // a second maximum matching from the reversed-row pattern
        SparsePattern rev = p;
        for (auto& e : rev.entries) e.r = p.rows - 1 - e.r;
        Matching m2 = maximum_matching(rev);
        for (auto& e : m2) e.first = p.rows - 1 - e.first;

        DMDecomposition d1 = dulmage_mendelsohn(p, m1);
        DMDecomposition d2 = dulmage_mendelsohn(p, m2);
        CHECK(as_set(d1.VR) == as_set(d2.VR));
        CHECK(as_set(d1.HR) == as_set(d2.HR));
        CHECK(as_set(d1.SR) == as_set(d2.SR));
        CHECK(as_set(d1.VC) == as_set(d2.VC));
        CHECK(as_set(d1.HC) == as_set(d2.HC));
        CHECK(as_set(d1.SC) == as_set(d2.SC));
    }
}

TEST_CASE("overdetermined block of the five-component prolonged system") {
    CoupledSystem sys = testsys::m5c3();
    ProlongedSystem ps = build_prolonged_matrix(sys, 3);
    DMDecomposition dm = dulmage_mendelsohn(ps.pat, maximum_matching(ps.pat));
    CHECK(dm.VR.size() == 12);
    CHECK(dm.VC.size() == 10);
    // every overdetermined row is a prolonged actuated equation
    for (int r : dm.VR) CHECK(ps.rows[static_cast<size_t>(r)].eq <= sys.c);
    // every overdetermined column is a spatial derivative of order <= p + 1
    for (int c : dm.VC) {
        CHECK_FALSE(ps.cols[static_cast<size_t>(c)].time_deriv);
        CHECK(mi_order(ps.cols[static_cast<size_t>(c)].gamma) <= 4);
    }
}
