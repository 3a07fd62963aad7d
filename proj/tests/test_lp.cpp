// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"

namespace kr = koopman_reach;
using kr::HalfSpace;
using kr::Matrix;
using kr::Vector;

namespace {

std::vector<HalfSpace> to_halfspaces(const Matrix& a, const Vector& b) {
    std::vector<HalfSpace> out;
    for (Eigen::Index i = 0; i < a.rows(); ++i) out.emplace_back(a.row(i).transpose(), b(i));
    return out;
}

}  // namespace

TEST(Lp, UnitSquareBounds) {
    Matrix a(4, 2);
    a << 1, 0, -1, 0, 0, 1, 0, -1;
    Vector b(4);
    b << 1, 0, 1, 0;
    const auto hs = to_halfspaces(a, b);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto r = kr::bound_variable(hs, i);
        ASSERT_EQ(r.status, kr::LpStatus::optimal);
        EXPECT_NEAR(r.bounds->lo(), 0.0, 1e-12);
        EXPECT_NEAR(r.bounds->hi(), 1.0, 1e-12);
    }
}

TEST(Lp, TriangleBounds) {
    // x >= 0, y >= 0, x + 2y <= 2.
    Matrix a(3, 2);
    a << -1, 0, 0, -1, 1, 2;
    Vector b(3);
    b << 0, 0, 2;
    const auto hs = to_halfspaces(a, b);
    EXPECT_NEAR(kr::bound_variable(hs, 0).bounds->hi(), 2.0, 1e-12);
    EXPECT_NEAR(kr::bound_variable(hs, 1).bounds->hi(), 1.0, 1e-12);
    Vector c(2);
    c << 1, 1;
    const auto r = kr::lp_maximize(c, a, b);
    ASSERT_EQ(r.status, kr::LpStatus::optimal);
    EXPECT_NEAR(r.value, 2.0, 1e-12);
}

TEST(Lp, InfeasibleAndUnbounded) {
    Matrix a(2, 1);
    a << 1, -1;
    Vector b(2);
    b << 0, -1;  // x <= 0 and x >= 1
    EXPECT_EQ(kr::bound_variable(to_halfspaces(a, b), 0).status, kr::LpStatus::infeasible);
    Matrix a2(1, 2);
    a2 << 1, 1;
    Vector b2(1);
    b2 << 1;
    EXPECT_EQ(kr::bound_variable(to_halfspaces(a2, b2), 0).status, kr::LpStatus::unbounded);
}

TEST(Lp, FreeVariablesAndNegativeRightHandSides) {
    // -3 <= x <= -1, -5 <= y <= 4.
    Matrix a(4, 2);
    a << 1, 0, -1, 0, 0, 1, 0, -1;
    Vector b(4);
    b << -1, 3, 4, 5;
    const auto hs = to_halfspaces(a, b);
    EXPECT_NEAR(kr::bound_variable(hs, 0).bounds->lo(), -3.0, 1e-12);
    EXPECT_NEAR(kr::bound_variable(hs, 0).bounds->hi(), -1.0, 1e-12);
    EXPECT_NEAR(kr::bound_variable(hs, 1).bounds->lo(), -5.0, 1e-12);
}

TEST(Lp, MatchesVertexEnumerationOnRandomPolytopes) {
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index n = kr_test::uniform_int(2, 3);
        const Eigen::Index m = kr_test::uniform_int(static_cast<int>(n) + 2, 8);
        Matrix a(m + 2 * n, n);
        Vector b(m + 2 * n);
        a.topRows(m) = kr_test::random_matrix(m, n);
        b.head(m) = kr_test::random_vector(m, 2.0);
        // A bounding box keeps the polytope bounded.
        a.bottomRows(2 * n) << Matrix::Identity(n, n), -Matrix::Identity(n, n);
        b.tail(2 * n).setConstant(3.0);
        const Vector c = kr_test::random_vector(n);
        const auto ref = kr_test::vertex_enumeration_max(c, a, b);
        const auto r = kr::lp_maximize(c, a, b);
        if (!ref) {
            EXPECT_EQ(r.status, kr::LpStatus::infeasible);
            continue;
        }
        ASSERT_EQ(r.status, kr::LpStatus::optimal);
        EXPECT_NEAR(r.value, *ref, 1e-8);
        EXPECT_LE(((a * r.x - b).array()).maxCoeff(), 1e-8);
    }
}

TEST(Lp, EmptyConstraintListIsUnbounded) {
    std::vector<HalfSpace> none;
    EXPECT_EQ(kr::bound_variable(none, 0).status, kr::LpStatus::unbounded);
}
