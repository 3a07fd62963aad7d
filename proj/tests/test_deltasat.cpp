// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>

#include "oracles.hpp"

namespace kr = koopman_reach;
using kr::ConstraintSystem;
using kr::Interval;
using kr::IntervalBox;
using kr::Relation;

namespace {

ConstraintSystem disc_and_line(double line_rhs) {
    // x^2 + y^2 <= 1 and x + y >= line_rhs over [-2,2]^2.
    ConstraintSystem sys(IntervalBox({Interval(-2, 2), Interval(-2, 2)}));
    sys.add_constraint(kr::parse_expr("x1^2 + x2^2"), Relation::le, 1.0);
    sys.add_constraint(kr::parse_expr("x1 + x2"), Relation::ge, line_rhs);
    return sys;
}

void write_script(const std::filesystem::path& p, const std::string& answer) {
    std::ofstream os(p);
    os << "#!/bin/sh\necho " << answer << "\n";
    os.close();
    std::filesystem::permissions(p, std::filesystem::perms::owner_all);
}

}  // namespace

TEST(DeltaSat, DiscAndLineVerdicts) {
    kr::SolverOptions opt;
    opt.delta = 1e-4;
    EXPECT_EQ(kr::solve(disc_and_line(1.5), opt).kind, kr::DeltaKind::unsat);  // max x + y is sqrt(2)
    const auto v = kr::solve(disc_and_line(1.3), opt);
    ASSERT_EQ(v.kind, kr::DeltaKind::delta_sat);
    ASSERT_TRUE(v.witness.has_value());
    const auto mid = v.witness->midpoint();
    const auto sys = disc_and_line(1.3);
    for (double r : sys.residuals(mid)) EXPECT_LE(r, 1e-4 * (1.0 + 8.0));
}

TEST(DeltaSat, SystemBookkeeping) {
    ConstraintSystem sys(IntervalBox({Interval(0, 1), Interval(0, 1)}));
    const auto y = sys.define(kr::parse_expr("x1*x2"));
    EXPECT_EQ(y, 2u);
    EXPECT_EQ(sys.define(kr::parse_expr("x2*x1")), 2u);  // shared definition
    EXPECT_EQ(sys.define(kr::Expr::variable(1)), 1u);
    EXPECT_THROW(sys.define(kr::Expr::variable(2)), kr::DimensionError);
    EXPECT_THROW(sys.define(kr::Expr::time()), kr::DimensionError);
    sys.add_constraint(kr::parse_expr("x1*x2 + 3"), Relation::eq, 3.5);
    ASSERT_EQ(sys.linear().size(), 2u);
    EXPECT_DOUBLE_EQ(sys.linear()[0].rhs, 0.5);
    EXPECT_DOUBLE_EQ(sys.linear()[1].rhs, -0.5);
    EXPECT_THROW(sys.add_linear({{{7, 1.0}}, 0.0}), kr::DimensionError);
}

TEST(DeltaSat, Hc4ContractionIsSound) {
    const auto sys = disc_and_line(1.3);
    const auto c = kr::hc4_contract(sys, sys.bounds(), {});
    ASSERT_TRUE(c.has_value());
    EXPECT_LT(c->max_width(), 4.0);
    for (int k = 0; k < 5000; ++k) {
        const std::vector<double> p{kr_test::uniform(-2, 2), kr_test::uniform(-2, 2)};
        const auto r = sys.residuals(p);
        if (r[0] <= 0.0 && r[1] <= 0.0) EXPECT_TRUE(c->contains(p));
    }
}

TEST(DeltaSat, TrigonometricSystem) {
    // sin(x) >= 0.99 and x <= 1.3 over [0, 3]: asin(0.99) = 1.429 so unsat.
    ConstraintSystem sys(IntervalBox({Interval(0, 3)}));
    sys.add_constraint(kr::parse_expr("sin(x1)"), Relation::ge, 0.99);
    sys.add_constraint(kr::parse_expr("x1"), Relation::le, 1.3);
    EXPECT_EQ(kr::solve(sys).kind, kr::DeltaKind::unsat);
    ConstraintSystem sat(IntervalBox({Interval(0, 3)}));
    sat.add_constraint(kr::parse_expr("sin(x1)"), Relation::ge, 0.99);
    sat.add_constraint(kr::parse_expr("x1"), Relation::le, 1.5);
    EXPECT_EQ(kr::solve(sat).kind, kr::DeltaKind::delta_sat);
}

TEST(DeltaSat, ResourceBudgetsThrow) {
    kr::SolverOptions opt;
    opt.delta = 1e-9;
    opt.max_boxes = 10;
    EXPECT_THROW(kr::solve(disc_and_line(1.41421), opt), kr::ResourceExhausted);
    opt.delta = 0.0;
    EXPECT_THROW(kr::solve(disc_and_line(1.0), opt), kr::NumericError);
}

TEST(DeltaSat, SmtLibEmission) {
    const std::string s = kr::emit_smtlib(disc_and_line(1.3), 1e-3);
    EXPECT_NE(s.find("(set-logic QF_NRA)"), std::string::npos);
    EXPECT_NE(s.find("(declare-fun x0 () Real)"), std::string::npos);
    EXPECT_NE(s.find("(check-sat)"), std::string::npos);
    EXPECT_FALSE(std::regex_search(s, std::regex("[0-9][eE][-+]?[0-9]")));  // no exponent notation
    EXPECT_EQ(std::count(s.begin(), s.end(), '('), std::count(s.begin(), s.end(), ')'));
}

TEST(DeltaSat, ExternalSolverAnswers) {
    const auto dir = std::filesystem::temp_directory_path() / "kr_ext_solver";
    std::filesystem::create_directories(dir);
    write_script(dir / "unsat.sh", "unsat");
    write_script(dir / "sat.sh", "delta-sat");
    write_script(dir / "junk.sh", "maybe");
    EXPECT_EQ(kr::solve_external(disc_and_line(1.3), (dir / "unsat.sh").string()).kind, kr::DeltaKind::unsat);
    const auto v = kr::solve_external(disc_and_line(1.3), (dir / "sat.sh").string());
    EXPECT_EQ(v.kind, kr::DeltaKind::delta_sat);
    EXPECT_TRUE(v.witness.has_value());
    EXPECT_THROW(kr::solve_external(disc_and_line(1.3), (dir / "junk.sh").string()), kr::ResourceExhausted);
    std::filesystem::remove_all(dir);
}

TEST(DeltaSat, AgreesWithGridOracleOnSmallSystem) {
    for (double rhs : {1.2, 1.35, 1.48, 1.6}) {
        const auto sys = disc_and_line(rhs);
        kr::SolverOptions opt;
        opt.delta = 1e-3;
        const auto g = kr_test::grid_oracle(sys, 1e-2, opt.delta);
        const bool sat = kr::solve(sys, opt).kind == kr::DeltaKind::delta_sat;
        EXPECT_EQ(sat, g.robust_solution) << rhs;
    }
}
