#include "tubempc/lmisolve.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tubempc;

namespace {

/// {S - lo*I >= 0, hi*I - S >= 0} on a 2x2 symmetric variable.
LmiProblem band_problem(double lo, double hi)
{
    LmiProblem p;
    int s = p.add_symmetric("S", 2);
    Matrix eye = Matrix::Identity(2, 2);
    LmiBlock& b1 = p.new_block(2);
    b1.add_term(0, 0, eye, s, eye);
    b1.add_constant(0, 0, -lo * eye);
    LmiBlock& b2 = p.new_block(2);
    b2.add_constant(0, 0, hi * eye);
    b2.add_term(0, 0, -eye, s, eye);
    return p;
}

}  // namespace

TEST_CASE("feasibility: sandwiched symmetric variable")
{
    LmiProblem p = band_problem(0.5, 1.0);
    LmiOptions opts;
    opts.margin = 1e-6;
    LmiSolution sol = solve_feasibility(p, opts);
    REQUIRE(sol.status == LmiStatus::Feasible);
    REQUIRE(sol.achieved_margin >= opts.margin - 1e-7);
    Matrix s = p.value(0, sol.y);
    REQUIRE(min_eig(s - 0.5 * Matrix::Identity(2, 2)) >= -1e-9);
    REQUIRE(min_eig(Matrix::Identity(2, 2) - s) >= -1e-9);
}

TEST_CASE("feasibility: contradictory band is infeasible")
{
    LmiProblem p = band_problem(2.0, 1.0);
    LmiSolution sol = solve_feasibility(p);
    REQUIRE(sol.status == LmiStatus::Infeasible);
}

TEST_CASE("minimize scalar with a lower bound")
{
    LmiProblem p;
    int g = p.add_scalar("g");
    LmiBlock& b = p.new_block(1);
    b.add_scalar_term(0, 0, g, Matrix::Constant(1, 1, 1.0));
    b.add_constant(0, 0, Matrix::Constant(1, 1, -0.3));
    p.minimize_scalar(g);
    LmiOptions opts;
    opts.margin = 0.0;
    LmiSolution sol = minimize_linear(p, opts);
    REQUIRE(sol.status == LmiStatus::Feasible);
    REQUIRE(sol.objective == Catch::Approx(0.3).margin(2e-6));
}

TEST_CASE("minimize trace subject to S >= I")
{
    LmiProblem p;
    int s = p.add_symmetric("S", 2);
    Matrix eye = Matrix::Identity(2, 2);
    LmiBlock& b = p.new_block(2);
    b.add_term(0, 0, eye, s, eye);
    b.add_constant(0, 0, -eye);
    p.minimize_linear_of({{s, eye}});
    LmiOptions opts;
    opts.margin = 0.0;
    LmiSolution sol = minimize_linear(p, opts);
    REQUIRE(sol.status == LmiStatus::Feasible);
    REQUIRE(sol.objective == Catch::Approx(2.0).margin(1e-5));
    Matrix sm = p.value(0, sol.y);
    REQUIRE((sm - eye).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("returned points pass an independent eigenvalue audit")
{
    LmiProblem p = band_problem(0.2, 3.0);
    LmiOptions opts;
    opts.margin = 1e-6;
    LmiSolution sol = solve_feasibility(p, opts);
    REQUIRE(sol.status == LmiStatus::Feasible);
    for (const auto& blk : p.blocks())
        REQUIRE(min_eig(p.evaluate_block(blk, sol.y)) >= opts.margin - 1e-7);
}

TEST_CASE("monotone under tightening")
{
    // minimize g s.t. g >= lo with growing margin never decreases the optimum
    double prev = -1.0;
    for (double extra : {0.0, 0.05, 0.1, 0.2}) {
        LmiProblem p;
        int g = p.add_scalar("g");
        LmiBlock& b = p.new_block(1);
        b.add_scalar_term(0, 0, g, Matrix::Constant(1, 1, 1.0));
        b.add_constant(0, 0, Matrix::Constant(1, 1, -0.3));
        p.minimize_scalar(g);
        LmiOptions opts;
        opts.margin = extra;
        LmiSolution sol = minimize_linear(p, opts);
        REQUIRE(sol.status == LmiStatus::Feasible);
        REQUIRE(sol.objective >= prev - 1e-9);
        prev = sol.objective;
    }
}

TEST_CASE("deterministic across repeated solves")
{
    LmiProblem p = band_problem(0.5, 1.0);
    LmiSolution a = solve_feasibility(p);
    LmiSolution b = solve_feasibility(p);
    REQUIRE((a.y - b.y).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("variable cap enforced")
{
    LmiProblem p;
    p.add_symmetric("S", 30);  // 465 unknowns > 400
    LmiBlock& b = p.new_block(30);
    b.add_term(0, 0, Matrix::Identity(30, 30), 0, Matrix::Identity(30, 30));
    REQUIRE_THROWS_AS(solve_feasibility(p), std::invalid_argument);
}

TEST_CASE("non-symmetric block rejected")
{
    LmiProblem p;
    int y = p.add_rectangular("Y", 2, 2);
    LmiBlock& b = p.new_block(2);
    // a general rectangular variable on the diagonal is not symmetric
    b.add_term(0, 0, Matrix::Identity(2, 2), y, Matrix::Identity(2, 2));
    b.add_constant(0, 0, Matrix::Identity(2, 2));
    REQUIRE_THROWS_AS(solve_feasibility(p), std::invalid_argument);
}

TEST_CASE("log-det objective grows the bounded variable to its cap")
{
    // maximize log det S subject to S <= diag(2, 3) and S PD
    LmiProblem p;
    int s = p.add_symmetric("S", 2);
    Matrix eye = Matrix::Identity(2, 2);
    Matrix cap = Matrix::Zero(2, 2);
    cap(0, 0) = 2.0;
    cap(1, 1) = 3.0;
    LmiBlock& b1 = p.new_block(2);
    b1.add_constant(0, 0, cap);
    b1.add_term(0, 0, -eye, s, eye);
    LmiBlock& b2 = p.new_block(2);  // keeps the objective variable PD
    b2.add_term(0, 0, eye, s, eye);
    p.maximize_logdet(s);
    LmiOptions opts;
    opts.margin = 1e-9;
    LmiSolution sol = minimize_linear(p, opts);
    REQUIRE(sol.status == LmiStatus::Feasible);
    Matrix sm = p.value(0, sol.y);
    REQUIRE((sm - cap).cwiseAbs().maxCoeff() < 1e-3);
}
