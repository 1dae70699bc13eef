#include "tubempc/controller.hpp"

#include "oracle_helpers.hpp"
#include "test_bundles.hpp"
#include "tubempc/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tubempc;

TEST_CASE("scalar one-step problem with terminal equality")
{
    DesignBundle b = fixtures::scalar_equality_bundle(1);
    Vector x = Vector::Constant(1, 2.0);
    OcpSolution sol = solve_ocp(b, x);
    REQUIRE(sol.solved());
    REQUIRE(sol.inputs(0, 0) == Catch::Approx(-2.0).margin(1e-6));
    REQUIRE(sol.cost == Catch::Approx(8.0).margin(1e-5));
    REQUIRE(sol.states(0, 0) == Catch::Approx(2.0).margin(1e-9));
    REQUIRE(std::abs(sol.states(0, 1)) < 1e-6);
}

TEST_CASE("origin solves to zero cost")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    OcpSolution sol = solve_ocp(b, Vector::Zero(2));
    REQUIRE(sol.solved());
    REQUIRE(std::abs(sol.cost) < 1e-8);
    REQUIRE(sol.inputs.cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("gain tail appears only for a shortened control horizon")
{
    DesignBundle b = fixtures::deadbeat_equality_bundle(6);
    QpProblem full = build_ocp(b, Vector::Zero(2));
    DesignBundle short_b = b;
    short_b.control_horizon = 3;
    QpProblem tail = build_ocp(short_b, Vector::Zero(2));
    // three extra scalar input rows
    REQUIRE(tail.eq.rows() == full.eq.rows() + 3);

    Vector x(2);
    x << 0.1, 0.0;
    OcpSolution sol = solve_ocp(short_b, x);
    REQUIRE(sol.solved());
    // appended rows hold: u(i) = terminal gain * x(i) for i >= Nc
    for (int i = 3; i < 6; ++i) {
        Vector expect = short_b.terminal_gain * sol.states.col(i);
        REQUIRE((sol.inputs.col(i) - expect).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("cost matches the active-set oracle on a small instance")
{
    DesignBundle b = fixtures::deadbeat_equality_bundle(2);
    Vector x(2);
    x << 0.6, -0.2;
    QpProblem qp = build_ocp(b, x);
    qp.validate();
    QpOptions opts;
    opts.tol = 1e-8;
    opts.max_iterations = 200000;
    OcpSolution sol = solve_ocp(b, x, opts);
    REQUIRE(sol.solved());
    auto oracle_res = oracle::active_set_enumeration(Matrix(qp.hessian), qp.linear, Matrix(qp.eq),
                                                     qp.eq_rhs, Matrix(qp.ineq), qp.ineq_ub);
    REQUIRE(oracle_res.feasible);
    REQUIRE(sol.cost == Catch::Approx(oracle_res.objective).margin(1e-4));
}

TEST_CASE("terminal ellipsoid becomes a ball block with the erosion radius")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    QpProblem qp = build_ocp(b, Vector::Zero(2));
    REQUIRE(qp.has_ball());
    REQUIRE(qp.ball_radius == Catch::Approx(1.0 - b.terminal.shrink));
    REQUIRE(b.terminal.shrink > 0.0);

    // solved terminal states satisfy the shrunk level set
    Vector x(2);
    x << 4.0, 0.5;
    OcpSolution sol = solve_ocp(b, x);
    REQUIRE(sol.solved());
    Vector xn = sol.states.col(b.horizon);
    double level = std::sqrt(xn.dot(b.terminal.shape * xn));
    REQUIRE(level <= 1.0 - b.terminal.shrink + 1e-4);
}

TEST_CASE("nominal step lands on the predicted state")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    Controller c(b);
    Vector x(2);
    x << 3.0, -0.5;
    StepResult st = c.step(x, Vector::Zero(2));
    OcpSolution after = c.solve(st.next_state);
    REQUIRE(after.solved());
    REQUIRE((st.next_state - st.solution.states.col(1)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("origin is a fixed point")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    Controller c(b);
    Vector x = Vector::Zero(2);
    for (int k = 0; k < 5; ++k) {
        StepResult st = c.step(x, Vector::Zero(2));
        x = st.next_state;
    }
    REQUIRE(x.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("disturbed steps stay feasible along a run")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    Controller c(b);
    Rng rng(44);
    Vector x(2);
    x << 4.0, 0.2;
    for (int k = 0; k < 50; ++k) {
        Vector w = oracle::sample_zonotope(b.model.w, rng);
        StepResult st = c.step(x, w);
        x = st.next_state;
        REQUIRE(b.schedule.x_tight[0].contains(x, 1e-9));
    }
}

TEST_CASE("optimal cost dominates the quadratic lower bound")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    double lam = min_eig(b.cost.q);
    Rng rng(45);
    for (int trial = 0; trial < 10; ++trial) {
        Vector x(2);
        x << 5.0 * rng.uniform_sym(), 0.8 * rng.uniform_sym();
        OcpSolution sol = solve_ocp(b, x);
        if (!sol.solved()) continue;
        REQUIRE(sol.cost >= lam * x.squaredNorm() - 1e-8);
    }
}

TEST_CASE("erosion radius for ellipsoids")
{
    REQUIRE(shrink_radius_for_ellipsoid(Matrix::Identity(2, 2), Zonotope::singleton(2)) == 0.0);
    Matrix g(2, 1);
    g << 0.1, 0.0;
    REQUIRE(shrink_radius_for_ellipsoid(Matrix::Identity(2, 2), Zonotope(g)) ==
            Catch::Approx(0.1).margin(1e-15));
    Zonotope two_gen(0.1 * Matrix::Identity(2, 2));
    double r = shrink_radius_for_ellipsoid(Matrix::Identity(2, 2), two_gen);
    REQUIRE(r == Catch::Approx(0.2).margin(1e-15));
    // containment: points of the shrunk ball plus the set stay inside
    Rng rng(46);
    for (int i = 0; i < 10000; ++i) {
        Vector x = oracle::sample_ellipsoid(Matrix::Identity(2, 2), 1.0 - r, rng);
        Vector l = oracle::sample_zonotope(two_gen, rng);
        REQUIRE((x + l).norm() <= 1.0 + 1e-9);
    }
}

TEST_CASE("vanishing terminal set rejected")
{
    Matrix g(2, 1);
    g << 1.5, 0.0;
    REQUIRE_THROWS_WITH(TerminalSet::ellipsoid(Matrix::Identity(2, 2),
                                               shrink_radius_for_ellipsoid(
                                                   Matrix::Identity(2, 2), Zonotope(g))),
                        Catch::Matchers::ContainsSubstring("vanishes"));
}

TEST_CASE("non-finite state rejected")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    Vector x(2);
    x << std::numeric_limits<double>::quiet_NaN(), 0.0;
    REQUIRE_THROWS_AS(build_ocp(b, x), std::invalid_argument);
}

TEST_CASE("nominal variant widens rows and keeps geometry")
{
    const DesignBundle& b = fixtures::case_study_bundle();
    DesignBundle nom = make_nominal_variant(b);
    REQUIRE(nom.terminal.shrink == 0.0);
    for (int i = 0; i <= b.horizon; ++i) {
        REQUIRE(((nom.schedule.x_tight[i].f() - b.schedule.x_tight[i].f()).array() >= -1e-15).all());
        REQUIRE((nom.schedule.x_tight[i].f() - nom.schedule.x_tight[0].f()).cwiseAbs().maxCoeff() ==
                0.0);
    }
}
