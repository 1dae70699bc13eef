#pragma once

#include "tubempc/model.hpp"
#include "tubempc/qpsolver.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace tubempc {

/// Optimizer of one nominal-prediction solve: input/state sequences, the
/// optimal cost, and the solver status.
struct OcpSolution {
    QpStatus status = QpStatus::MaxIterations;
    Matrix states;  // n x (N+1)
    Matrix inputs;  // m x N
    double cost = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    QpSolution raw;

    bool solved() const { return status == QpStatus::Solved; }
};

namespace detail {

inline int ocp_num_vars(const DesignBundle& b)
{
    return (b.horizon + 1) * b.model.state_dim() + b.horizon * b.model.input_dim();
}

inline int x_offset(const DesignBundle& b, int i) { return i * b.model.state_dim(); }

inline int u_offset(const DesignBundle& b, int i)
{
    return (b.horizon + 1) * b.model.state_dim() + i * b.model.input_dim();
}

}  // namespace detail

/// Assemble the nominal-prediction QP for the given bundle and state:
/// stacked dynamics equalities, per-step tightened rows, the terminal
/// constraint per descriptor, and the gain tail when the control horizon
/// is shorter than the prediction horizon.
inline QpProblem build_ocp(const DesignBundle& bundle, const Vector& x)
{
    const int n = bundle.model.state_dim();
    const int m = bundle.model.input_dim();
    const int N = bundle.horizon;
    const int nc = bundle.control_horizon;
    require(x.size() == n, "build_ocp: state dimension mismatch");
    require(x.allFinite(), "build_ocp: non-finite state");

    const int nz = detail::ocp_num_vars(bundle);
    QpProblem p;

    // cost: sum ||x(i)||_Q^2 + ||u(i)||_R^2 + ||x(N)||_P^2 as 1/2 z'Hz
    {
        std::vector<Eigen::Triplet<double>> trips;
        auto add_block = [&](int off, const Matrix& w) {
            for (int r = 0; r < w.rows(); ++r)
                for (int c = 0; c < w.cols(); ++c)
                    if (w(r, c) != 0.0) trips.emplace_back(off + r, off + c, 2.0 * w(r, c));
        };
        for (int i = 0; i < N; ++i) add_block(detail::x_offset(bundle, i), bundle.cost.q);
        add_block(detail::x_offset(bundle, N), bundle.cost.p);
        for (int i = 0; i < N; ++i) add_block(detail::u_offset(bundle, i), bundle.cost.r);
        p.hessian.resize(nz, nz);
        p.hessian.setFromTriplets(trips.begin(), trips.end());
    }
    p.linear = Vector::Zero(nz);

    // equalities: initial state, dynamics, gain tail, terminal equality
    {
        const bool term_eq = bundle.terminal.kind == TerminalKind::Equality;
        const int me = n + N * n + (N - nc) * m + (term_eq ? n : 0);
        std::vector<Eigen::Triplet<double>> trips;
        Vector rhs = Vector::Zero(me);
        int row = 0;
        for (int r = 0; r < n; ++r) trips.emplace_back(row + r, detail::x_offset(bundle, 0) + r, 1.0);
        rhs.head(n) = x;
        row += n;
        for (int i = 0; i < N; ++i) {
            for (int r = 0; r < n; ++r) {
                trips.emplace_back(row + r, detail::x_offset(bundle, i + 1) + r, 1.0);
                for (int c = 0; c < n; ++c)
                    if (bundle.model.a(r, c) != 0.0)
                        trips.emplace_back(row + r, detail::x_offset(bundle, i) + c,
                                           -bundle.model.a(r, c));
                for (int c = 0; c < m; ++c)
                    if (bundle.model.b(r, c) != 0.0)
                        trips.emplace_back(row + r, detail::u_offset(bundle, i) + c,
                                           -bundle.model.b(r, c));
            }
            row += n;
        }
        for (int i = nc; i < N; ++i) {
            for (int r = 0; r < m; ++r) {
                trips.emplace_back(row + r, detail::u_offset(bundle, i) + r, 1.0);
                for (int c = 0; c < n; ++c)
                    if (bundle.terminal_gain(r, c) != 0.0)
                        trips.emplace_back(row + r, detail::x_offset(bundle, i) + c,
                                           -bundle.terminal_gain(r, c));
            }
            row += m;
        }
        if (term_eq) {
            for (int r = 0; r < n; ++r)
                trips.emplace_back(row + r, detail::x_offset(bundle, N) + r, 1.0);
            row += n;
        }
        p.eq.resize(me, nz);
        p.eq.setFromTriplets(trips.begin(), trips.end());
        p.eq_rhs = std::move(rhs);
    }

    // inequalities: tightened rows per step, terminal polytope rows
    {
        int mi = 0;
        for (int i = 0; i < N; ++i)
            mi += bundle.schedule.x_tight[i].num_rows() + bundle.schedule.u_tight[i].num_rows();
        if (bundle.terminal.kind == TerminalKind::Polyhedron)
            mi += static_cast<int>(bundle.terminal.poly_F.rows());
        std::vector<Eigen::Triplet<double>> trips;
        Vector ub(mi);
        int row = 0;
        auto add_rows = [&](const Matrix& f, const Vector& off, int zoff) {
            for (int r = 0; r < f.rows(); ++r) {
                for (int c = 0; c < f.cols(); ++c)
                    if (f(r, c) != 0.0) trips.emplace_back(row + r, zoff + c, f(r, c));
                ub[row + r] = off[r];
            }
            row += static_cast<int>(f.rows());
        };
        for (int i = 0; i < N; ++i) {
            add_rows(bundle.schedule.x_tight[i].F(), bundle.schedule.x_tight[i].f(),
                     detail::x_offset(bundle, i));
            add_rows(bundle.schedule.u_tight[i].F(), bundle.schedule.u_tight[i].f(),
                     detail::u_offset(bundle, i));
        }
        if (bundle.terminal.kind == TerminalKind::Polyhedron) {
            Vector ft = Eigen::Map<const Vector>(
                bundle.terminal.poly_f_tight.data(),
                static_cast<Eigen::Index>(bundle.terminal.poly_f_tight.size()));
            add_rows(bundle.terminal.poly_F, ft, detail::x_offset(bundle, N));
        }
        p.ineq.resize(mi, nz);
        p.ineq.setFromTriplets(trips.begin(), trips.end());
        p.ineq_ub = std::move(ub);
    }

    if (bundle.terminal.kind == TerminalKind::Ellipsoid) {
        Matrix ph = sym_sqrt(bundle.terminal.shape);
        std::vector<Eigen::Triplet<double>> trips;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (ph(r, c) != 0.0)
                    trips.emplace_back(r, detail::x_offset(bundle, N) + c, ph(r, c));
        p.ball.resize(n, nz);
        p.ball.setFromTriplets(trips.begin(), trips.end());
        p.ball_radius = 1.0 - bundle.terminal.shrink;
    } else {
        p.ball.resize(0, nz);
    }
    return p;
}

struct StepResult {
    Vector next_state;
    Vector input;
    OcpSolution solution;
};

/// Receding-horizon controller: owns the factorized QP and the shifted
/// warm start; one instance per closed-loop trajectory.
class Controller {
public:
    explicit Controller(DesignBundle bundle, QpOptions qopts = {})
        : bundle_(std::move(bundle)), qopts_(qopts)
    {
        solver_ = std::make_unique<QpSolver>(build_ocp(bundle_, Vector::Zero(bundle_.model.state_dim())),
                                             qopts_);
    }

    const DesignBundle& bundle() const { return bundle_; }
    void reset() { warm_.reset(); }

    OcpSolution solve(const Vector& x)
    {
        require(x.allFinite(), "Controller::solve: non-finite state");
        const int n = bundle_.model.state_dim();
        Vector rhs = solver_->problem().eq_rhs;
        rhs.head(n) = x;
        solver_->set_eq_rhs(std::move(rhs));
        QpSolution qs = solver_->solve(warm_);
        return unpack(qs);
    }

    /// Apply the receding-horizon input at x under disturbance w, shift the
    /// warm start along the feedback-corrected candidate, and return the
    /// successor state. Throws on an infeasible solve.
    StepResult step(const Vector& x, const Vector& w)
    {
        OcpSolution sol = solve(x);
        if (!sol.solved())
            throw std::runtime_error(
                "Controller::step: solve failed (status " +
                std::string(sol.status == QpStatus::PrimalInfeasible ? "infeasible" : "max-iter") +
                ") at a visited state");
        Vector u0 = sol.inputs.col(0);
        Vector next = bundle_.model.a * x + bundle_.model.b * u0 + w;
        warm_ = shifted_warm_start(sol, next);
        last_ = sol;
        return StepResult{std::move(next), std::move(u0), std::move(sol)};
    }

    const std::optional<OcpSolution>& last_solution() const { return last_; }

private:
    /// Candidate shift: reuse the tail of the previous plan with the tube
    /// gain correcting the observed deviation, and close with the terminal
    /// gain.
    std::optional<QpWarmStart> shifted_warm_start(const OcpSolution& sol, const Vector& x_next) const
    {
        const int n = bundle_.model.state_dim();
        const int m = bundle_.model.input_dim();
        const int N = bundle_.horizon;
        Matrix xs(n, N + 1), us(m, N);
        xs.col(0) = x_next;
        for (int i = 0; i < N; ++i) {
            if (i < N - 1)
                us.col(i) = sol.inputs.col(i + 1) +
                            bundle_.tube_gain * (xs.col(i) - sol.states.col(i + 1));
            else
                us.col(i) = bundle_.terminal_gain * xs.col(i);
            xs.col(i + 1) = bundle_.model.a * xs.col(i) + bundle_.model.b * us.col(i);
        }
        QpWarmStart ws;
        ws.primal = Vector(detail::ocp_num_vars(bundle_));
        for (int i = 0; i <= N; ++i) ws.primal.segment(detail::x_offset(bundle_, i), n) = xs.col(i);
        for (int i = 0; i < N; ++i) ws.primal.segment(detail::u_offset(bundle_, i), m) = us.col(i);
        ws.dual = sol.raw.warm_dual;
        return ws;
    }

    OcpSolution unpack(const QpSolution& qs) const
    {
        const int n = bundle_.model.state_dim();
        const int m = bundle_.model.input_dim();
        const int N = bundle_.horizon;
        OcpSolution sol;
        sol.status = qs.status;
        sol.iterations = qs.iterations;
        sol.primal_residual = qs.primal_residual;
        sol.cost = qs.objective;
        sol.raw = qs;
        sol.states.resize(n, N + 1);
        sol.inputs.resize(m, N);
        for (int i = 0; i <= N; ++i)
            sol.states.col(i) = qs.primal.segment(detail::x_offset(bundle_, i), n);
        for (int i = 0; i < N; ++i)
            sol.inputs.col(i) = qs.primal.segment(detail::u_offset(bundle_, i), m);
        return sol;
    }

    DesignBundle bundle_;
    QpOptions qopts_;
    std::unique_ptr<QpSolver> solver_;
    std::optional<QpWarmStart> warm_;
    std::optional<OcpSolution> last_;
};

/// One-shot solve of the nominal-prediction problem.
inline OcpSolution solve_ocp(const DesignBundle& bundle, const Vector& x, QpOptions qopts = {})
{
    Controller c(bundle, qopts);
    return c.solve(x);
}

/// Untightened twin of a robust design: nominal rows at every step and no
/// terminal erosion, with the same gains, weights, and terminal geometry.
inline DesignBundle make_nominal_variant(const DesignBundle& bundle)
{
    DesignBundle nom = bundle;
    const ConstraintPolytope& x0 = bundle.schedule.x_tight[0];
    const ConstraintPolytope& u0 = bundle.schedule.u_tight[0];
    for (int i = 0; i <= bundle.horizon; ++i) {
        nom.schedule.x_tight[i] = x0;
        nom.schedule.u_tight[i] = u0;
    }
    if (nom.terminal.kind == TerminalKind::Ellipsoid) nom.terminal.shrink = 0.0;
    if (nom.terminal.kind == TerminalKind::Polyhedron)
        nom.terminal.poly_f_tight.assign(nom.terminal.poly_f.data(),
                                         nom.terminal.poly_f.data() + nom.terminal.poly_f.size());
    return nom;
}

}  // namespace tubempc
