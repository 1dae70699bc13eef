#pragma once

#include "tubempc/common.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <limits>
#include <optional>
#include <vector>

namespace tubempc {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Convex QP in sparse non-condensed form:
///   min 1/2 z'Hz + q'z
///   s.t. E z = e, C z <= f, ||B z|| <= ball_radius (optional block).
struct QpProblem {
    SparseMatrix hessian;
    Vector linear;
    SparseMatrix eq;
    Vector eq_rhs;
    SparseMatrix ineq;
    Vector ineq_ub;
    SparseMatrix ball;  // zero rows when absent
    double ball_radius = 0.0;

    int num_vars() const { return static_cast<int>(hessian.rows()); }
    bool has_ball() const { return ball.rows() > 0; }

    /// Dense invariant checks (SPD Hessian, full-row-rank equalities);
    /// intended for tests and small problems.
    void validate() const
    {
        require(hessian.rows() == hessian.cols(), "QpProblem: square Hessian required");
        Matrix h = Matrix(hessian);
        require(is_symmetric(h, 1e-9), "QpProblem: Hessian must be symmetric");
        require(min_eig(h) > 0.0, "QpProblem: Hessian must be positive definite");
        if (eq.rows() > 0) {
            Matrix e = Matrix(eq);
            Eigen::ColPivHouseholderQR<Matrix> qr(e.transpose());
            require(qr.rank() == eq.rows(), "QpProblem: equality matrix must have full row rank");
        }
        require(eq.rows() == eq_rhs.size() && ineq.rows() == ineq_ub.size(),
                "QpProblem: rhs size mismatch");
        if (has_ball()) require(ball_radius > 0.0, "QpProblem: ball radius must be positive");
    }
};

/// Euclidean projection onto the origin-centered ball.
inline Vector project_ball(const Vector& point, double radius)
{
    require(radius > 0.0, "project_ball: radius must be positive");
    double n = point.norm();
    return n <= radius ? point : Vector((radius / n) * point);
}

/// Row-wise clip of the slack copy to (-inf, ub_i].
inline Vector project_polytope_rows(const Vector& slack, const Vector& ub)
{
    require(slack.size() == ub.size(), "project_polytope_rows: size mismatch");
    return slack.cwiseMin(ub);
}

enum class QpStatus { Solved, MaxIterations, PrimalInfeasible };

struct QpSolution {
    QpStatus status = QpStatus::MaxIterations;
    Vector primal;
    double objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool polished = false;
    bool monotone_after_burnin = true;  // diagnostic only
    // warm-start payload (splitting iterates, not the polished point)
    Vector warm_primal, warm_slack, warm_dual;
};

struct QpWarmStart {
    Vector primal, slack, dual;
};

struct QpOptions {
    double tol = 1e-4;      // exit tolerance on both residuals
    double penalty = 15.0;  // splitting penalty parameter
    int max_iterations = 20000;
    int infeas_window = 200;  // consecutive non-improving iterations
    bool polish = true;
};

/// Operator-splitting solver. The KKT system of the penalized z-step is
/// factorized once per problem; the linear term and equality rhs may be
/// updated between solves without refactorizing.
class QpSolver {
public:
    explicit QpSolver(QpProblem problem, QpOptions options = {})
        : p_(std::move(problem)), opt_(options)
    {
        const int n = p_.num_vars();
        const int me = static_cast<int>(p_.eq.rows());
        const int mi = static_cast<int>(p_.ineq.rows());
        const int mb = static_cast<int>(p_.ball.rows());
        mi_ = mi;
        mb_ = mb;

        g_ = SparseMatrix(mi + mb, n);
        if (mi + mb > 0) {
            std::vector<Eigen::Triplet<double>> trips;
            for (int k = 0; k < p_.ineq.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(p_.ineq, k); it; ++it)
                    trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                       it.value());
            for (int k = 0; k < p_.ball.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(p_.ball, k); it; ++it)
                    trips.emplace_back(mi + static_cast<int>(it.row()),
                                       static_cast<int>(it.col()), it.value());
            g_.setFromTriplets(trips.begin(), trips.end());
        }

        SparseMatrix kkt(n + me, n + me);
        {
            SparseMatrix top = p_.hessian;
            if (mi + mb > 0) {
                SparseMatrix gtg = (SparseMatrix(g_.transpose()) * g_).pruned();
                top = top + opt_.penalty * gtg;
            }
            std::vector<Eigen::Triplet<double>> trips;
            for (int k = 0; k < top.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(top, k); it; ++it)
                    trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                       it.value());
            for (int k = 0; k < p_.eq.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(p_.eq, k); it; ++it) {
                    trips.emplace_back(n + static_cast<int>(it.row()),
                                       static_cast<int>(it.col()), it.value());
                    trips.emplace_back(static_cast<int>(it.col()),
                                       n + static_cast<int>(it.row()), it.value());
                }
            kkt.setFromTriplets(trips.begin(), trips.end());
        }
        kkt.makeCompressed();
        lu_.compute(kkt);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("QpSolver: KKT factorization failed (rank-deficient?)");
        if (mi > 0) ineq_rm_ = p_.ineq;
    }

    const QpProblem& problem() const { return p_; }
    void set_eq_rhs(Vector e)
    {
        require(e.size() == p_.eq_rhs.size(), "set_eq_rhs: size mismatch");
        p_.eq_rhs = std::move(e);
    }
    void set_linear(Vector q)
    {
        require(q.size() == p_.linear.size(), "set_linear: size mismatch");
        p_.linear = std::move(q);
    }

    QpSolution solve(const std::optional<QpWarmStart>& warm = std::nullopt) const
    {
        const int n = p_.num_vars();
        const int me = static_cast<int>(p_.eq.rows());
        const int mg = mi_ + mb_;

        Vector z = Vector::Zero(n);
        Vector s = Vector::Zero(mg);
        Vector u = Vector::Zero(mg);
        if (warm) {
            if (warm->primal.size() == n) z = warm->primal;
            if (warm->dual.size() == mg) u = warm->dual;
            if (warm->slack.size() == mg)
                s = warm->slack;
            else if (mg > 0)
                s = project(g_ * z + u);
        } else if (mg > 0) {
            s = project(g_ * z);
        }

        QpSolution sol;
        Vector rhs(n + me), sol_vec(n + me);
        double best_primal = std::numeric_limits<double>::infinity();
        int no_improve = 0;
        double prev_combined = std::numeric_limits<double>::infinity();

        for (int iter = 1; iter <= opt_.max_iterations; ++iter) {
            rhs.head(n) = -p_.linear;
            if (mg > 0) rhs.head(n) += opt_.penalty * (g_.transpose() * (s - u));
            rhs.tail(me) = p_.eq_rhs;
            sol_vec = lu_.solve(rhs);
            z = sol_vec.head(n);

            double rp = 0.0, rd = 0.0;
            if (mg > 0) {
                Vector gz = g_ * z;
                Vector v = gz + u;
                Vector s_prev = s;
                s = project(v);
                u = v - s;
                rp = (gz - s).lpNorm<Eigen::Infinity>();
                rd = opt_.penalty * (g_.transpose() * (s - s_prev)).lpNorm<Eigen::Infinity>();
            }
            sol.iterations = iter;
            sol.primal_residual = rp;
            sol.dual_residual = rd;

            double combined = std::max(rp, rd);
            if (iter > 10) {
                if (combined > prev_combined * (1.0 + 1e-12)) sol.monotone_after_burnin = false;
            }
            prev_combined = combined;

            if (rp <= opt_.tol && rd <= opt_.tol) {
                sol.status = QpStatus::Solved;
                break;
            }
            if (rp < best_primal * (1.0 - 1e-4)) {
                best_primal = rp;
                no_improve = 0;
            } else {
                ++no_improve;
            }
            // infeasible fixed point: the slack copy pins (dual residual
            // collapses) while a primal gap persists without improving
            if (no_improve >= opt_.infeas_window && rp > 10.0 * opt_.tol && rd <= opt_.tol) {
                sol.status = QpStatus::PrimalInfeasible;
                break;
            }
        }

        sol.primal = z;
        sol.warm_primal = z;
        sol.warm_slack = s;
        sol.warm_dual = u;
        sol.objective = 0.5 * z.dot(p_.hessian * z) + p_.linear.dot(z);
        if (sol.status == QpStatus::Solved && opt_.polish) try_polish(sol);
        return sol;
    }

private:
    Vector project(const Vector& v) const
    {
        Vector s(v.size());
        if (mi_ > 0) s.head(mi_) = project_polytope_rows(v.head(mi_), p_.ineq_ub);
        if (mb_ > 0) s.tail(mb_) = project_ball(v.tail(mb_), p_.ball_radius);
        return s;
    }

    /// Equality-KKT refinement on the detected active set; rejected unless
    /// the result is primal feasible with nonnegative multipliers.
    void try_polish(QpSolution& sol) const
    {
        const int n = p_.num_vars();
        const int me = static_cast<int>(p_.eq.rows());
        if (mb_ > 0) {
            Vector bz = p_.ball * sol.primal;
            if (bz.norm() >= p_.ball_radius - 10.0 * opt_.tol) return;  // ball active: keep
        }
        std::vector<int> active;
        if (mi_ > 0) {
            Vector cz = p_.ineq * sol.primal;
            for (int i = 0; i < mi_; ++i)
                if (cz[i] >= p_.ineq_ub[i] - 10.0 * opt_.tol) active.push_back(i);
        }
        const int ma = static_cast<int>(active.size());
        SparseMatrix kkt(n + me + ma, n + me + ma);
        std::vector<Eigen::Triplet<double>> trips;
        for (int k = 0; k < p_.hessian.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(p_.hessian, k); it; ++it)
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   it.value());
        for (int k = 0; k < p_.eq.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(p_.eq, k); it; ++it) {
                trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   it.value());
                trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                                   it.value());
            }
        for (int a = 0; a < ma; ++a) {
            int row = active[a];
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ineq_rm_, row);
                 it; ++it) {
                trips.emplace_back(n + me + a, static_cast<int>(it.col()), it.value());
                trips.emplace_back(static_cast<int>(it.col()), n + me + a, it.value());
            }
        }
        kkt.setFromTriplets(trips.begin(), trips.end());
        kkt.makeCompressed();
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(kkt);
        if (lu.info() != Eigen::Success) return;
        Vector rhs(n + me + ma);
        rhs.head(n) = -p_.linear;
        rhs.segment(n, me) = p_.eq_rhs;
        for (int a = 0; a < ma; ++a) rhs[n + me + a] = p_.ineq_ub[active[a]];
        Vector w = lu.solve(rhs);
        if (!w.allFinite()) return;
        Vector z = w.head(n);
        for (int a = 0; a < ma; ++a)
            if (w[n + me + a] < -1e-7) return;  // wrong active set
        if (mi_ > 0) {
            Vector viol = p_.ineq * z - p_.ineq_ub;
            if (viol.maxCoeff() > 1e-7 * (1.0 + p_.ineq_ub.cwiseAbs().maxCoeff())) return;
        }
        if (mb_ > 0 && (p_.ball * z).norm() > p_.ball_radius + 1e-9) return;
        double obj = 0.5 * z.dot(p_.hessian * z) + p_.linear.dot(z);
        if (obj > sol.objective + 1e-6 * (1.0 + std::abs(sol.objective))) return;
        sol.primal = std::move(z);
        sol.objective = obj;
        sol.polished = true;
    }

    QpProblem p_;
    QpOptions opt_;
    SparseMatrix g_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> ineq_rm_;
    Eigen::SparseLU<SparseMatrix> lu_;
    int mi_ = 0, mb_ = 0;
};

/// One-shot convenience wrapper.
inline QpSolution solve_qp(const QpProblem& p, const QpOptions& options = {},
                           const std::optional<QpWarmStart>& warm = std::nullopt)
{
    return QpSolver(p, options).solve(warm);
}

}  // namespace tubempc
