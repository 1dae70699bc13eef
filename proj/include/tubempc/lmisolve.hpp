#pragma once

#include "tubempc/common.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tubempc {

enum class LmiVarKind { Symmetric, Rectangular, Scalar };

struct LmiVar {
    std::string name;
    LmiVarKind kind;
    int rows = 1;
    int cols = 1;
    int offset = 0;  // start index in the flat vector
    int size = 1;    // scalar unknowns (symmetric: packed lower triangle)
};

/// One symmetric matrix expression, affine in the decision variables,
/// required positive semidefinite with margin. Terms are placed on a
/// sub-block grid; off-diagonal placements are mirrored transposed.
class LmiBlock {
public:
    explicit LmiBlock(int dim) : dim_(dim) { require(dim >= 1, "LmiBlock: dim >= 1"); }

    int dim() const { return dim_; }

    void add_constant(int r, int c, const Matrix& value)
    {
        terms_.push_back({Kind::Constant, r, c, value, -1, Matrix(), false});
    }

    /// coef * I at diagonal position (r, r).
    void add_identity(int r, double coef, int size)
    {
        add_constant(r, r, coef * Matrix::Identity(size, size));
    }

    /// L * V * R (or L * V' * R) at sub-block (r, c).
    void add_term(int r, int c, const Matrix& left, int var, const Matrix& right,
                  bool transpose_var = false)
    {
        terms_.push_back({Kind::MatVar, r, c, left, var, right, transpose_var});
    }

    /// y_var * C at sub-block (r, c), for a scalar variable.
    void add_scalar_term(int r, int c, int var, const Matrix& coef)
    {
        terms_.push_back({Kind::ScalarVar, r, c, coef, var, Matrix(), false});
    }

private:
    enum class Kind { Constant, MatVar, ScalarVar };
    struct Term {
        Kind kind;
        int row, col;
        Matrix left;
        int var;
        Matrix right;
        bool transpose_var;
    };

    int dim_;
    std::vector<Term> terms_;

    friend class LmiProblem;
};

/// Small-scale semidefinite feasibility/optimization problem: a list of
/// LMI blocks affine in named matrix/scalar variables, plus an optional
/// objective (minimize a linear functional, or maximize log det of one
/// symmetric variable).
class LmiProblem {
public:
    int add_symmetric(const std::string& name, int n)
    {
        return add_var({name, LmiVarKind::Symmetric, n, n, total_dim_, n * (n + 1) / 2});
    }
    int add_rectangular(const std::string& name, int m, int n)
    {
        return add_var({name, LmiVarKind::Rectangular, m, n, total_dim_, m * n});
    }
    int add_scalar(const std::string& name)
    {
        return add_var({name, LmiVarKind::Scalar, 1, 1, total_dim_, 1});
    }

    LmiBlock& new_block(int dim)
    {
        blocks_.emplace_back(dim);
        return blocks_.back();
    }

    /// Minimize a scalar variable.
    void minimize_scalar(int var)
    {
        require(vars_.at(var).kind == LmiVarKind::Scalar, "minimize_scalar: scalar var required");
        objective_ = Vector::Zero(total_dim_);
        objective_->operator[](vars_[var].offset) = 1.0;
    }

    /// Minimize sum_i grad_i . V_i over the given (var, gradient) pairs.
    void minimize_linear_of(const std::vector<std::pair<int, Matrix>>& grads)
    {
        Vector c = Vector::Zero(total_dim_);
        for (const auto& [v, g] : grads) {
            const LmiVar& var = vars_.at(v);
            require(g.rows() == var.rows && g.cols() == var.cols,
                    "minimize_linear_of: gradient shape mismatch");
            if (var.kind == LmiVarKind::Symmetric) {
                int k = var.offset;
                for (int j = 0; j < var.cols; ++j)
                    for (int i = j; i < var.rows; ++i)
                        c[k++] = (i == j) ? g(i, j) : g(i, j) + g(j, i);
            } else {
                int k = var.offset;
                for (int j = 0; j < var.cols; ++j)
                    for (int i = 0; i < var.rows; ++i) c[k++] = g(i, j);
            }
        }
        objective_ = std::move(c);
    }

    /// Maximize log det of a symmetric variable (terminal-set enlargement).
    void maximize_logdet(int var)
    {
        require(vars_.at(var).kind == LmiVarKind::Symmetric, "maximize_logdet: symmetric var required");
        logdet_var_ = var;
    }

    /// Initial guess for one variable (default all-zero).
    void set_initial(int var, const Matrix& value)
    {
        const LmiVar& v = vars_.at(var);
        require(value.rows() == v.rows && value.cols() == v.cols, "set_initial: shape mismatch");
        initial_.emplace_back(var, value);
    }

    int num_vars() const { return static_cast<int>(vars_.size()); }
    int total_dim() const { return total_dim_; }
    const LmiVar& var(int i) const { return vars_.at(i); }
    const std::vector<LmiBlock>& blocks() const { return blocks_; }
    bool has_objective() const { return objective_.has_value() || logdet_var_.has_value(); }

    /// Materialize a variable from the flat vector.
    Matrix value(int var, const Vector& y) const
    {
        const LmiVar& v = vars_.at(var);
        Matrix out(v.rows, v.cols);
        if (v.kind == LmiVarKind::Symmetric) {
            int k = v.offset;
            for (int j = 0; j < v.cols; ++j)
                for (int i = j; i < v.rows; ++i) {
                    out(i, j) = y[k];
                    out(j, i) = y[k];
                    ++k;
                }
        } else {
            int k = v.offset;
            for (int j = 0; j < v.cols; ++j)
                for (int i = 0; i < v.rows; ++i) out(i, j) = y[k++];
        }
        return out;
    }

    Matrix evaluate_block(const LmiBlock& b, const Vector& y) const
    {
        Matrix out = Matrix::Zero(b.dim_, b.dim_);
        for (const auto& t : b.terms_) {
            Matrix contrib;
            switch (t.kind) {
                case LmiBlock::Kind::Constant: contrib = t.left; break;
                case LmiBlock::Kind::ScalarVar: contrib = y[vars_[t.var].offset] * t.left; break;
                case LmiBlock::Kind::MatVar: {
                    Matrix v = value(t.var, y);
                    contrib = t.transpose_var ? (t.left * v.transpose() * t.right).eval()
                                              : (t.left * v * t.right).eval();
                    break;
                }
            }
            out.block(t.row, t.col, contrib.rows(), contrib.cols()) += contrib;
            if (t.row != t.col)
                out.block(t.col, t.row, contrib.cols(), contrib.rows()) += contrib.transpose();
        }
        return out;
    }

    Vector initial_point() const
    {
        Vector y = Vector::Zero(total_dim_);
        for (const auto& [v, m] : initial_) {
            const LmiVar& var = vars_[v];
            int k = var.offset;
            if (var.kind == LmiVarKind::Symmetric) {
                for (int j = 0; j < var.cols; ++j)
                    for (int i = j; i < var.rows; ++i) y[k++] = 0.5 * (m(i, j) + m(j, i));
            } else {
                for (int j = 0; j < var.cols; ++j)
                    for (int i = 0; i < var.rows; ++i) y[k++] = m(i, j);
            }
        }
        return y;
    }

    const std::optional<Vector>& objective() const { return objective_; }
    const std::optional<int>& logdet_var() const { return logdet_var_; }

private:
    int add_var(LmiVar v)
    {
        total_dim_ += v.size;
        vars_.push_back(std::move(v));
        return static_cast<int>(vars_.size()) - 1;
    }

    std::vector<LmiVar> vars_;
    std::vector<LmiBlock> blocks_;
    std::optional<Vector> objective_;
    std::optional<int> logdet_var_;
    std::vector<std::pair<int, Matrix>> initial_;
    int total_dim_ = 0;
};

struct LmiOptions {
    double margin = 1e-6;      // blocks required >= margin * I
    int var_cap = 400;         // total scalar unknowns
    int newton_budget = 2000;  // total damped Newton iterations per solve
    double obj_rel_tol = 1e-7;
    double obj_abs_tol = 1e-9;
};

enum class LmiStatus { Feasible, Infeasible, MaxIterations };

struct LmiSolution {
    LmiStatus status = LmiStatus::MaxIterations;
    Vector y;                       // flat variable values
    double achieved_margin = -1.0;  // min over blocks of lambda_min(B_j(y))
    double objective = 0.0;
    int newton_iters = 0;
};

namespace detail {

struct CompiledBlock {
    int dim;
    Matrix constant;            // block at y = 0, shifted by -margin*I
    std::vector<int> idx;       // flat coordinates that appear
    std::vector<Matrix> basis;  // d/dy_i of the block, symmetric
};

struct CompiledLmi {
    int nvars;
    std::vector<CompiledBlock> blocks;
};

inline CompiledLmi compile(const LmiProblem& p, double margin)
{
    CompiledLmi c;
    c.nvars = p.total_dim();
    Vector zero = Vector::Zero(c.nvars);
    for (const auto& b : p.blocks()) {
        CompiledBlock cb;
        cb.dim = b.dim();
        Matrix c0 = p.evaluate_block(b, zero);
        // Symmetry is structural for properly built blocks; reject otherwise.
        Vector probe(c.nvars);
        for (int i = 0; i < c.nvars; ++i) probe[i] = std::sin(1.0 + i);
        Matrix bp = p.evaluate_block(b, probe);
        double scale = 1.0 + bp.cwiseAbs().maxCoeff();
        require((bp - bp.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
                "LmiProblem: non-symmetric block expression");
        cb.constant = 0.5 * (c0 + c0.transpose()) - margin * Matrix::Identity(cb.dim, cb.dim);
        Vector e = Vector::Zero(c.nvars);
        for (int i = 0; i < c.nvars; ++i) {
            e[i] = 1.0;
            Matrix a = p.evaluate_block(b, e) - c0;
            e[i] = 0.0;
            if (a.cwiseAbs().maxCoeff() > 0.0) {
                cb.idx.push_back(i);
                cb.basis.push_back(0.5 * (a + a.transpose()));
            }
        }
        c.blocks.push_back(std::move(cb));
    }
    return c;
}

/// -sum_j log det(D_j(y)); returns false if any block is not PD.
/// Optionally accumulates gradient and Hessian.
inline bool barrier_eval(const CompiledLmi& c, const Vector& y, int extra_slack_idx,
                         double& phi, Vector* grad, Matrix* hess)
{
    phi = 0.0;
    if (grad) grad->setZero();
    if (hess) hess->setZero();
    for (const auto& b : c.blocks) {
        Matrix d = b.constant;
        for (std::size_t k = 0; k < b.idx.size(); ++k) d += y[b.idx[k]] * b.basis[k];
        if (extra_slack_idx >= 0) d += y[extra_slack_idx] * Matrix::Identity(b.dim, b.dim);
        Eigen::LLT<Matrix> llt(d);
        if (llt.info() != Eigen::Success) return false;
        Matrix l = llt.matrixL();
        double logdet = 0.0;
        for (int i = 0; i < b.dim; ++i) {
            if (l(i, i) <= 0.0) return false;
            logdet += std::log(l(i, i));
        }
        phi -= 2.0 * logdet;
        if (!grad) continue;

        const int na = static_cast<int>(b.idx.size()) + (extra_slack_idx >= 0 ? 1 : 0);
        Matrix vb(na, b.dim * b.dim);
        auto lsolve = [&](const Matrix& a) {
            Matrix m = l.triangularView<Eigen::Lower>().solve(a);
            m = l.triangularView<Eigen::Lower>().solve(m.transpose().eval());
            return m;
        };
        for (std::size_t k = 0; k < b.idx.size(); ++k) {
            Matrix m = lsolve(b.basis[k]);
            (*grad)[b.idx[k]] -= m.trace();
            vb.row(static_cast<int>(k)) = Eigen::Map<const Vector>(m.data(), m.size());
        }
        if (extra_slack_idx >= 0) {
            Matrix m = lsolve(Matrix::Identity(b.dim, b.dim));
            (*grad)[extra_slack_idx] -= m.trace();
            vb.row(na - 1) = Eigen::Map<const Vector>(m.data(), m.size());
        }
        if (hess) {
            Matrix hb = vb * vb.transpose();
            auto gidx = [&](int k) {
                return k < static_cast<int>(b.idx.size()) ? b.idx[k] : extra_slack_idx;
            };
            for (int a = 0; a < na; ++a)
                for (int bcol = 0; bcol < na; ++bcol) (*hess)(gidx(a), gidx(bcol)) += hb(a, bcol);
        }
    }
    return true;
}

struct PathResult {
    bool converged = false;
    Vector y;
    double objective = 0.0;
    int iters = 0;
};

/// Barrier path-following: minimize f0 subject to all compiled blocks PD.
/// f0 is c'y plus, optionally, -log det of one symmetric variable. The
/// early-exit predicate (if any) stops as soon as it holds at an interior
/// iterate (used by the phase-1 slack minimization).
inline PathResult follow_path(const LmiProblem& p, const CompiledLmi& c, Vector y,
                              const Vector& cobj, int slack_idx, int logdet_var, int budget,
                              double abs_tol, double rel_tol,
                              const std::function<bool(const Vector&)>& early_exit)
{
    PathResult res;
    const int n = static_cast<int>(y.size());
    double mtotal = 0.0;
    for (const auto& b : c.blocks) mtotal += b.dim;

    auto f0 = [&](const Vector& yy, Vector* g, Matrix* h) -> double {
        double v = cobj.dot(yy);
        if (g) *g = cobj;
        if (logdet_var >= 0) {
            Matrix s = p.value(logdet_var, yy);
            Eigen::LLT<Matrix> llt(s);
            if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
            Matrix l = llt.matrixL();
            for (int i = 0; i < s.rows(); ++i) v -= 2.0 * std::log(l(i, i));
            if (g) {
                // gradient of -log det over packed coordinates
                Matrix sinv = llt.solve(Matrix::Identity(s.rows(), s.cols()));
                const LmiVar& var = p.var(logdet_var);
                int k = var.offset;
                for (int jj = 0; jj < var.cols; ++jj)
                    for (int ii = jj; ii < var.rows; ++ii) {
                        (*g)[k] += (ii == jj) ? -sinv(ii, jj) : -2.0 * sinv(ii, jj);
                        ++k;
                    }
                if (h) {
                    const LmiVar& vv = p.var(logdet_var);
                    std::vector<Matrix> basis;
                    std::vector<int> idx;
                    for (int jj = 0; jj < vv.cols; ++jj)
                        for (int ii = jj; ii < vv.rows; ++ii) {
                            Matrix e = Matrix::Zero(vv.rows, vv.cols);
                            e(ii, jj) = 1.0;
                            e(jj, ii) = 1.0;
                            basis.push_back(std::move(e));
                        }
                    for (std::size_t a = 0; a < basis.size(); ++a) {
                        Matrix ma = sinv * basis[a];
                        for (std::size_t bb = a; bb < basis.size(); ++bb) {
                            double hij = (ma * (sinv * basis[bb])).trace();
                            (*h)(vv.offset + a, vv.offset + bb) += hij;
                            if (a != bb) (*h)(vv.offset + bb, vv.offset + a) += hij;
                        }
                    }
                }
            }
        }
        return v;
    };

    double tau = 1.0;
    Vector grad(n), g0(n);
    Matrix hess(n, n), h0(n, n);
    for (;;) {
        // inner Newton loop on tau*f0 + phi
        double prev_decrement = std::numeric_limits<double>::infinity();
        int stall = 0;
        for (;;) {
            if (res.iters >= budget) {
                res.y = y;
                return res;
            }
            double phi;
            hess.setZero();
            h0.setZero();
            if (!barrier_eval(c, y, slack_idx, phi, &grad, &hess))
                throw std::runtime_error("lmisolve: interior point lost (internal error)");
            g0.setZero();
            double fv = f0(y, &g0, &h0);
            Vector gtot = tau * g0 + grad;
            Matrix htot = tau * h0 + hess;
            double ridge = 1e-12 * (1.0 + htot.diagonal().cwiseAbs().maxCoeff());
            Vector step;
            for (;;) {
                Eigen::LDLT<Matrix> ldlt(htot + ridge * Matrix::Identity(n, n));
                step = ldlt.solve(-gtot);
                if (ldlt.info() == Eigen::Success && step.allFinite()) break;
                ridge *= 100.0;
                if (ridge > 1e6) throw std::runtime_error("lmisolve: singular Newton system");
            }
            double decrement = -gtot.dot(step);
            ++res.iters;
            double merit0 = tau * fv + phi;
            if (decrement * 0.5 <= 1e-12 * (1.0 + std::abs(merit0))) break;
            // numerical floor: the decrement stops shrinking
            stall = decrement >= 0.99 * prev_decrement ? stall + 1 : 0;
            if (stall >= 8) break;
            prev_decrement = decrement;
            // backtracking line search on the merit tau*f0 + phi
            double alpha = 1.0;
            bool accepted = false;
            while (alpha >= 1e-13) {
                Vector yt = y + alpha * step;
                double phit;
                if (barrier_eval(c, yt, slack_idx, phit, nullptr, nullptr)) {
                    double ft = f0(yt, nullptr, nullptr);
                    if (std::isfinite(ft) && tau * ft + phit <= merit0 - 1e-4 * alpha * decrement) {
                        y = std::move(yt);
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
            if (early_exit && early_exit(y)) {
                res.converged = true;
                res.y = y;
                res.objective = f0(y, nullptr, nullptr);
                return res;
            }
        }
        double fv = f0(y, nullptr, nullptr);
        if (early_exit) {
            if (early_exit(y)) {
                res.converged = true;
                res.y = y;
                res.objective = fv;
                return res;
            }
        }
        double gap = mtotal / tau;
        if (gap <= std::max(abs_tol, rel_tol * std::abs(fv))) {
            res.converged = true;
            res.y = y;
            res.objective = fv;
            return res;
        }
        tau *= 10.0;
        if (tau > 1e14) {
            res.converged = true;  // gap limit of double precision
            res.y = y;
            res.objective = fv;
            return res;
        }
    }
}

}  // namespace detail

/// Audit helper: smallest eigenvalue over all blocks at the given point.
inline double lmi_min_block_eig(const LmiProblem& p, const Vector& y)
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : p.blocks()) m = std::min(m, min_eig(p.evaluate_block(b, y)));
    return m;
}

/// Find a point satisfying every block with margin >= options.margin, via
/// phase-1 slack minimization with a log-barrier path-following method.
inline LmiSolution solve_feasibility(const LmiProblem& p, const LmiOptions& options = {})
{
    require(p.total_dim() <= options.var_cap,
            "lmisolve: total variable dimension exceeds cap (" +
                std::to_string(p.total_dim()) + " > " + std::to_string(options.var_cap) + ")");
    require(!p.blocks().empty(), "lmisolve: no blocks");

    detail::CompiledLmi c = detail::compile(p, options.margin);
    const int n = p.total_dim();
    Vector y0 = p.initial_point();

    // slack: blocks D_j + t I are strictly PD at t0
    double worst = 0.0;
    {
        Vector probe = y0;
        for (const auto& b : c.blocks) {
            Matrix d = b.constant;
            for (std::size_t k = 0; k < b.idx.size(); ++k) d += probe[b.idx[k]] * b.basis[k];
            worst = std::max(worst, -min_eig(d));
        }
    }
    Vector yt(n + 1);
    yt.head(n) = y0;
    yt[n] = worst + 1.0;

    Vector cobj = Vector::Zero(n + 1);
    cobj[n] = 1.0;
    const double exit_level = -1e-3 * (1.0 + std::abs(yt[n]));
    auto early = [&](const Vector& yy) { return yy[yy.size() - 1] <= exit_level; };

    detail::PathResult ph1 = detail::follow_path(p, c, yt, cobj, n, -1, options.newton_budget,
                                                 1e-10, 1e-9, early);
    LmiSolution sol;
    sol.newton_iters = ph1.iters;
    if (!ph1.converged) {
        sol.status = LmiStatus::MaxIterations;
        sol.y = ph1.y.size() ? ph1.y.head(n).eval() : y0;
        sol.achieved_margin = lmi_min_block_eig(p, sol.y);
        return sol;
    }
    double t = ph1.y[n];
    sol.y = ph1.y.head(n);
    sol.achieved_margin = lmi_min_block_eig(p, sol.y);
    if (t > -1e-12) {
        sol.status = LmiStatus::Infeasible;
        return sol;
    }
    sol.status = LmiStatus::Feasible;
    return sol;
}

/// Minimize the declared objective over the feasible set, starting from a
/// phase-1 point. The reported objective is within max(1e-9, 1e-7|f|) of
/// the optimum by the barrier gap bound.
inline LmiSolution minimize_linear(const LmiProblem& p, const LmiOptions& options = {})
{
    require(p.has_objective(), "minimize_linear: objective missing");
    LmiSolution sol = solve_feasibility(p, options);
    if (sol.status != LmiStatus::Feasible) return sol;

    detail::CompiledLmi c = detail::compile(p, options.margin);
    Vector cobj = p.objective() ? *p.objective() : Vector::Zero(p.total_dim());
    int logdet_var = p.logdet_var() ? *p.logdet_var() : -1;
    if (logdet_var >= 0)
        require(min_eig(p.value(logdet_var, sol.y)) > 0.0,
                "minimize_linear: log-det variable must be kept PD by a block");
    detail::PathResult ph2 =
        detail::follow_path(p, c, sol.y, cobj, -1, logdet_var,
                            options.newton_budget, options.obj_abs_tol, options.obj_rel_tol, {});
    sol.newton_iters += ph2.iters;
    if (!ph2.converged) {
        sol.status = LmiStatus::MaxIterations;
        return sol;
    }
    sol.y = ph2.y;
    sol.objective = ph2.objective;
    sol.achieved_margin = lmi_min_block_eig(p, sol.y);
    return sol;
}

}  // namespace tubempc
