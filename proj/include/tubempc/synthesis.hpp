#pragma once

#include "tubempc/lmisolve.hpp"
#include "tubempc/model.hpp"

#include <future>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

namespace tubempc {

/// Search configuration for the tube gain: the S-procedure multiplier grid,
/// the input-authority factor rho, the contraction factor mu, and the
/// relaxation walk tried when every grid point fails (first mu = 1 with
/// decreasing rho, then the recovered rho with decreasing mu).
struct KSearchConfig {
    double rho = 1.0;
    double mu = 0.9;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::vector<double> rho_relaxation = {1.0, 0.8, 0.6, 0.4, 0.2, 0.1};
    std::vector<double> mu_relaxation = {0.95, 0.9, 0.85, 0.8, 0.75, 0.7};
    int vertex_cap = 16;
    LmiOptions lmi;

    static std::vector<double> default_lambda_grid()
    {
        std::vector<double> g;
        for (int i = 0; i <= 99; ++i) g.push_back(0.01 * i);
        return g;
    }

    void validate() const
    {
        require(rho > 0.0 && rho <= 1.0, "KSearchConfig: rho in (0, 1]");
        require(mu > 0.0 && mu <= 1.0, "KSearchConfig: mu in (0, 1]");
        require(!lambda_grid.empty(), "KSearchConfig: empty lambda grid");
        for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
            require(lambda_grid[i] >= 0.0 && lambda_grid[i] < 1.0,
                    "KSearchConfig: lambda values in [0, 1)");
            if (i) require(lambda_grid[i] > lambda_grid[i - 1],
                           "KSearchConfig: lambda grid strictly increasing");
        }
    }
};

struct KResult {
    Matrix gain;             // u = gain * x
    Matrix invariant_shape;  // SPD shape of the robust invariant ellipsoid
    double gamma = 0.0;
    double lambda = 0.0;
    double rho = 1.0;
    double mu = 1.0;
};

struct TerminalResult {
    Matrix gain;  // terminal feedback
    Matrix cost;  // terminal cost matrix, also the ellipsoid shape
    double lambda_t = 0.0;
    bool residual_boxed = false;  // residual set was box over-approximated
    double riccati_residual_mineig = 0.0;
};

namespace detail {

struct GainSolve {
    Matrix gain;
    Matrix invariant_shape;
    double gamma;
};

/// The tube-gain LMI set at fixed (lambda, rho, mu): robust invariance of
/// the ellipsoid per disturbance vertex, state coverage gamma, input
/// authority rho, and the contraction condition; gamma is minimized and
/// capped at 1 for admissibility.
inline LmiProblem build_gain_lmi(const SystemModel& model, const ConstraintPolytope& x,
                                 const ConstraintPolytope& u, double lambda, double rho, double mu,
                                 const std::vector<Vector>& wverts)
{
    const int n = model.state_dim();
    const int m = model.input_dim();
    const Matrix eye_n = Matrix::Identity(n, n);
    LmiProblem p;
    int s = p.add_symmetric("S", n);
    int y = p.add_rectangular("Y", m, n);
    int g = p.add_scalar("gamma");

    for (const Vector& w : wverts) {
        LmiBlock& b = p.new_block(2 * n + 1);
        b.add_term(0, 0, lambda * eye_n, s, eye_n);
        b.add_constant(n, n, Matrix::Constant(1, 1, 1.0 - lambda));
        b.add_term(n + 1, 0, model.a, s, eye_n);
        b.add_term(n + 1, 0, model.b, y, eye_n);
        b.add_constant(n + 1, n, w);
        b.add_term(n + 1, n + 1, eye_n, s, eye_n);
    }
    for (int j = 0; j < x.num_rows(); ++j) {
        LmiBlock& b = p.new_block(1);
        b.add_scalar_term(0, 0, g, Matrix::Constant(1, 1, x.f()[j] * x.f()[j]));
        b.add_term(0, 0, -x.F().row(j), s, x.F().row(j).transpose());
    }
    for (int j = 0; j < u.num_rows(); ++j) {
        LmiBlock& b = p.new_block(1 + n);
        double bu = rho * u.f()[j];
        b.add_constant(0, 0, Matrix::Constant(1, 1, bu * bu));
        b.add_term(0, 1, u.F().row(j), y, eye_n);
        b.add_term(1, 1, eye_n, s, eye_n);
    }
    {
        LmiBlock& b = p.new_block(2 * n);
        b.add_term(0, 0, mu * eye_n, s, eye_n);
        b.add_term(n, 0, model.a, s, eye_n);
        b.add_term(n, 0, model.b, y, eye_n);
        b.add_term(n, n, eye_n, s, eye_n);
    }
    {
        LmiBlock& b = p.new_block(1);
        b.add_constant(0, 0, Matrix::Constant(1, 1, 1.0));
        b.add_scalar_term(0, 0, g, Matrix::Constant(1, 1, -1.0));
    }
    p.set_initial(s, 0.01 * eye_n);
    p.minimize_scalar(g);
    return p;
}

inline std::optional<GainSolve> solve_gain_lmi(const SystemModel& model,
                                               const ConstraintPolytope& x,
                                               const ConstraintPolytope& u, double lambda,
                                               double rho, double mu,
                                               const std::vector<Vector>& wverts,
                                               const LmiOptions& opts)
{
    LmiProblem p = build_gain_lmi(model, x, u, lambda, rho, mu, wverts);
    LmiSolution sol = minimize_linear(p, opts);
    if (sol.status != LmiStatus::Feasible) return std::nullopt;
    Matrix s = p.value(0, sol.y);
    Matrix y = p.value(1, sol.y);
    double gamma = p.value(2, sol.y)(0, 0);
    GainSolve out;
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) return std::nullopt;
    out.invariant_shape = llt.solve(Matrix::Identity(s.rows(), s.cols()));
    out.invariant_shape = 0.5 * (out.invariant_shape + out.invariant_shape.transpose().eval());
    out.gain = llt.solve(y.transpose()).transpose();  // Y S^{-1}
    out.gamma = gamma;
    return out;
}

/// Sweep the multiplier grid at fixed (rho, mu); smallest feasible
/// multiplier wins, with its minimized gamma. Grid points are solved in
/// parallel batches and reduced in grid order.
inline std::optional<KResult> sweep_lambda(const SystemModel& model, const ConstraintPolytope& x,
                                           const ConstraintPolytope& u, double rho, double mu,
                                           const KSearchConfig& cfg,
                                           const std::vector<Vector>& wverts)
{
    const std::size_t batch = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < cfg.lambda_grid.size(); start += batch) {
        std::size_t end = std::min(start + batch, cfg.lambda_grid.size());
        std::vector<std::future<std::optional<GainSolve>>> futs;
        for (std::size_t i = start; i < end; ++i) {
            double lambda = cfg.lambda_grid[i];
            futs.push_back(std::async(std::launch::async, [&, lambda] {
                return solve_gain_lmi(model, x, u, lambda, rho, mu, wverts, cfg.lmi);
            }));
        }
        for (std::size_t i = start; i < end; ++i) {
            auto r = futs[i - start].get();
            if (r) {
                KResult out;
                out.gain = r->gain;
                out.invariant_shape = r->invariant_shape;
                out.gamma = r->gamma;
                out.lambda = cfg.lambda_grid[i];
                out.rho = rho;
                out.mu = mu;
                return out;
            }
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Offline design of the tube gain: minimize the state-coverage factor
/// over the multiplier grid at the configured (rho, mu); on total failure
/// walk the relaxation schedule.
inline KResult synth_gain(const SystemModel& model, const ConstraintPolytope& x_in,
                          const ConstraintPolytope& u_in, const KSearchConfig& cfg = {})
{
    cfg.validate();
    model.validate();
    ConstraintPolytope x = normalize_polytope(x_in);
    ConstraintPolytope u = normalize_polytope(u_in);
    std::vector<Vector> wverts = zonotope_vertices(model.w, cfg.vertex_cap);

    std::optional<KResult> best =
        detail::sweep_lambda(model, x, u, cfg.rho, cfg.mu, cfg, wverts);
    if (!best) {
        // relaxation walk: mu = 1 with decreasing rho
        double rho_star = cfg.rho;
        for (double factor : cfg.rho_relaxation) {
            best = detail::sweep_lambda(model, x, u, cfg.rho * factor, 1.0, cfg, wverts);
            if (best) {
                rho_star = cfg.rho * factor;
                break;
            }
        }
        if (!best)
            throw std::runtime_error(
                "synth_gain: no admissible gain found (all multiplier grid points infeasible "
                "after the full relaxation schedule; the disturbance set may be too large)");
        // re-tighten mu at the recovered rho, keeping the last feasible value
        for (double mu_c : cfg.mu_relaxation) {
            if (mu_c >= 1.0) continue;
            auto r = detail::sweep_lambda(model, x, u, rho_star, mu_c, cfg, wverts);
            if (!r) break;
            best = r;
        }
    }
    KResult out = *best;
    require(spectral_radius(model.a + model.b * out.gain) < 1.0,
            "synth_gain: closed loop not strictly stable (internal error)");
    require(out.gamma > 0.0 && out.gamma <= 1.0 + 1e-9, "synth_gain: gamma out of (0, 1]");
    require(min_eig(out.invariant_shape) > 0.0, "synth_gain: invariant shape not PD");
    return out;
}

struct TerminalSynthOptions {
    std::vector<double> lambda_grid = KSearchConfig::default_lambda_grid();
    bool enlarge = false;  // maximize log det of the inverse shape
    int vertex_cap = 16;
    LmiOptions lmi;
    bool force_dare_equality = false;  // take the cost condition with equality
};

/// Terminal ingredient design: gain, cost matrix and the invariant
/// ellipsoid, robust for the residual deviation set, admissible inside the
/// horizon-tightened constraints.
inline TerminalResult synth_terminal(const SystemModel& model,
                                     const ConstraintPolytope& x_tight_n,
                                     const ConstraintPolytope& u_tight_nm1, const Zonotope& l_n,
                                     const Matrix& q, const Matrix& r,
                                     const TerminalSynthOptions& opts = {})
{
    const int n = model.state_dim();
    const int m = model.input_dim();

    if (opts.force_dare_equality) {
        DareResult d = solve_dare(model.a, model.b, q, r);
        TerminalResult out;
        out.gain = d.gain;
        out.cost = d.cost;
        Matrix a_ct = model.a + model.b * d.gain;
        out.riccati_residual_mineig = min_eig(
            out.cost - a_ct.transpose() * out.cost * a_ct - q -
            d.gain.transpose() * r * d.gain);
        return out;
    }

    require(x_tight_n.nonempty(1e-9) && u_tight_nm1.nonempty(1e-9),
            "synth_terminal: tightened sets empty; increase the horizon");
    ConstraintPolytope xt = normalize_polytope(x_tight_n);
    ConstraintPolytope ut = normalize_polytope(u_tight_nm1);

    Zonotope resid = l_n;
    bool boxed = false;
    if (resid.num_generators() > opts.vertex_cap) {
        resid = interval_hull(resid);
        boxed = true;
        require(resid.num_generators() <= opts.vertex_cap,
                "synth_terminal: residual set not enumerable even after boxing");
    }
    std::vector<Vector> dverts = zonotope_vertices(resid, opts.vertex_cap);

    const Matrix eye_n = Matrix::Identity(n, n);
    const Matrix qh = sym_sqrt(q);
    const Matrix rh = sym_sqrt(r);

    for (double lambda_t : opts.lambda_grid) {
        LmiProblem p;
        int s = p.add_symmetric("St", n);
        int y = p.add_rectangular("Yt", m, n);
        {
            // cost-decrease condition in Schur form
            LmiBlock& b = p.new_block(3 * n + m);
            b.add_term(0, 0, eye_n, s, eye_n);
            b.add_term(n, 0, model.a, s, eye_n);
            b.add_term(n, 0, model.b, y, eye_n);
            b.add_term(n, n, eye_n, s, eye_n);
            b.add_term(2 * n, 0, qh, s, eye_n);
            b.add_identity(2 * n, 1.0, n);
            b.add_term(2 * n + n, 0, rh, y, eye_n);
            b.add_identity(2 * n + n, 1.0, m);
        }
        for (const Vector& d : dverts) {
            LmiBlock& b = p.new_block(2 * n + 1);
            b.add_term(0, 0, lambda_t * eye_n, s, eye_n);
            b.add_constant(n, n, Matrix::Constant(1, 1, 1.0 - lambda_t));
            b.add_term(n + 1, 0, model.a, s, eye_n);
            b.add_term(n + 1, 0, model.b, y, eye_n);
            b.add_constant(n + 1, n, d);
            b.add_term(n + 1, n + 1, eye_n, s, eye_n);
        }
        for (int j = 0; j < xt.num_rows(); ++j) {
            LmiBlock& b = p.new_block(1);
            b.add_constant(0, 0, Matrix::Constant(1, 1, 1.0));
            b.add_term(0, 0, -xt.F().row(j), s, xt.F().row(j).transpose());
        }
        for (int j = 0; j < ut.num_rows(); ++j) {
            LmiBlock& b = p.new_block(1 + n);
            b.add_constant(0, 0, Matrix::Constant(1, 1, 1.0));
            b.add_term(0, 1, ut.F().row(j), y, eye_n);
            b.add_term(1, 1, eye_n, s, eye_n);
        }
        p.set_initial(s, 0.01 * eye_n);
        LmiSolution sol;
        if (opts.enlarge) {
            p.maximize_logdet(s);
            sol = minimize_linear(p, opts.lmi);
        } else {
            sol = solve_feasibility(p, opts.lmi);
        }
        if (sol.status != LmiStatus::Feasible) continue;

        Matrix st = p.value(s, sol.y);
        Matrix yt = p.value(y, sol.y);
        Eigen::LLT<Matrix> llt(st);
        if (llt.info() != Eigen::Success) continue;
        TerminalResult out;
        out.cost = llt.solve(eye_n);
        out.cost = 0.5 * (out.cost + out.cost.transpose().eval());
        out.gain = llt.solve(yt.transpose()).transpose();
        out.lambda_t = lambda_t;
        out.residual_boxed = boxed;
        Matrix a_ct = model.a + model.b * out.gain;
        out.riccati_residual_mineig =
            min_eig(out.cost - a_ct.transpose() * out.cost * a_ct - q -
                    out.gain.transpose() * r * out.gain);
        return out;
    }
    throw std::runtime_error(
        "synth_terminal: infeasible for every multiplier; consider a larger horizon "
        "(smaller residual deviation set)");
}

/// Best S-procedure certificate margin for one-step invariance of the
/// unit ellipsoid of p under a_ct with offset d: max over multipliers of
/// the smallest eigenvalue of the certificate matrix.
inline double ellipsoid_invariance_margin(const Matrix& p, const Matrix& a_ct, const Vector& d)
{
    const int n = static_cast<int>(p.rows());
    auto certificate = [&](double lam) {
        Matrix m(n + 1, n + 1);
        m.topLeftCorner(n, n) = lam * p - a_ct.transpose() * p * a_ct;
        m.topRightCorner(n, 1) = -a_ct.transpose() * p * d;
        m.bottomLeftCorner(1, n) = m.topRightCorner(n, 1).transpose();
        m(n, n) = 1.0 - lam - d.dot(p * d);
        return min_eig(m);
    };
    double best = -std::numeric_limits<double>::infinity();
    double best_lam = 0.0;
    for (int i = 0; i <= 100; ++i) {
        double lam = 0.01 * i;
        double v = certificate(lam);
        if (v > best) {
            best = v;
            best_lam = lam;
        }
    }
    double lo = std::max(0.0, best_lam - 0.01), hi = std::min(1.0, best_lam + 0.01);
    for (int it = 0; it < 60; ++it) {
        double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (certificate(m1) < certificate(m2)) lo = m1; else hi = m2;
    }
    return std::max(best, certificate(0.5 * (lo + hi)));
}

/// Report of the standing design assumptions: (i) positive definite
/// weights, (ii) terminal cost decrease, (iii) stabilizing tube gain with
/// nonempty horizon-tightened sets, (iv) invariant and admissible terminal
/// set for the residual disturbances.
struct AssumptionReport {
    bool cost_weights_pd = false;
    bool terminal_cost_decrease = false;
    double terminal_residual_mineig = 0.0;
    bool gain_stabilizing = false;
    double closed_loop_radius = 1.0;
    bool tightened_nonempty = false;
    bool terminal_set_ok = false;
    double terminal_margin = 0.0;
    std::string note;

    bool all() const
    {
        return cost_weights_pd && terminal_cost_decrease && gain_stabilizing &&
               tightened_nonempty && terminal_set_ok;
    }
};

inline AssumptionReport check_assumptions(const DesignBundle& bundle)
{
    AssumptionReport rep;
    const SystemModel& model = bundle.model;
    const Matrix& q = bundle.cost.q;
    const Matrix& r = bundle.cost.r;
    const Matrix& p = bundle.cost.p;

    rep.cost_weights_pd = is_symmetric(q, 1e-10) && is_symmetric(r, 1e-10) &&
                          min_eig(q) > 0.0 && min_eig(r) > 0.0;

    Matrix a_ct = model.a + model.b * bundle.terminal_gain;
    Matrix resid = p - a_ct.transpose() * p * a_ct - q -
                   bundle.terminal_gain.transpose() * r * bundle.terminal_gain;
    rep.terminal_residual_mineig = min_eig(0.5 * (resid + resid.transpose().eval()));
    rep.terminal_cost_decrease = rep.terminal_residual_mineig >= -1e-8;

    rep.closed_loop_radius = spectral_radius(model.a + model.b * bundle.tube_gain);
    rep.gain_stabilizing = rep.closed_loop_radius < 1.0;
    rep.tightened_nonempty = bundle.schedule.x_tight.back().nonempty(1e-9) &&
                             bundle.schedule.u_tight.back().nonempty(1e-9);

    const int horizon = bundle.horizon;
    const Zonotope& l_n = bundle.schedule.residual;
    switch (bundle.terminal.kind) {
        case TerminalKind::Equality: {
            const bool exactly_zero = l_n.generators().size() == 0 ||
                                      l_n.generators().cwiseAbs().maxCoeff() == 0.0;
            rep.terminal_set_ok =
                exactly_zero || bundle.schedule.tail_norm <= bundle.tail_threshold;
            rep.terminal_margin = bundle.tail_threshold - bundle.schedule.tail_norm;
            rep.note = rep.terminal_set_ok
                           ? "terminal equality: residual set negligible"
                           : "terminal equality requested but the residual set is not negligible";
            break;
        }
        case TerminalKind::Ellipsoid: {
            const Matrix& shape = bundle.terminal.shape;
            Zonotope resid_set = l_n.num_generators() > 16 ? interval_hull(l_n) : l_n;
            double inv_margin = std::numeric_limits<double>::infinity();
            for (const Vector& d : zonotope_vertices(resid_set)) {
                inv_margin = std::min(inv_margin, ellipsoid_invariance_margin(shape, a_ct, d));
            }
            Eigen::LLT<Matrix> llt(shape);
            Matrix sinv = llt.solve(Matrix::Identity(shape.rows(), shape.cols()));
            double adm_margin = std::numeric_limits<double>::infinity();
            const ConstraintPolytope& xt = bundle.schedule.x_tight[horizon];
            for (int j = 0; j < xt.num_rows(); ++j) {
                double sup = std::sqrt(std::max(0.0, (xt.F().row(j) * sinv *
                                                      xt.F().row(j).transpose())(0, 0)));
                adm_margin = std::min(adm_margin, xt.f()[j] - sup);
            }
            const ConstraintPolytope& ut = bundle.schedule.u_tight[std::max(0, horizon - 1)];
            Matrix kt_sinv_kt = bundle.terminal_gain * sinv * bundle.terminal_gain.transpose();
            for (int j = 0; j < ut.num_rows(); ++j) {
                double sup = std::sqrt(std::max(0.0, (ut.F().row(j) * kt_sinv_kt *
                                                      ut.F().row(j).transpose())(0, 0)));
                adm_margin = std::min(adm_margin, ut.f()[j] - sup);
            }
            rep.terminal_margin = std::min(inv_margin, adm_margin);
            rep.terminal_set_ok = inv_margin >= -1e-8 && adm_margin >= -1e-8;
            rep.note = "ellipsoidal terminal: certificate margin " + std::to_string(inv_margin) +
                       ", admissibility margin " + std::to_string(adm_margin);
            break;
        }
        case TerminalKind::Polyhedron: {
            require(model.state_dim() == 2,
                    "check_assumptions: polyhedral terminal audit is 2-D only");
            ConstraintPolytope omega(bundle.terminal.poly_F, bundle.terminal.poly_f);
            std::vector<Vector> verts = polytope_vertices_2d(omega);
            std::vector<Vector> dverts = zonotope_vertices(
                l_n.num_generators() > 16 ? interval_hull(l_n) : l_n);
            double margin = std::numeric_limits<double>::infinity();
            const ConstraintPolytope& xt = bundle.schedule.x_tight[horizon];
            const ConstraintPolytope& ut = bundle.schedule.u_tight[std::max(0, horizon - 1)];
            for (const Vector& v : verts) {
                for (const Vector& d : dverts)
                    margin = std::min(margin, omega.margin(a_ct * v + d));
                margin = std::min(margin, xt.margin(v));
                margin = std::min(margin, ut.margin(bundle.terminal_gain * v));
            }
            rep.terminal_margin = margin;
            rep.terminal_set_ok = margin >= -1e-8;
            rep.note = "polyhedral terminal: vertex margin " + std::to_string(margin);
            break;
        }
    }
    return rep;
}

/// End-to-end offline design options.
struct BundleOptions {
    TerminalKind terminal = TerminalKind::Ellipsoid;
    std::optional<ConstraintPolytope> terminal_poly;  // external polytope
    bool enlarge_terminal = false;
    double qp_exit_tol = 1e-4;
    std::vector<double> lambda_t_grid = KSearchConfig::default_lambda_grid();
    int control_horizon = 0;  // 0 means equal to the prediction horizon
};

/// Full offline pipeline: tube gain, tightening schedule, terminal
/// ingredients, assembled into a validated bundle.
inline DesignBundle synthesize_bundle(const SystemModel& model, const ConstraintPolytope& x_in,
                                      const ConstraintPolytope& u_in, const Matrix& q,
                                      const Matrix& r, int horizon, const KSearchConfig& kcfg = {},
                                      const BundleOptions& opts = {})
{
    require(horizon >= 1, "synthesize_bundle: horizon >= 1");
    DesignBundle bundle;
    bundle.model = model;
    ConstraintPolytope x = normalize_polytope(x_in);
    ConstraintPolytope u = normalize_polytope(u_in);

    KResult k = synth_gain(model, x, u, kcfg);
    bundle.tube_gain = k.gain;
    bundle.invariant_shape = k.invariant_shape;
    bundle.lambda = k.lambda;
    bundle.gamma = k.gamma;
    bundle.rho = k.rho;
    bundle.mu = k.mu;

    Matrix a_cl = model.a + model.b * k.gain;
    bundle.schedule = tighten_constraints(x, u, k.gain, a_cl, model.w, horizon);
    bundle.horizon = horizon;
    bundle.control_horizon = opts.control_horizon > 0 ? opts.control_horizon : horizon;
    bundle.tail_threshold = default_negligibility_threshold(opts.qp_exit_tol);

    switch (opts.terminal) {
        case TerminalKind::Equality: {
            const bool residual_exactly_zero =
                bundle.schedule.residual.generators().size() == 0 ||
                bundle.schedule.residual.generators().cwiseAbs().maxCoeff() == 0.0;
            if (!residual_exactly_zero &&
                !negligible_residual(bundle.schedule.tail_norm, bundle.tail_threshold))
                throw std::runtime_error(
                    "synthesize_bundle: terminal equality requires a negligible residual set "
                    "(tail " + std::to_string(bundle.schedule.tail_norm) + " > threshold " +
                    std::to_string(bundle.tail_threshold) + "); increase the horizon");
            DareResult d = solve_dare(model.a, model.b, q, r);
            bundle.terminal_gain = d.gain;
            bundle.cost = CostMatrices{q, r, d.cost};
            bundle.terminal = TerminalSet::equality();
            break;
        }
        case TerminalKind::Ellipsoid: {
            TerminalSynthOptions topts;
            topts.lambda_grid = opts.lambda_t_grid;
            topts.enlarge = opts.enlarge_terminal;
            TerminalResult t = synth_terminal(model, bundle.schedule.x_tight[horizon],
                                              bundle.schedule.u_tight[horizon - 1],
                                              bundle.schedule.residual, q, r, topts);
            bundle.terminal_gain = t.gain;
            bundle.cost = CostMatrices{q, r, t.cost};
            bundle.lambda_t = t.lambda_t;
            double shrink = shrink_radius_for_ellipsoid(t.cost, bundle.schedule.residual);
            bundle.terminal = TerminalSet::ellipsoid(t.cost, shrink);
            break;
        }
        case TerminalKind::Polyhedron: {
            require(opts.terminal_poly.has_value(),
                    "synthesize_bundle: polyhedral terminal requires an external set");
            DareResult d = solve_dare(model.a, model.b, q, r);
            bundle.terminal_gain = d.gain;
            bundle.cost = CostMatrices{q, r, d.cost};
            bundle.terminal =
                TerminalSet::polyhedron(*opts.terminal_poly, bundle.schedule.residual);
            break;
        }
    }
    bundle.validate_shapes();
    AssumptionReport rep = check_assumptions(bundle);
    if (!rep.all()) {
        std::ostringstream os;
        os << "synthesize_bundle: design audit failed:"
           << (rep.cost_weights_pd ? "" : " weights-not-PD")
           << (rep.terminal_cost_decrease ? "" : " terminal-cost-decrease")
           << (rep.gain_stabilizing ? "" : " gain-not-stabilizing")
           << (rep.tightened_nonempty ? "" : " tightened-sets-empty")
           << (rep.terminal_set_ok ? "" : " terminal-set") << "; " << rep.note;
        throw std::runtime_error(os.str());
    }
    return bundle;
}

}  // namespace tubempc
