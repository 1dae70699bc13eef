#pragma once

#include "tubempc/dare.hpp"
#include "tubempc/setcalc.hpp"
#include "tubempc/tightening.hpp"

#include <string>
#include <vector>

namespace tubempc {

/// Disturbed LTI plant x+ = A x + B u + w, w in W.
struct SystemModel {
    Matrix a;
    Matrix b;
    Zonotope w{Matrix::Zero(1, 0)};

    int state_dim() const { return static_cast<int>(a.rows()); }
    int input_dim() const { return static_cast<int>(b.cols()); }

    void validate() const
    {
        require(a.rows() == a.cols(), "SystemModel: A must be square");
        require(b.rows() == a.rows(), "SystemModel: B row count mismatch");
        require(w.dim() == a.rows(), "SystemModel: disturbance dimension mismatch");
        require(is_finite(a) && is_finite(b), "SystemModel: non-finite entries");
        require(is_controllable(a, b, 1e-8), "SystemModel: (A, B) is not controllable");
    }
};

/// Stage and terminal cost weights; all symmetric positive definite.
struct CostMatrices {
    Matrix q;
    Matrix r;
    Matrix p;

    void validate() const
    {
        require(is_symmetric(q, 1e-10) && is_symmetric(r, 1e-10) && is_symmetric(p, 1e-10),
                "CostMatrices: weights must be symmetric");
        require(min_eig(q) > 0.0 && min_eig(r) > 0.0 && min_eig(p) > 0.0,
                "CostMatrices: weights must be positive definite");
    }
};

enum class TerminalKind { Equality, Ellipsoid, Polyhedron };

inline std::string to_string(TerminalKind k)
{
    switch (k) {
        case TerminalKind::Equality: return "equality";
        case TerminalKind::Ellipsoid: return "ellipsoid";
        case TerminalKind::Polyhedron: return "polyhedron";
    }
    return "?";
}

/// Conservative erosion radius of the unit-level ellipsoid {x'Px <= 1} by a
/// zonotope: r = sum_j ||P^{1/2} g_j||. The set {||x||_P <= 1 - r} is an
/// inner approximation of the exact erosion (triangle inequality).
inline double shrink_radius_for_ellipsoid(const Matrix& p, const Zonotope& l)
{
    require(is_symmetric(p, 1e-10) && min_eig(p) > 0.0, "shrink_radius: P must be SPD");
    Matrix ph = sym_sqrt(p);
    double r = 0.0;
    for (int j = 0; j < l.num_generators(); ++j) r += (ph * l.generators().col(j)).norm();
    return r;
}

/// Terminal constraint descriptor: the singleton {0}, the ellipsoid
/// {x'Px <= 1} shrunk by the residual deviation radius, or an externally
/// supplied polytope (tightened rows stored alongside the originals).
struct TerminalSet {
    TerminalKind kind = TerminalKind::Equality;
    Matrix shape;        // ellipsoid: P (unit level set)
    double shrink = 0.0; // ellipsoid: erosion radius for the residual set
    std::vector<double> poly_f_tight;  // polyhedron: tightened offsets
    Matrix poly_F;                     // polyhedron: rows
    Vector poly_f;                     // polyhedron: original offsets

    static TerminalSet equality() { return TerminalSet{}; }

    static TerminalSet ellipsoid(Matrix p, double shrink_radius)
    {
        TerminalSet t;
        t.kind = TerminalKind::Ellipsoid;
        t.shape = std::move(p);
        t.shrink = shrink_radius;
        if (t.shrink >= 1.0)
            throw std::runtime_error(
                "TerminalSet: terminal set vanishes (erosion radius >= 1); increase the horizon");
        return t;
    }

    static TerminalSet polyhedron(const ConstraintPolytope& omega, const Zonotope& residual)
    {
        TerminalSet t;
        t.kind = TerminalKind::Polyhedron;
        t.poly_F = omega.F();
        t.poly_f = omega.f();
        ConstraintPolytope tightened = pontryagin_diff(omega, residual);
        require(tightened.nonempty(1e-12),
                "TerminalSet: tightened terminal polytope empty; increase the horizon");
        t.poly_f_tight.assign(tightened.f().data(), tightened.f().data() + tightened.f().size());
        return t;
    }

    bool contains(const Vector& x, double tol) const
    {
        switch (kind) {
            case TerminalKind::Equality: return x.lpNorm<Eigen::Infinity>() <= tol;
            case TerminalKind::Ellipsoid: {
                double lhs = std::sqrt(std::max(0.0, x.dot(shape * x)));
                return lhs <= 1.0 - shrink + tol;
            }
            case TerminalKind::Polyhedron: {
                Vector ft = Eigen::Map<const Vector>(poly_f_tight.data(),
                                                     static_cast<Eigen::Index>(poly_f_tight.size()));
                return ((poly_F * x - ft).array() <= tol).all();
            }
        }
        return false;
    }
};

/// The persisted offline design: plant, weights, gains, tightening
/// schedule and terminal descriptor, plus the synthesis parameters that
/// produced them.
struct DesignBundle {
    SystemModel model;
    CostMatrices cost;
    Matrix tube_gain;      // feedback gain shaping the deviation tubes
    Matrix terminal_gain;  // terminal feedback gain
    Matrix invariant_shape;  // shape of the robust invariant ellipsoid of tube_gain
    TighteningSchedule schedule;
    TerminalSet terminal;
    int horizon = 0;
    int control_horizon = 0;  // <= horizon; equal means no gain tail

    // synthesis record
    double lambda = 0.0;
    double gamma = 0.0;
    double rho = 1.0;
    double mu = 1.0;
    double lambda_t = 0.0;
    double tail_threshold = 1e-5;

    void validate_shapes() const
    {
        model.validate();
        cost.validate();
        require(horizon >= 1, "DesignBundle: horizon >= 1");
        require(control_horizon >= 1 && control_horizon <= horizon,
                "DesignBundle: control horizon in [1, N]");
        require(tube_gain.rows() == model.input_dim() && tube_gain.cols() == model.state_dim(),
                "DesignBundle: tube gain shape");
        require(terminal_gain.rows() == model.input_dim() &&
                    terminal_gain.cols() == model.state_dim(),
                "DesignBundle: terminal gain shape");
        require(static_cast<int>(schedule.x_tight.size()) == horizon + 1,
                "DesignBundle: schedule length mismatch");
    }
};

}  // namespace tubempc
