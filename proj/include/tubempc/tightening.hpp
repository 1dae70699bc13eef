#pragma once

#include "tubempc/setcalc.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tubempc {

/// Per-step constraint tightening data for one closed-loop gain: the
/// accumulated deviation tubes, the residual deviation set at the horizon,
/// and the tightened state/input polytopes.
struct TighteningSchedule {
    Matrix a_cl;                            // closed-loop matrix A + B*K
    int horizon = 0;                        // N
    std::vector<Zonotope> tubes;            // tube(i), i in 1..N (index 0 -> i=1)
    Zonotope residual{Matrix::Zero(1, 0)};  // residual deviation set at the horizon
    std::vector<ConstraintPolytope> x_tight;  // i in 0..N
    std::vector<ConstraintPolytope> u_tight;  // i in 0..N
    double tail_norm = 0.0;                   // squared spectral norm of a_cl^{N-1}

    const Zonotope& tube(int i) const { return tubes.at(i - 1); }  // i >= 1
};

/// Accumulated deviation tubes: tube(1) = W, tube(i) = a_cl^{i-1} W + tube(i-1)
/// (generator concatenation, newest block first).
inline std::vector<Zonotope> build_tubes(const Matrix& a_cl, const Zonotope& w, int horizon)
{
    require(horizon >= 1, "build_tubes: horizon >= 1");
    std::vector<Zonotope> tubes;
    tubes.reserve(horizon);
    tubes.push_back(w);
    Matrix pw = a_cl;
    for (int i = 2; i <= horizon; ++i) {
        tubes.push_back(minkowski_sum(map_zonotope(pw, w), tubes.back()));
        pw = a_cl * pw;
    }
    return tubes;
}

/// Residual deviation set at step i: the image of W under a_cl^{i-1}.
inline Zonotope build_residual(const Matrix& a_cl, const Zonotope& w, int i)
{
    require(i >= 1, "build_residual: step >= 1");
    return map_zonotope(matrix_power(a_cl, i - 1), w);
}

/// Squared spectral norm of a_cl^{N-1}, via binary exponentiation.
inline double tail_norm(const Matrix& a_cl, int horizon)
{
    require(horizon >= 1, "tail_norm: horizon >= 1");
    double s = spectral_norm(matrix_power(a_cl, horizon - 1));
    return s * s;
}

/// Whether the residual deviation set can be treated as {0}: its size
/// (tail norm) is below the threshold, by default one tenth of the QP
/// exit tolerance.
inline bool negligible_residual(double tail, double threshold) { return tail <= threshold; }

inline double default_negligibility_threshold(double qp_exit_tol) { return 0.1 * qp_exit_tol; }

/// Tightened constraints X_i = X - tube(i), U_i = U - K tube(i) for
/// i = 0..N (step 0 is the nominal pair). Throws naming the first step at
/// which a tightened set becomes empty.
inline TighteningSchedule tighten_constraints(const ConstraintPolytope& x,
                                              const ConstraintPolytope& u, const Matrix& gain,
                                              const Matrix& a_cl, const Zonotope& w, int horizon)
{
    TighteningSchedule s;
    s.a_cl = a_cl;
    s.horizon = horizon;
    s.tubes = build_tubes(a_cl, w, horizon);
    s.residual = build_residual(a_cl, w, horizon);
    s.tail_norm = tail_norm(a_cl, horizon);
    s.x_tight.push_back(x);
    s.u_tight.push_back(u);
    for (int i = 1; i <= horizon; ++i) {
        ConstraintPolytope xi = pontryagin_diff(x, s.tube(i));
        ConstraintPolytope ui = pontryagin_diff(u, map_zonotope(gain, s.tube(i)));
        if (!xi.nonempty(1e-9))
            throw std::runtime_error("tighten_constraints: state constraints vanish at step " +
                                     std::to_string(i));
        if (!ui.nonempty(1e-9))
            throw std::runtime_error("tighten_constraints: input constraints vanish at step " +
                                     std::to_string(i));
        s.x_tight.push_back(std::move(xi));
        s.u_tight.push_back(std::move(ui));
    }
    return s;
}

/// Outer approximation of the minimal robust positive invariant set of
/// x+ = a_cl x + w, w in W: the accumulated tube scaled by 1/(1-alpha)
/// once a_cl^s W fits inside alpha W.
inline Zonotope mrpi_approx(const Matrix& a_cl, const Zonotope& w, double eps, int step_cap = 200)
{
    require(eps > 0.0, "mrpi_approx: eps must be positive");
    require(spectral_radius(a_cl) < 1.0, "mrpi_approx: closed loop must be stable");
    const int n = w.dim();
    if (w.is_singleton()) return w;

    // minimal alpha with a_cl^s W inside alpha W, via the facet description
    // of W (1-D/2-D exact; otherwise requires square invertible generators)
    std::optional<ConstraintPolytope> w_rows;
    std::optional<Matrix> w_geninv;
    if (n == 1) {
        double r = w.interval_hull_radius()[0];
        Matrix f(2, 1);
        f << 1.0, -1.0;
        Vector off(2);
        off << r, r;
        w_rows = ConstraintPolytope(f, off);
    } else if (n == 2) {
        w_rows = zonotope_hrep_2d(w);
    } else if (w.num_generators() == n) {
        Eigen::FullPivLU<Matrix> lu(w.generators());
        require(lu.isInvertible(), "mrpi_approx: need invertible generators for n > 2");
        w_geninv = lu.inverse();
    } else {
        throw std::invalid_argument("mrpi_approx: unsupported disturbance set for n > 2");
    }
    auto min_alpha = [&](const Matrix& pw) {
        if (w_rows) {
            double a = 0.0;
            for (int i = 0; i < w_rows->num_rows(); ++i) {
                Vector c = w_rows->F().row(i).transpose();
                a = std::max(a, support_zonotope(map_zonotope(pw, w), c) / w_rows->f()[i]);
            }
            return a;
        }
        // ||G^{-1} a_cl^s G||_inf bounds the factor mapping one unit box
        // into the other
        return ((*w_geninv) * pw * w.generators()).cwiseAbs().rowwise().sum().maxCoeff();
    };

    Matrix pw = a_cl;
    std::vector<Zonotope> partial{w};
    for (int s = 1; s <= step_cap; ++s) {
        double alpha = min_alpha(pw);
        const Zonotope& fs = partial.back();
        double radius = fs.interval_hull_radius().maxCoeff();
        if (alpha < 1.0 && alpha <= eps / (eps + radius)) {
            return map_zonotope(Matrix::Identity(n, n) / (1.0 - alpha), fs);
        }
        partial.push_back(minkowski_sum(fs, map_zonotope(pw, w)));
        pw = a_cl * pw;
    }
    throw std::runtime_error("mrpi_approx: inclusion not achieved within step cap");
}

}  // namespace tubempc
