#pragma once

#include "tubempc/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tubempc {

/// Centered zonotope {G v : v in [-1,1]^M}. A generator count of zero
/// denotes the singleton {0}. Immutable after construction.
class Zonotope {
public:
    /// Singleton {0} in the given dimension.
    static Zonotope singleton(int dim)
    {
        return Zonotope(Matrix::Zero(dim, 0));
    }

    explicit Zonotope(Matrix generators) : gens_(std::move(generators))
    {
        require(gens_.rows() >= 1, "Zonotope: dimension must be positive");
        require(is_finite(gens_), "Zonotope: generators must be finite");
    }

    int dim() const { return static_cast<int>(gens_.rows()); }
    int num_generators() const { return static_cast<int>(gens_.cols()); }
    bool is_singleton() const { return gens_.cols() == 0; }
    const Matrix& generators() const { return gens_; }

    /// Componentwise half-widths of the tight axis-aligned bounding box.
    Vector interval_hull_radius() const
    {
        return gens_.cwiseAbs().rowwise().sum();
    }

private:
    Matrix gens_;
};

/// H-representation polytope {z : F z <= f}. Immutable after construction.
class ConstraintPolytope {
public:
    ConstraintPolytope(Matrix F, Vector f) : F_(std::move(F)), f_(std::move(f))
    {
        require(F_.rows() == f_.size(), "ConstraintPolytope: F/f row mismatch");
        require(is_finite(F_) && f_.allFinite(), "ConstraintPolytope: entries must be finite");
        for (Eigen::Index i = 0; i < F_.rows(); ++i)
            require(F_.row(i).norm() > 0.0, "ConstraintPolytope: zero row in F");
    }

    int dim() const { return static_cast<int>(F_.cols()); }
    int num_rows() const { return static_cast<int>(F_.rows()); }
    const Matrix& F() const { return F_; }
    const Vector& f() const { return f_; }

    bool contains(const Vector& x, double tol = global_tol()) const
    {
        return ((F_ * x - f_).array() <= tol).all();
    }

    /// Smallest row margin f_i - F_i x (negative when x is outside).
    double margin(const Vector& x) const { return (f_ - F_ * x).minCoeff(); }

    /// Nonempty by the origin-interior convention: all offsets above tol.
    bool nonempty(double tol = 1e-9) const { return (f_.array() >= tol).all(); }

    /// Axis-aligned symmetric box |z_i| <= radius_i.
    static ConstraintPolytope box(const Vector& radius)
    {
        const int n = static_cast<int>(radius.size());
        Matrix F(2 * n, n);
        Vector f(2 * n);
        F.setZero();
        for (int i = 0; i < n; ++i) {
            F(2 * i, i) = 1.0;
            F(2 * i + 1, i) = -1.0;
            f[2 * i] = radius[i];
            f[2 * i + 1] = radius[i];
        }
        return ConstraintPolytope(std::move(F), std::move(f));
    }

private:
    Matrix F_;
    Vector f_;
};

/// Ellipsoid {x : x' P x <= r^2} with P symmetric positive definite.
class Ellipsoid {
public:
    Ellipsoid(Matrix shape, double radius) : P_(std::move(shape)), r_(radius)
    {
        require(is_symmetric(P_, 1e-10), "Ellipsoid: shape matrix must be symmetric");
        require(min_eig(P_) > 0.0, "Ellipsoid: shape matrix must be positive definite");
        require(r_ > 0.0, "Ellipsoid: radius must be positive");
        P_ = 0.5 * (P_ + P_.transpose().eval());
    }

    int dim() const { return static_cast<int>(P_.rows()); }
    const Matrix& shape() const { return P_; }
    double radius() const { return r_; }

private:
    Matrix P_;
    double r_;
};

/// Linear image M.Z = {M z : z in Z}.
inline Zonotope map_zonotope(const Matrix& map, const Zonotope& z)
{
    require(map.cols() == z.dim(), "map_zonotope: dimension mismatch");
    if (z.is_singleton()) return Zonotope::singleton(static_cast<int>(map.rows()));
    return Zonotope(map * z.generators());
}

/// Minkowski sum of two zonotopes: generator concatenation.
inline Zonotope minkowski_sum(const Zonotope& c, const Zonotope& d)
{
    require(c.dim() == d.dim(), "minkowski_sum: dimension mismatch");
    if (c.is_singleton()) return d;
    if (d.is_singleton()) return c;
    Matrix g(c.dim(), c.num_generators() + d.num_generators());
    g << c.generators(), d.generators();
    return Zonotope(std::move(g));
}

/// Pontryagin difference of an H-polytope and a zonotope: the offsets
/// shrink row-wise by the support of the zonotope, the rows are kept.
inline ConstraintPolytope pontryagin_diff(const ConstraintPolytope& c, const Zonotope& d)
{
    require(c.dim() == d.dim(), "pontryagin_diff: dimension mismatch");
    Vector g(c.num_rows());
    for (int i = 0; i < c.num_rows(); ++i)
        g[i] = (c.F().row(i) * d.generators()).cwiseAbs().sum();
    return ConstraintPolytope(c.F(), c.f() - g);
}

/// Support function max_{z in Z} c'z = ||c'G||_1.
inline double support_zonotope(const Zonotope& z, const Vector& c)
{
    require(c.size() == z.dim(), "support_zonotope: dimension mismatch");
    double s = 0.0;
    for (int j = 0; j < z.num_generators(); ++j) s += std::abs(c.dot(z.generators().col(j)));
    return s;
}

/// All 2^M sign-combination images G s, s in {-1,+1}^M, duplicates removed.
/// This is a superset of the true vertex set; every point lies in Z.
inline std::vector<Vector> zonotope_vertices(const Zonotope& z, int cap = 16)
{
    const int m = z.num_generators();
    if (m == 0) return {Vector::Zero(z.dim())};
    require(m <= cap,
            "zonotope_vertices: generator count exceeds cap; reduce generators "
            "(e.g. interval-hull over-approximation) before enumeration");
    std::vector<Vector> pts;
    pts.reserve(std::size_t(1) << m);
    Vector s(m);
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << m); ++mask) {
        for (int j = 0; j < m; ++j) s[j] = (mask >> j) & 1u ? 1.0 : -1.0;
        Vector p = z.generators() * s;
        bool dup = false;
        for (const auto& q : pts)
            if ((p - q).lpNorm<Eigen::Infinity>() <= 1e-12) { dup = true; break; }
        if (!dup) pts.push_back(std::move(p));
    }
    return pts;
}

/// Axis-aligned box over-approximation with one generator per axis.
inline Zonotope interval_hull(const Zonotope& z)
{
    Vector r = z.interval_hull_radius();
    Matrix g = Matrix::Zero(z.dim(), z.dim());
    int k = 0;
    for (int i = 0; i < z.dim(); ++i)
        if (r[i] > 0.0) g(i, k++) = r[i];
    return k > 0 ? Zonotope(g.leftCols(k)) : Zonotope::singleton(z.dim());
}

/// Rescale rows so every offset equals 1. Requires the origin strictly
/// inside (all offsets positive).
inline ConstraintPolytope normalize_polytope(const ConstraintPolytope& c)
{
    Matrix F = c.F();
    Vector f = c.f();
    for (int i = 0; i < c.num_rows(); ++i) {
        require(f[i] > 0.0, "normalize_polytope: origin not strictly interior (offset <= 0)");
        F.row(i) /= f[i];
        f[i] = 1.0;
    }
    return ConstraintPolytope(std::move(F), std::move(f));
}

inline bool ellipsoid_contains(const Ellipsoid& e, const Vector& x)
{
    require(x.size() == e.dim(), "ellipsoid_contains: dimension mismatch");
    return x.dot(e.shape() * x) <= e.radius() * e.radius() + 1e-12;
}

// ---------------------------------------------------------------------------
// 2-D helpers (exact in the plane; used by invariant-set iteration, the
// domain-of-attraction study and test oracles).
// ---------------------------------------------------------------------------

/// Counter-clockwise convex hull of a 2-D point cloud (monotone chain).
inline std::vector<Vector> convex_hull_2d(std::vector<Vector> pts)
{
    if (pts.size() <= 2) return pts;
    std::sort(pts.begin(), pts.end(), [](const Vector& a, const Vector& b) {
        return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vector& a, const Vector& b) {
                              return (a - b).lpNorm<Eigen::Infinity>() <= 1e-12;
                          }),
              pts.end());
    if (pts.size() <= 2) return pts;
    auto cross = [](const Vector& o, const Vector& a, const Vector& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    const std::size_t n = pts.size();
    std::vector<Vector> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 1e-14) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 1e-14) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// Vertices of a bounded 2-D H-polytope by pairwise row intersection.
inline std::vector<Vector> polytope_vertices_2d(const ConstraintPolytope& c, double tol = 1e-9)
{
    require(c.dim() == 2, "polytope_vertices_2d: 2-D only");
    std::vector<Vector> verts;
    const Matrix& F = c.F();
    const Vector& f = c.f();
    for (int i = 0; i < c.num_rows(); ++i) {
        for (int j = i + 1; j < c.num_rows(); ++j) {
            Eigen::Matrix2d a;
            a << F(i, 0), F(i, 1), F(j, 0), F(j, 1);
            double det = a.determinant();
            if (std::abs(det) <= 1e-12 * F.row(i).norm() * F.row(j).norm()) continue;
            Eigen::Vector2d b(f[i], f[j]);
            Vector p = a.inverse() * b;
            if (c.contains(p, tol)) {
                bool dup = false;
                for (const auto& q : verts)
                    if ((p - q).lpNorm<Eigen::Infinity>() <= 1e-9) { dup = true; break; }
                if (!dup) verts.push_back(std::move(p));
            }
        }
    }
    return verts;
}

/// Exact H-representation of a 2-D zonotope: one facet pair per distinct
/// generator direction, offsets from the support function.
inline ConstraintPolytope zonotope_hrep_2d(const Zonotope& z)
{
    require(z.dim() == 2, "zonotope_hrep_2d: 2-D only");
    require(!z.is_singleton(), "zonotope_hrep_2d: singleton has no H-representation");
    std::vector<Vector> normals;
    for (int j = 0; j < z.num_generators(); ++j) {
        Vector g = z.generators().col(j);
        double n = g.norm();
        if (n <= 1e-14) continue;
        Vector perp(2);
        perp << -g[1] / n, g[0] / n;
        if (perp[0] < 0 || (perp[0] == 0 && perp[1] < 0)) perp = -perp;
        bool dup = false;
        for (const auto& q : normals)
            if ((perp - q).lpNorm<Eigen::Infinity>() <= 1e-12) { dup = true; break; }
        if (!dup) normals.push_back(std::move(perp));
    }
    require(!normals.empty(), "zonotope_hrep_2d: all generators are zero");
    Matrix F(2 * normals.size(), 2);
    Vector f(2 * normals.size());
    for (std::size_t i = 0; i < normals.size(); ++i) {
        double s = support_zonotope(z, normals[i]);
        F.row(2 * i) = normals[i].transpose();
        F.row(2 * i + 1) = -normals[i].transpose();
        f[2 * i] = s;
        f[2 * i + 1] = s;
    }
    // A rank-1 zonotope in the plane is a segment; close it with end caps.
    if (normals.size() == 1) {
        Vector dir(2);
        dir << normals[0][1], -normals[0][0];
        Matrix F2(4, 2);
        Vector f2(4);
        F2.topRows(2) = F;
        f2.head(2) = f;
        F2.row(2) = dir.transpose();
        F2.row(3) = -dir.transpose();
        f2[2] = support_zonotope(z, dir);
        f2[3] = f2[2];
        return ConstraintPolytope(std::move(F2), std::move(f2));
    }
    return ConstraintPolytope(std::move(F), std::move(f));
}

}  // namespace tubempc
