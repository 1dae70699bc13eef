#pragma once

#include "tubempc/common.hpp"

#include <cmath>

namespace tubempc {

struct DareResult {
    Matrix gain;  // u = gain * x stabilizes A + B*gain
    Matrix cost;  // fixed point of the Riccati recursion
    double residual = 0.0;
};

/// PBH test: every eigenvalue of A with |lambda| >= 1 is controllable.
inline bool is_stabilizable(const Matrix& a, const Matrix& b, double tol = 1e-8)
{
    const int n = static_cast<int>(a.rows());
    Eigen::EigenSolver<Matrix> es(a);
    for (int k = 0; k < n; ++k) {
        std::complex<double> lam = es.eigenvalues()[k];
        if (std::abs(lam) < 1.0 - tol) continue;
        Eigen::MatrixXcd pencil(n, n + b.cols());
        pencil << a.cast<std::complex<double>>() - lam * Eigen::MatrixXcd::Identity(n, n),
            b.cast<std::complex<double>>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
        if (svd.singularValues()(n - 1) <= tol * svd.singularValues()(0)) return false;
    }
    return true;
}

/// Rank test on the controllability matrix [B, AB, ..., A^{n-1}B].
inline bool is_controllable(const Matrix& a, const Matrix& b, double tol = 1e-8)
{
    const int n = static_cast<int>(a.rows());
    Matrix ctrb(n, n * b.cols());
    Matrix blk = b;
    for (int i = 0; i < n; ++i) {
        ctrb.middleCols(i * b.cols(), b.cols()) = blk;
        blk = a * blk;
    }
    Eigen::JacobiSVD<Matrix> svd(ctrb);
    return svd.singularValues()(0) > 0.0 &&
           svd.singularValues()(std::min<Eigen::Index>(n, svd.singularValues().size()) - 1) >
               tol * svd.singularValues()(0);
}

/// Infinity-norm residual of P - A'PA + A'PB (R + B'PB)^{-1} B'PA - Q.
inline double dare_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                            const Matrix& p)
{
    Matrix g = (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
    Matrix res = a.transpose() * p * a - a.transpose() * p * b * g + q - p;
    return res.cwiseAbs().maxCoeff();
}

/// Discrete algebraic Riccati equation by the structure-preserving
/// doubling algorithm; quadratically convergent for stabilizable (A, B)
/// with detectable (A, Q^{1/2}).
inline DareResult solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r)
{
    const int n = static_cast<int>(a.rows());
    require(a.cols() == n && b.rows() == n, "solve_dare: dimension mismatch");
    require(is_symmetric(q, 1e-10) && is_symmetric(r, 1e-10), "solve_dare: Q, R must be symmetric");
    require(min_eig(r) > 0.0, "solve_dare: R must be positive definite");
    require(min_eig(q) > -1e-12, "solve_dare: Q must be positive semidefinite");
    if (!is_stabilizable(a, b)) throw std::runtime_error("solve_dare: (A, B) is not stabilizable");

    Matrix ak = a;
    Matrix gk = b * r.ldlt().solve(b.transpose());
    Matrix hk = q;
    const Matrix eye = Matrix::Identity(n, n);
    for (int iter = 0; iter < 200; ++iter) {
        Eigen::PartialPivLU<Matrix> lu(eye + gk * hk);
        Matrix w = lu.solve(ak);          // (I + G H)^{-1} A
        Matrix gnext = gk + ak * lu.solve(gk * ak.transpose());
        Matrix hnext = hk + ak.transpose() * hk * w;
        Matrix anext = ak * w;
        double delta = (hnext - hk).cwiseAbs().maxCoeff();
        ak = std::move(anext);
        gk = 0.5 * (gnext + gnext.transpose().eval());
        hk = 0.5 * (hnext + hnext.transpose().eval());
        if (delta <= 1e-14 * (1.0 + hk.cwiseAbs().maxCoeff())) break;
    }
    DareResult out;
    out.cost = hk;
    out.gain = -(r + b.transpose() * hk * b).ldlt().solve(b.transpose() * hk * a);
    out.residual = dare_residual(a, b, q, r, hk);
    if (!(out.residual <= 1e-9 * (1.0 + hk.cwiseAbs().maxCoeff())))
        throw std::runtime_error("solve_dare: Riccati iteration did not converge (residual " +
                                 std::to_string(out.residual) + ")");
    if (spectral_radius(a + b * out.gain) >= 1.0)
        throw std::runtime_error("solve_dare: closed loop not stable (detectability violated?)");
    return out;
}

}  // namespace tubempc
