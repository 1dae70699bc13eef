#pragma once

#include <Eigen/Dense>

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace tubempc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr const char* kVersion = "0.1.0";

/// Global absolute tolerance for membership, PSD and emptiness checks.
/// Overridable via the TUBEMPC_TOL environment variable (read once).
inline double& global_tol()
{
    static double tol = [] {
        if (const char* env = std::getenv("TUBEMPC_TOL")) {
            double v = std::atof(env);
            if (v > 0.0) return v;
        }
        return 1e-9;
    }();
    return tol;
}

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw std::invalid_argument(msg);
}

/// Symmetry check with absolute tolerance.
inline bool is_symmetric(const Matrix& m, double tol = 1e-10)
{
    if (m.rows() != m.cols()) return false;
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eig(const Matrix& sym)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Largest eigenvalue of a symmetric matrix.
inline double max_eig(const Matrix& sym)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

/// Symmetric positive (semi)definite square root via eigendecomposition.
inline Matrix sym_sqrt(const Matrix& sym)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    Vector d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d[i] < -1e-10) throw std::runtime_error("sym_sqrt: matrix is not PSD");
        d[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
    }
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Spectral radius (largest eigenvalue magnitude) of a square matrix.
inline double spectral_radius(const Matrix& a)
{
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest singular value.
inline double spectral_norm(const Matrix& a)
{
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

/// Matrix power by binary exponentiation (p >= 0).
inline Matrix matrix_power(const Matrix& a, long p)
{
    require(a.rows() == a.cols(), "matrix_power: square matrix required");
    require(p >= 0, "matrix_power: nonnegative exponent required");
    Matrix result = Matrix::Identity(a.rows(), a.cols());
    Matrix base = a;
    while (p > 0) {
        if (p & 1) result = result * base;
        base = base * base;
        p >>= 1;
    }
    return result;
}

}  // namespace tubempc
