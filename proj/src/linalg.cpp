#include "cbo/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace cbo::linalg {

bool is_symmetric(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) return false;
    if (!a.allFinite()) return false;
    const double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0) return true;
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

double default_jitter(const Matrix& a) {
    const double mean_diag = a.diagonal().cwiseAbs().mean();
    return mean_diag > 0.0 ? 1e-6 * mean_diag : 1e-6;
}

namespace {

// Plain left-looking Cholesky so the success criterion (every pivot strictly
// positive) is explicit rather than delegated to a solver's info flag.
bool try_factor(const Matrix& a, Matrix& l) {
    const Eigen::Index n = a.rows();
    l = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double off = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
            l(i, j) = off / ljj;
        }
    }
    return true;
}

}  // namespace

LowerTriangular cholesky(const Matrix& a, double jitter) {
    if (a.rows() != a.cols())
        throw DimensionMismatch("cholesky: matrix must be square");
    if (!is_symmetric(a))
        throw std::invalid_argument("cholesky: matrix must be symmetric and finite");
    if (jitter < 0.0)
        throw std::invalid_argument("cholesky: jitter must be non-negative");

    LowerTriangular out;
    // Level 0 adds nothing; afterwards jitter * 10^k for k = 0..6.
    for (int level = -1; level <= 6; ++level) {
        const double j = (level < 0) ? 0.0 : jitter * std::pow(10.0, level);
        Matrix candidate = a;
        if (j > 0.0) candidate.diagonal().array() += j;
        if (try_factor(candidate, out.m)) {
            out.jitter_used = j;
            return out;
        }
        if (jitter == 0.0) break;  // the whole ladder is a single attempt
    }
    throw NotPositiveDefinite("cholesky: not positive definite even after maximum jitter");
}

LowerTriangular cholesky(const Matrix& a) { return cholesky(a, default_jitter(a)); }

Matrix solve_lower(const LowerTriangular& l, const Matrix& b) {
    if (l.m.rows() != b.rows())
        throw DimensionMismatch("solve_lower: dimension mismatch");
    return l.m.triangularView<Eigen::Lower>().solve(b);
}

Matrix solve_lower_transpose(const LowerTriangular& l, const Matrix& b) {
    if (l.m.rows() != b.rows())
        throw DimensionMismatch("solve_lower_transpose: dimension mismatch");
    return l.m.transpose().triangularView<Eigen::Upper>().solve(b);
}

Matrix solve_spd(const LowerTriangular& l, const Matrix& b) {
    return solve_lower_transpose(l, solve_lower(l, b));
}

double logdet_from_chol(const LowerTriangular& l) {
    return 2.0 * l.m.diagonal().array().log().sum();
}

Matrix chol_pushforward(const LowerTriangular& l, const Matrix& dsigma) {
    if (dsigma.rows() != l.dim() || dsigma.cols() != l.dim())
        throw DimensionMismatch("chol_pushforward: dimension mismatch");
    if (!is_symmetric(dsigma, 1e-10))
        throw std::invalid_argument("chol_pushforward: perturbation must be symmetric");
    // F = L^{-1} dS L^{-T}
    Matrix f = solve_lower(l, dsigma);
    f = solve_lower(l, f.transpose()).transpose();
    // Phi: keep strict lower triangle, halve the diagonal, drop the rest.
    Matrix phi = f.triangularView<Eigen::StrictlyLower>();
    phi.diagonal() = 0.5 * f.diagonal();
    return l.m * phi;
}

}  // namespace cbo::linalg
