#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cbo::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

//! True when a is square, finite and symmetric to within rel_tol relative to
//! its largest absolute entry.
bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

//! Lower-triangular Cholesky factor together with the diagonal inflation that
//! was needed to factorise.  Invariants: square, zero strict upper triangle,
//! strictly positive diagonal.
struct LowerTriangular {
    Matrix m;
    double jitter_used = 0.0;

    Eigen::Index dim() const { return m.rows(); }
};

//! Scale-aware default diagonal inflation: 1e-6 times the mean diagonal of a
//! (1e-6 when the diagonal is degenerate zero).
double default_jitter(const Matrix& a);

//! Factorises a (+ j*I) = L*L^T, trying j in {0, jitter, 10*jitter, ...,
//! 1e6*jitter} and keeping the smallest level that succeeds.  Throws
//! NotPositiveDefinite when the whole ladder fails.
LowerTriangular cholesky(const Matrix& a, double jitter);
LowerTriangular cholesky(const Matrix& a);  // jitter = default_jitter(a)

//! Solves L x = b by forward substitution (b may have several columns).
Matrix solve_lower(const LowerTriangular& l, const Matrix& b);

//! Solves L^T x = b by backward substitution.
Matrix solve_lower_transpose(const LowerTriangular& l, const Matrix& b);

//! Solves (L L^T) x = b, i.e. a full SPD solve through the factor.
Matrix solve_spd(const LowerTriangular& l, const Matrix& b);

//! log det(L L^T) = 2 * sum(log diag(L)).
double logdet_from_chol(const LowerTriangular& l);

//! Directional derivative of the Cholesky factor: given L with L L^T = S and a
//! symmetric perturbation dS, returns dL with dL L^T + L dL^T = dS.  Computed
//! as L * Phi(L^{-1} dS L^{-T}) where Phi keeps the strict lower triangle and
//! halves the diagonal.
Matrix chol_pushforward(const LowerTriangular& l, const Matrix& dsigma);

}  // namespace cbo::linalg
