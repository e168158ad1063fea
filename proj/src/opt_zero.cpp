#include "cbo/opt_zero.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace cbo::opt {

namespace {

Vector clip_unit_box(Vector x) { return x.cwiseMax(0.0).cwiseMin(1.0); }

//! Mean norm of a standard normal vector, E||N(0, I_n)||, via log-gamma.
double expected_normal_norm(int n) {
    return std::sqrt(2.0) * std::exp(std::lgamma(0.5 * (n + 1)) - std::lgamma(0.5 * n));
}

struct CovFactors {
    Matrix sqrt;      // Sigma^(1/2)
    Matrix inv_sqrt;  // Sigma^(-1/2)
};

//! Symmetric square root with eigenvalues clamped into [1e-12, 1e8]; the
//! clamp doubles as the re-jitter for factorisation-defeating updates and
//! keeps the state finite on adversarial objectives.
CovFactors cov_factors(const Matrix& cov) {
    const Matrix sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    Vector lam = eig.eigenvalues().cwiseMax(1e-12).cwiseMin(1e8);
    const Matrix& v = eig.eigenvectors();
    CovFactors f;
    f.sqrt = v * lam.cwiseSqrt().asDiagonal() * v.transpose();
    f.inv_sqrt = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    return f;
}

}  // namespace

ZeroResult random_search(const Objective& objective, int dim, long budget, Rng& rng) {
    if (budget < 1) throw std::invalid_argument("random_search: budget must be >= 1");
    if (dim < 1) throw std::invalid_argument("random_search: dimension must be >= 1");
    ZeroResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for (long e = 0; e < budget; ++e) {
        const Vector x = uniform_vector(dim, rng);
        const double v = objective(x);
        if (v > best.value) {
            best.value = v;
            best.x = x;
        }
    }
    return best;
}

CmaState cma_init(const Vector& mean0, double step0, const CmaParams& params) {
    if (step0 <= 0.0) throw std::invalid_argument("cma_init: step size must be positive");
    CmaState st;
    st.mean = clip_unit_box(mean0);
    st.step = step0;
    st.cov = Matrix::Identity(mean0.size(), mean0.size());
    st.path_sigma = Vector::Zero(mean0.size());
    st.path_cov = Vector::Zero(mean0.size());
    st.params = params;
    st.best_value = -std::numeric_limits<double>::infinity();
    return st;
}

void cma_step(CmaState& state, const Objective& objective, int offspring, Rng& rng) {
    if (offspring <= 2) throw std::invalid_argument("cma_step: need more than two offspring");
    const int n = static_cast<int>(state.mean.size());
    const CmaParams& p = state.params;
    const CovFactors fac = cov_factors(state.cov);

    Matrix xs(offspring, n);
    Vector fs(offspring);
    for (int l = 0; l < offspring; ++l) {
        const Vector z = normal_vector(n, rng);
        const Vector x = clip_unit_box(state.mean + state.step * (fac.sqrt * z));
        xs.row(l) = x.transpose();
        fs(l) = objective(x);
        if (fs(l) > state.best_value) {
            state.best_value = fs(l);
            state.best_x = x;
        }
    }

    // Rank descending by objective; stable so equal values keep sample order.
    std::vector<int> order(static_cast<std::size_t>(offspring));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&fs](int a, int b) { return fs(a) > fs(b); });

    const int kappa = p.kappa > 0 ? std::min(p.kappa, offspring) : std::max(1, offspring / 2);
    Vector w(kappa);
    for (int i = 0; i < kappa; ++i) w(i) = static_cast<double>(kappa - i);
    w /= w.sum();
    const double kappa_w = 1.0 / w.squaredNorm();

    const Vector mean_old = state.mean;
    Vector shift = Vector::Zero(n);
    for (int i = 0; i < kappa; ++i)
        shift += w(i) * (xs.row(order[static_cast<std::size_t>(i)]).transpose() - mean_old);
    state.mean = clip_unit_box(mean_old + p.eta_mu * shift);

    // Cumulative step-size adaptation.  The smoothing weight must satisfy
    // 0 < c_sigma <= 1 for the complementary variance term to exist, so the
    // dimension-scaled convention enters as 3/n, clamped at one.
    const double c_sigma = std::min(1.0, 3.0 / n);
    const double d_sigma = 1.0 + c_sigma;
    const Vector delta = (state.mean - mean_old) / state.step;
    state.path_sigma = (1.0 - c_sigma) * state.path_sigma +
                       std::sqrt(1.0 - (1.0 - c_sigma) * (1.0 - c_sigma)) *
                           std::sqrt(kappa_w) * (fac.inv_sqrt * delta);
    const double ratio = state.path_sigma.norm() / expected_normal_norm(n);
    const double log_change =
        std::clamp(c_sigma / d_sigma * (ratio - 1.0), -5.0, 5.0);
    const double step_old = state.step;
    state.step = std::clamp(step_old * std::exp(log_change), 1e-16, 1e8);

    // Anisotropic path, gated by the step path's length.
    const double c_cov_path = (4.0 + kappa_w / n) / (n + 4.0 + 2.0 * kappa_w / n);
    const double gate =
        state.path_sigma.norm() <= p.eta_indicator * std::sqrt(static_cast<double>(n)) ? 1.0
                                                                                       : 0.0;
    state.path_cov = (1.0 - c_cov_path) * state.path_cov +
                     gate * std::sqrt(1.0 - (1.0 - c_cov_path) * (1.0 - c_cov_path)) *
                         std::sqrt(kappa_w) * ((state.mean - mean_old) / step_old);

    const double c1 = p.c1_override >= 0.0
                          ? p.c1_override
                          : 2.0 / ((n + 1.3) * (n + 1.3) + kappa_w);
    const double eta_cov =
        p.eta_cov_override >= 0.0
            ? p.eta_cov_override
            : std::min(1.0 - c1, 2.0 * (kappa_w - 2.0 + 1.0 / kappa_w) /
                                     ((n + 2.0) * (n + 2.0) + kappa_w));
    const double discount = 1.0 - c1 - eta_cov * w.squaredNorm();

    Matrix rank_k = Matrix::Zero(n, n);
    for (int i = 0; i < kappa; ++i) {
        const Vector y =
            (xs.row(order[static_cast<std::size_t>(i)]).transpose() - mean_old) / step_old;
        rank_k += w(i) * y * y.transpose();
    }
    state.cov = discount * state.cov + c1 * state.path_cov * state.path_cov.transpose() +
                eta_cov * rank_k;
    state.cov = 0.5 * (state.cov + state.cov.transpose());
    state.generation += 1;

    if (!state.mean.allFinite() || !std::isfinite(state.step) || !state.cov.allFinite() ||
        !state.path_sigma.allFinite() || !state.path_cov.allFinite())
        throw std::runtime_error("cma_step: non-finite state");
}

DePopulation de_init(const Matrix& members, const Objective& objective, double f_scale,
                     double p_mutation) {
    if (members.rows() < 4) throw std::invalid_argument("de_init: need at least four members");
    if (f_scale < 0.0 || f_scale > 2.0)
        throw std::invalid_argument("de_init: mutation scale must lie in [0, 2]");
    DePopulation pop;
    pop.members = members;
    for (int j = 0; j < members.rows(); ++j)
        pop.members.row(j) = clip_unit_box(members.row(j).transpose()).transpose();
    pop.fitness.resize(members.rows());
    pop.f_scale = f_scale;
    pop.p_mutation = p_mutation;
    pop.best_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < members.rows(); ++j) {
        pop.fitness(j) = objective(pop.members.row(j).transpose());
        if (pop.fitness(j) > pop.best_value) {
            pop.best_value = pop.fitness(j);
            pop.best_x = pop.members.row(j).transpose();
        }
    }
    return pop;
}

void de_step(DePopulation& pop, const Objective& objective, Rng& rng) {
    const int count = static_cast<int>(pop.members.rows());
    const int dim = static_cast<int>(pop.members.cols());
    const Matrix old_members = pop.members;  // candidates draw from the old generation

    for (int j = 0; j < count; ++j) {
        const auto abc = sample_without_replacement(count, 3, rng);
        const Vector a = old_members.row(abc[0]).transpose();
        const Vector b = old_members.row(abc[1]).transpose();
        const Vector c = old_members.row(abc[2]).transpose();
        const int forced = std::min(dim - 1, static_cast<int>(uniform01(rng) * dim));
        Vector cand = old_members.row(j).transpose();
        for (int i = 0; i < dim; ++i) {
            if (i == forced || uniform01(rng) < pop.p_mutation)
                cand(i) = a(i) + pop.f_scale * (b(i) - c(i));
        }
        cand = clip_unit_box(cand);
        const double f = objective(cand);
        if (f > pop.fitness(j)) {
            pop.members.row(j) = cand.transpose();
            pop.fitness(j) = f;
        }
        if (f > pop.best_value) {
            pop.best_value = f;
            pop.best_x = cand;
        }
    }
}

double zero_order_comp_eval(acq::Kind kind, const gp::GpModel& model, const Matrix& xq, int k,
                            const acq::SamplePool& pool, Rng& rng,
                            const acq::AcquisitionSpec& spec) {
    if (k < 1) throw std::invalid_argument("zero_order_comp_eval: minibatch must be >= 1");
    const gp::BatchPosterior post = gp::posterior(model, xq, false);
    const int m = pool.size();
    const int keff = std::min(k, m);
    Matrix zeta = Matrix::Zero(post.q(), m);
    if (keff >= m) {
        for (int omega = 0; omega < m; ++omega)
            zeta.col(omega) =
                acq::inner_matrix_stochastic(kind, post, omega, pool, spec).v / keff;
    } else {
        for (const int omega : sample_without_replacement(m, keff, rng))
            zeta.col(omega) =
                acq::inner_matrix_stochastic(kind, post, omega, pool, spec).v / keff;
    }
    return acq::outer_value(kind, zeta);
}

}  // namespace cbo::opt
