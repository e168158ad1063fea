#include "cbo/gp.hpp"

#include "cbo/opt_second.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cbo::gp {

namespace {

constexpr double sqrt5 = 2.2360679774997896964091736687747;
constexpr double log_2pi = 1.8378770664093454835606594728112;

}  // namespace

KernelParams KernelParams::defaults(int dim) {
    KernelParams p;
    p.log_lengthscales = Vector::Constant(dim, std::log(0.5));
    p.log_signal_variance = 0.0;
    p.log_noise_variance = std::log(1e-4);
    return p;
}

Vector KernelParams::pack() const {
    Vector v(log_lengthscales.size() + 2);
    v.head(log_lengthscales.size()) = log_lengthscales;
    v(log_lengthscales.size()) = log_signal_variance;
    v(log_lengthscales.size() + 1) = log_noise_variance;
    return v;
}

KernelParams KernelParams::unpack(const Vector& packed, int dim) {
    if (packed.size() != dim + 2)
        throw linalg::DimensionMismatch("KernelParams::unpack: bad packed size");
    KernelParams p;
    p.log_lengthscales = packed.head(dim);
    p.log_signal_variance = packed(dim);
    p.log_noise_variance = packed(dim + 1);
    return p;
}

Vector ParamBounds::lower(int dim) const {
    Vector v(dim + 2);
    v.head(dim).setConstant(log_length_lo);
    v(dim) = log_signal_lo;
    v(dim + 1) = log_noise_lo;
    return v;
}

Vector ParamBounds::upper(int dim) const {
    Vector v(dim + 2);
    v.head(dim).setConstant(log_length_hi);
    v(dim) = log_signal_hi;
    v(dim + 1) = log_noise_hi;
    return v;
}

Dataset Dataset::standardise(const Matrix& inputs, const Vector& raw_outputs) {
    if (inputs.rows() != raw_outputs.size())
        throw linalg::DimensionMismatch("Dataset::standardise: inputs/outputs mismatch");
    Dataset d;
    d.inputs = inputs;
    if (raw_outputs.size() == 0) {
        d.outputs = raw_outputs;
        return d;
    }
    d.raw_mean = raw_outputs.mean();
    const double var = (raw_outputs.array() - d.raw_mean).square().mean();
    d.raw_std = var > 1e-24 ? std::sqrt(var) : 1.0;
    d.outputs = (raw_outputs.array() - d.raw_mean) / d.raw_std;
    return d;
}

double matern52(const VecRef& x1, const VecRef& x2, const KernelParams& params) {
    const Vector ls = params.lengthscales();
    const double r2 = ((x1 - x2).array() / ls.array()).square().sum();
    const double r = std::sqrt(r2);
    return params.signal_variance() * (1.0 + sqrt5 * r + (5.0 / 3.0) * r2) * std::exp(-sqrt5 * r);
}

Vector matern52_grad_x1(const VecRef& x1, const VecRef& x2, const KernelParams& params) {
    const Vector ls = params.lengthscales();
    const Eigen::ArrayXd diff = (x1 - x2).array();
    const double r = std::sqrt((diff / ls.array()).square().sum());
    // dk/dr = -(5/3) s^2 r (1 + sqrt5 r) e^{-sqrt5 r}; the 1/r of dr/dx cancels,
    // so the expression below is smooth at r = 0.
    const double coeff =
        -(5.0 / 3.0) * params.signal_variance() * (1.0 + sqrt5 * r) * std::exp(-sqrt5 * r);
    return coeff * (diff / ls.array().square()).matrix();
}

namespace {

Matrix kernel_matrix(const Matrix& x, const KernelParams& params) {
    const int n = static_cast<int>(x.rows());
    Matrix k(n, n);
    for (int i = 0; i < n; ++i) {
        k(i, i) = params.signal_variance();
        for (int j = 0; j < i; ++j) {
            const double v = matern52(x.row(i).transpose(), x.row(j).transpose(), params);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

}  // namespace

double nlml(const Dataset& data, const KernelParams& params) {
    const int n = data.n();
    if (n == 0) throw std::invalid_argument("nlml: empty dataset");
    Matrix c = kernel_matrix(data.inputs, params);
    c.diagonal().array() += params.noise_variance();
    auto l = linalg::cholesky(c, linalg::default_jitter(c));
    const Vector alpha = linalg::solve_spd(l, data.outputs);
    return 0.5 * data.outputs.dot(alpha) + 0.5 * linalg::logdet_from_chol(l) +
           0.5 * n * log_2pi;
}

Vector nlml_grad(const Dataset& data, const KernelParams& params) {
    const int n = data.n();
    const int d = data.dim();
    if (n == 0) throw std::invalid_argument("nlml_grad: empty dataset");

    const Vector ls = params.lengthscales();
    const double s2 = params.signal_variance();

    Matrix k(n, n);       // noise-free kernel
    Matrix e(n, n);       // (5/3) s^2 (1 + sqrt5 r) e^{-sqrt5 r}
    for (int i = 0; i < n; ++i) {
        k(i, i) = s2;
        e(i, i) = (5.0 / 3.0) * s2;
        for (int j = 0; j < i; ++j) {
            const double r = std::sqrt(
                ((data.inputs.row(i) - data.inputs.row(j)).transpose().array() / ls.array())
                    .square()
                    .sum());
            const double ex = std::exp(-sqrt5 * r);
            k(i, j) = k(j, i) = s2 * (1.0 + sqrt5 * r + (5.0 / 3.0) * r * r) * ex;
            e(i, j) = e(j, i) = (5.0 / 3.0) * s2 * (1.0 + sqrt5 * r) * ex;
        }
    }

    Matrix c = k;
    c.diagonal().array() += params.noise_variance();
    auto l = linalg::cholesky(c, linalg::default_jitter(c));
    const Vector alpha = linalg::solve_spd(l, data.outputs);
    // W = C^{-1} - alpha alpha^T; dNLML/dtheta = 0.5 tr(W dC/dtheta)
    Matrix w = linalg::solve_spd(l, Matrix::Identity(n, n));
    w.noalias() -= alpha * alpha.transpose();

    Vector grad(d + 2);
    for (int a = 0; a < d; ++a) {
        // dC/d log l_a = E .* sqdiff_a / l_a^2
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double diff = data.inputs(i, a) - data.inputs(j, a);
                acc += w(i, j) * e(i, j) * diff * diff;
            }
        grad(a) = 0.5 * acc / (ls(a) * ls(a));
    }
    grad(d) = 0.5 * (w.array() * k.array()).sum();  // dC/d log s2 = K
    grad(d + 1) = 0.5 * params.noise_variance() * w.trace();
    return grad;
}

GpModel make_model(Dataset data, KernelParams params) {
    GpModel m;
    m.data = std::move(data);
    m.params = std::move(params);
    const int n = m.data.n();
    if (n > 0) {
        Matrix c = kernel_matrix(m.data.inputs, m.params);
        c.diagonal().array() += m.params.noise_variance();
        m.chol_c = linalg::cholesky(c, linalg::default_jitter(c));
        m.alpha = linalg::solve_spd(m.chol_c, m.data.outputs);
        m.incumbent = m.data.outputs.maxCoeff();
    }
    return m;
}

GpModel fit(const Dataset& data, const KernelParams& init, const FitOptions& opts, Rng& rng) {
    if (data.n() == 0) throw std::invalid_argument("fit: empty dataset");
    const int d = data.dim();
    const Vector lo = opts.bounds.lower(d);
    const Vector hi = opts.bounds.upper(d);

    // Maximise log marginal likelihood plus the lengthscale log-prior.  An
    // unfactorisable covariance along the search path is reported as -inf so
    // the line search backs off instead of aborting the start.
    auto objective = [&](const Vector& packed, Vector& grad) {
        const KernelParams p = KernelParams::unpack(packed, d);
        try {
            const Vector ng = nlml_grad(data, p);
            const Vector ell = p.lengthscales();
            grad = -ng;
            double value = -nlml(data, p);
            for (int a = 0; a < d; ++a) {
                value +=
                    (opts.prior.shape - 1.0) * p.log_lengthscales(a) - opts.prior.rate * ell(a);
                grad(a) += (opts.prior.shape - 1.0) - opts.prior.rate * ell(a);
            }
            return value;
        } catch (const linalg::NotPositiveDefinite&) {
            grad = Vector::Zero(d + 2);
            return -std::numeric_limits<double>::infinity();
        }
    };

    opt::LbfgsOptions lopts;
    lopts.max_steps = opts.max_steps;

    Vector best_packed;
    double best_value = -std::numeric_limits<double>::infinity();
    const Vector init_packed = init.pack().cwiseMax(lo).cwiseMin(hi);
    for (int start = 0; start < std::max(1, opts.restarts); ++start) {
        Vector x0 = init_packed;
        if (start > 0)
            x0 = (init_packed + opts.perturb_sd * cbo::normal_vector(d + 2, rng))
                     .cwiseMax(lo)
                     .cwiseMin(hi);
        try {
            auto res = opt::lbfgs_run(objective, x0, lo, hi, lopts);
            if (res.value > best_value) {
                best_value = res.value;
                best_packed = res.x;
            }
        } catch (const linalg::NotPositiveDefinite&) {
            // skip starts whose trajectory hits an unfactorisable C
        }
    }
    if (best_packed.size() == 0) best_packed = init_packed;

    // Guarantee the fit never worsens the marginal likelihood of the start.
    KernelParams fitted = KernelParams::unpack(best_packed, d);
    if (nlml(data, fitted) > nlml(data, KernelParams::unpack(init_packed, d)))
        fitted = KernelParams::unpack(init_packed, d);
    return make_model(data, fitted);
}

BatchPosterior posterior(const GpModel& model, const Matrix& xq, bool with_gradients) {
    const int q = static_cast<int>(xq.rows());
    const int d = static_cast<int>(xq.cols());
    const int n = model.data.n();
    if (n > 0 && d != model.data.dim())
        throw linalg::DimensionMismatch("posterior: query dimension mismatch");
    if (!xq.allFinite()) throw std::invalid_argument("posterior: non-finite query");

    BatchPosterior post;

    Matrix kss(q, q);
    for (int i = 0; i < q; ++i) {
        kss(i, i) = model.params.signal_variance();
        for (int j = 0; j < i; ++j) {
            const double v = matern52(xq.row(i).transpose(), xq.row(j).transpose(), model.params);
            kss(i, j) = v;
            kss(j, i) = v;
        }
    }

    Matrix kstar;   // n x q
    Matrix a_mat;   // C^{-1} K*  (n x q)
    if (n > 0) {
        kstar.resize(n, q);
        for (int l = 0; l < n; ++l)
            for (int j = 0; j < q; ++j)
                kstar(l, j) =
                    matern52(model.data.inputs.row(l).transpose(), xq.row(j).transpose(), model.params);
        a_mat = linalg::solve_spd(model.chol_c, kstar);
        post.mean = kstar.transpose() * model.alpha;
        post.cov = kss - kstar.transpose() * a_mat;
        const Matrix sym = 0.5 * (post.cov + post.cov.transpose());
        post.cov = sym;  // remove roundoff asymmetry from the cancellation-prone product
    } else {
        post.mean = Vector::Zero(q);
        post.cov = kss;
    }
    // Degenerate batches (duplicated points, near-noiseless interpolation) push
    // the covariance towards singular; anchor the ladder to the signal scale.
    const double jitter_base =
        std::max(linalg::default_jitter(post.cov), 1e-12 * model.params.signal_variance());
    post.chol = linalg::cholesky(post.cov, jitter_base);

    if (!with_gradients) return post;
    post.has_gradients = true;
    post.dmean = Matrix::Zero(q, q * d);
    post.dchol.assign(static_cast<std::size_t>(q) * d, Matrix());

    for (int p = 0; p < q; ++p) {
        // gp[l, a] = d k(x_p, X_l) / d x_{p,a}
        Matrix gp(n, d);
        for (int l = 0; l < n; ++l)
            gp.row(l) =
                matern52_grad_x1(xq.row(p).transpose(), model.data.inputs.row(l).transpose(),
                                 model.params)
                    .transpose();
        // gq[j, a] = d k(x_p, x_j) / d x_{p,a} for batch mates j
        Matrix gq = Matrix::Zero(q, d);
        for (int j = 0; j < q; ++j) {
            if (j == p) continue;  // k(x, x) is constant
            gq.row(j) =
                matern52_grad_x1(xq.row(p).transpose(), xq.row(j).transpose(), model.params)
                    .transpose();
        }
        Matrix cross;  // d x q: row a = g_{p,a}^T A
        if (n > 0) {
            post.dmean.block(p, p * d, 1, d) = (gp.transpose() * model.alpha).transpose();
            cross = gp.transpose() * a_mat;
        } else {
            cross = Matrix::Zero(d, q);
        }
        for (int a = 0; a < d; ++a) {
            Matrix dsigma = Matrix::Zero(q, q);
            for (int j = 0; j < q; ++j) {
                double v = gq(j, a) - cross(a, j);
                if (j == p) v = n > 0 ? -2.0 * cross(a, p) : 0.0;
                dsigma(p, j) = v;
                dsigma(j, p) = v;
            }
            post.dchol[static_cast<std::size_t>(p) * d + a] =
                linalg::chol_pushforward(post.chol, dsigma);
        }
    }
    return post;
}

}  // namespace cbo::gp
