#include "cbo/opt_second.hpp"

#include "cbo/acq_grad.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cbo::opt {

bool LbfgsHistory::push(const Vector& s, const Vector& h) {
    const double hs = h.dot(s);
    if (!(hs > curvature_min_) || !s.allFinite() || !h.allFinite()) return false;
    CurvaturePair pair;
    pair.s = s;
    pair.h = h;
    pair.rho = 1.0 / hs;
    pairs_.push_back(std::move(pair));
    while (static_cast<int>(pairs_.size()) > max_pairs_) pairs_.pop_front();
    return true;
}

Vector lbfgs_direction(const LbfgsHistory& history, const Vector& grad) {
    const auto& pairs = history.pairs();
    Vector q = grad;
    std::vector<double> alpha(pairs.size(), 0.0);
    for (std::size_t k = pairs.size(); k-- > 0;) {
        const auto& p = pairs[k];
        alpha[k] = p.rho * p.s.dot(q);
        q -= alpha[k] * p.h;
    }
    if (!pairs.empty()) {
        const auto& newest = pairs.back();
        q *= newest.s.dot(newest.h) / newest.h.squaredNorm();
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& p = pairs[k];
        const double beta = p.rho * p.h.dot(q);
        q += (alpha[k] - beta) * p.s;
    }
    return q;
}

namespace {

Vector clip_to_box(const Vector& x, const Vector& lower, const Vector& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

// Ascent components blocked by an active bound do not count towards
// stationarity: zero the gradient where the box already pins the iterate.
double projected_grad_norm(const Vector& x, const Vector& grad, const Vector& lower,
                           const Vector& upper) {
    double norm = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double g = grad(i);
        if ((x(i) <= lower(i) && g < 0.0) || (x(i) >= upper(i) && g > 0.0)) continue;
        norm = std::max(norm, std::abs(g));
    }
    return norm;
}

}  // namespace

LbfgsResult lbfgs_run(const ValueGrad& objective, Vector x0, const Vector& lower,
                      const Vector& upper, const LbfgsOptions& opts) {
    if (x0.size() != lower.size() || x0.size() != upper.size())
        throw linalg::DimensionMismatch("lbfgs_run: box dimension mismatch");

    Vector x = clip_to_box(x0, lower, upper);
    Vector grad(x.size());
    double value = objective(x, grad);

    LbfgsResult best;
    best.x = x;
    best.value = value;

    LbfgsHistory history(opts.history, opts.curvature_min);

    for (int step = 0; step < opts.max_steps; ++step) {
        if (!grad.allFinite()) break;
        if (projected_grad_norm(x, grad, lower, upper) < opts.grad_tol) break;
        Vector dir = lbfgs_direction(history, grad);
        if (dir.dot(grad) <= 0.0) dir = grad;  // defensive: keep an ascent direction

        // Armijo backtracking on the projected step.  When the quasi-Newton
        // direction cannot make progress, drop the (possibly stale) curvature
        // history and retry once along the raw gradient before giving up.
        bool accepted = false;
        Vector x_next, grad_next(x.size());
        double value_next = 0.0;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double eta = 1.0;
            for (int halving = 0; halving <= opts.max_halvings; ++halving) {
                x_next = clip_to_box(x + eta * dir, lower, upper);
                const Vector actual_step = x_next - x;
                if (actual_step.lpNorm<Eigen::Infinity>() < opts.step_tol) {
                    eta *= 0.5;
                    continue;
                }
                value_next = objective(x_next, grad_next);
                if (std::isfinite(value_next) &&
                    value_next >= value + opts.armijo_c * grad.dot(actual_step)) {
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!accepted) {
                if (history.pairs().empty()) break;
                history.clear();
                dir = grad;
            }
        }
        if (!accepted) {
            best.line_search_failed = true;
            break;
        }

        history.push(x_next - x, grad - grad_next);
        x = x_next;
        grad = grad_next;
        value = value_next;
        ++best.steps;
        if (value > best.value) {
            best.value = value;
            best.x = x;
        }
    }
    return best;
}

LbfgsResult clbfgs_run(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                       const Matrix& x0, int t_steps, int k1, int k2,
                       const acq::SamplePool& pool, Rng& rng, const LbfgsOptions& opts) {
    if (k1 < 1 || k2 < 1)
        throw std::invalid_argument("clbfgs_run: minibatch sizes must be >= 1");
    const int q = static_cast<int>(x0.rows());
    const int d = static_cast<int>(x0.cols());
    if (pool.q() != q)
        throw linalg::DimensionMismatch("clbfgs_run: pool batch size mismatch");

    const int m = pool.size();
    const int keff2 = std::min(k2, m);
    // Freeze both minibatch streams for the whole run: the refresh columns as
    // an index list, the gradient minibatch as a fixed seed replayed at every
    // evaluation.  Full batches walk the pool in order and need no draws.
    std::vector<int> refresh_idx;
    if (keff2 >= m) {
        refresh_idx.resize(static_cast<std::size_t>(m));
        std::iota(refresh_idx.begin(), refresh_idx.end(), 0);
    } else {
        refresh_idx = sample_without_replacement(m, keff2, rng);
    }
    const std::uint64_t grad_seed = rng();

    const ValueGrad objective = [&](const Vector& x, Vector& grad) -> double {
        const Matrix xq = acq::unflatten(x, q, d);
        const gp::BatchPosterior post = gp::posterior(model, xq, true);
        acq::CompGradientCtx ctx;
        ctx.zeta = Matrix::Zero(q, m);
        for (const int omega : refresh_idx)
            ctx.zeta.col(omega) =
                acq::inner_matrix_stochastic(spec.kind, post, omega, pool, spec).v / keff2;
        ctx.u = x;
        ctx.pool = &pool;
        Rng replay = make_rng(grad_seed);
        const acq::AcqGradient gr =
            acq::grad_comp_at(spec.kind, post, ctx, std::min(k1, m), replay, spec);
        grad = gr.g;
        return gr.value;
    };

    LbfgsOptions run_opts = opts;
    run_opts.max_steps = t_steps;
    const int dq = q * d;
    return lbfgs_run(objective, acq::flatten(x0), Vector::Zero(dq), Vector::Ones(dq),
                     run_opts);
}

}  // namespace cbo::opt
