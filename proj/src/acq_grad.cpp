#include "cbo/acq_grad.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cbo::acq {

namespace {

//! Accumulates the x-derivative of the inner value at batch row j for one
//! draw, scaled by outer_w.  The mean part collects per-row weights (wsum);
//! the correlated part collects weighted draws (S, one column per row) so the
//! Cholesky-derivative contraction can be done once per coordinate.
void accumulate_row(Kind kind, const gp::BatchPosterior& post, const Vector& z,
                    const Vector& lz, int j, double outer_w, const AcquisitionSpec& spec,
                    Vector& wsum, Matrix& s) {
    switch (kind) {
        case Kind::EI:
            if (post.mean(j) + lz(j) > spec.incumbent) {
                wsum(j) += outer_w;
                s.col(j) += outer_w * z;
            }
            break;
        case Kind::PI: {
            const double w = outer_w / spec.tau;
            wsum(j) += w;
            s.col(j) += w * z;
            break;
        }
        case Kind::SR:
            wsum(j) += outer_w;
            s.col(j) += outer_w * z;
            break;
        case Kind::UCB: {
            wsum(j) += outer_w;
            const double sign = lz(j) > 0.0 ? 1.0 : (lz(j) < 0.0 ? -1.0 : 0.0);
            if (sign != 0.0) s.col(j) += outer_w * ucb_weight(spec) * sign * z;
            break;
        }
    }
}

//! Contracts the accumulated weights with the posterior derivatives:
//! g(pa) = scale * (sum_j wsum_j dmean(j,pa) + sum_j dchol[pa](j,:) . s(:,j)).
Vector assemble(const gp::BatchPosterior& post, const Vector& wsum, const Matrix& s,
                double scale) {
    const int q = post.q();
    const int dq = static_cast<int>(post.dmean.cols());
    Vector g = Vector::Zero(dq);
    for (int pa = 0; pa < dq; ++pa) {
        double acc = 0.0;
        for (int j = 0; j < q; ++j) acc += wsum(j) * post.dmean(j, pa);
        const Matrix& dl = post.dchol[pa];
        for (int j = 0; j < q; ++j) acc += dl.row(j).dot(s.col(j));
        g(pa) = acc * scale;
    }
    return g;
}

void require_gradients(const gp::BatchPosterior& post) {
    if (!post.has_gradients)
        throw std::invalid_argument("acquisition gradient needs a posterior with gradients");
}

}  // namespace

AcqGradient grad_fsm_at(Kind kind, const gp::BatchPosterior& post, const Matrix& zrows,
                        const AcquisitionSpec& spec) {
    require_gradients(post);
    if (zrows.cols() != post.q())
        throw linalg::DimensionMismatch("grad_fsm: draw size does not match batch size");
    const int k = static_cast<int>(zrows.rows());
    if (k < 1) throw std::invalid_argument("grad_fsm: need at least one draw");
    const int q = post.q();
    Vector wsum = Vector::Zero(q);
    Matrix s = Matrix::Zero(q, q);
    double value_sum = 0.0;
    for (int m = 0; m < k; ++m) {
        const Vector z = zrows.row(m).transpose();
        const Vector lz = post.chol.m * z;
        const Vector v = inner_values_from_lz(kind, post, lz, spec);
        const int j = argmax_first(v);
        double outer_w = 1.0;
        if (kind == Kind::PI) {
            value_sum += sigmoid(v(j));
            outer_w = sigmoid_prime(v(j));
        } else {
            value_sum += v(j);
        }
        accumulate_row(kind, post, z, lz, j, outer_w, spec, wsum, s);
    }
    AcqGradient out;
    out.g = assemble(post, wsum, s, 1.0 / k);
    out.value = value_sum / k;
    return out;
}

AcqGradient grad_fsm(Kind kind, const gp::GpModel& model, const Matrix& xq,
                     const Matrix& zrows, const AcquisitionSpec& spec) {
    const gp::BatchPosterior post = gp::posterior(model, xq, true);
    return grad_fsm_at(kind, post, zrows, spec);
}

AcqGradient grad_erm(Kind kind, const gp::GpModel& model, const Matrix& xq,
                     int minibatch_size, Rng& rng, const AcquisitionSpec& spec) {
    if (minibatch_size < 1) throw std::invalid_argument("grad_erm: minibatch must be >= 1");
    const gp::BatchPosterior post = gp::posterior(model, xq, true);
    const Matrix z = normal_matrix(minibatch_size, post.q(), rng);
    return grad_fsm_at(kind, post, z, spec);
}

AcqGradient grad_comp_at(Kind kind, const gp::BatchPosterior& post,
                         const CompGradientCtx& ctx, int k1, Rng& rng,
                         const AcquisitionSpec& spec) {
    require_gradients(post);
    if (ctx.zeta.rows() != post.q())
        throw linalg::DimensionMismatch("grad_comp: zeta rows do not match batch size");
    const int q = post.q();
    Vector wsum = Vector::Zero(q);
    Matrix s = Matrix::Zero(q, q);
    AcqGradient out;

    if (ctx.memory_efficient) {
        const int k = static_cast<int>(ctx.zeta.cols());
        if (k1 != k)
            throw linalg::DimensionMismatch(
                "grad_comp: memory-efficient minibatch must equal zeta's column count");
        const SampleLease lease(static_cast<long>(k) * q);
        const Matrix zf = normal_matrix(k, q, rng);
        for (int i = 0; i < k; ++i) {
            const Vector z = zf.row(i).transpose();
            const Vector lz = post.chol.m * z;
            const int j = argmax_first(ctx.zeta.col(i));
            const double outer_w =
                (kind == Kind::PI ? sigmoid_prime(ctx.zeta(j, i)) : 1.0) / k;
            accumulate_row(kind, post, z, lz, j, outer_w, spec, wsum, s);
        }
        out.g = assemble(post, wsum, s, 1.0);
        out.value = outer_value_me(kind, ctx.zeta);
        return out;
    }

    if (ctx.pool == nullptr)
        throw std::invalid_argument("grad_comp: standard form needs the sample pool");
    const int m = static_cast<int>(ctx.zeta.cols());
    if (ctx.pool->size() != m)
        throw linalg::DimensionMismatch("grad_comp: pool size does not match zeta columns");
    if (k1 < 1 || k1 > m)
        throw std::invalid_argument("grad_comp: minibatch must be in [1, M]");
    // Full batch is deterministic: iterate in pool order and leave rng
    // untouched, so full-batch callers stay stream-compatible with code that
    // never sub-samples.
    std::vector<int> indices;
    if (k1 == m) {
        indices.resize(static_cast<std::size_t>(m));
        std::iota(indices.begin(), indices.end(), 0);
    } else {
        indices = sample_without_replacement(m, k1, rng);
    }
    for (const int omega : indices) {
        const Vector z = ctx.pool->z.row(omega).transpose();
        const Vector lz = post.chol.m * z;
        const int j = argmax_first(ctx.zeta.col(omega));
        const double outer_w =
            kind == Kind::PI ? sigmoid_prime(static_cast<double>(m) * ctx.zeta(j, omega))
                             : 1.0;
        accumulate_row(kind, post, z, lz, j, outer_w, spec, wsum, s);
    }
    out.g = assemble(post, wsum, s, 1.0 / k1);
    out.value = outer_value(kind, ctx.zeta);
    return out;
}

AcqGradient grad_comp(Kind kind, const gp::GpModel& model, const Matrix& xq,
                      const CompGradientCtx& ctx, int k1, Rng& rng,
                      const AcquisitionSpec& spec) {
    const gp::BatchPosterior post = gp::posterior(model, xq, true);
    return grad_comp_at(kind, post, ctx, k1, rng, spec);
}

}  // namespace cbo::acq
