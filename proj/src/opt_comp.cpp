#include "cbo/opt_comp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>

namespace cbo::opt {

namespace {

void clip_unit_box(Vector& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

void require_finite(const CompState& state, const char* where) {
    if (!state.x.allFinite() || !state.u.allFinite() || !state.zeta.allFinite())
        throw NonFiniteState(std::string("comp_step: non-finite state after ") + where);
}

//! Indices of the pool columns entering one inner-map minibatch estimate.
//! A full batch keeps pool order and consumes no randomness, so full-batch
//! refreshes are deterministic.
std::vector<int> refresh_indices(int m, int k2, Rng& rng) {
    if (k2 >= m) {
        std::vector<int> idx(static_cast<std::size_t>(m));
        std::iota(idx.begin(), idx.end(), 0);
        return idx;
    }
    return sample_without_replacement(m, k2, rng);
}

//! Mixes one k2-minibatch inner estimate at u into zeta with weight w.
void refresh_zeta(CompState& state, acq::Kind kind, const gp::GpModel& model,
                  const acq::AcquisitionSpec& spec, int k2, double w, Rng& rng) {
    const Matrix uq = acq::unflatten(state.u, state.q, state.d);
    const gp::BatchPosterior post = gp::posterior(model, uq, false);
    if (state.memory_efficient) {
        if (k2 != static_cast<int>(state.zeta.cols()))
            throw linalg::DimensionMismatch(
                "comp_step: memory-efficient refresh minibatch must equal zeta's column count");
        const acq::MeDraws md = acq::inner_matrix_me(kind, post, k2, rng, spec);
        state.zeta = (1.0 - w) * state.zeta + w * md.values;
        return;
    }
    const int m = state.pool->size();
    const int keff = std::min(k2, m);
    const auto idx = refresh_indices(m, k2, rng);
    state.zeta *= 1.0 - w;
    for (const int omega : idx) {
        const auto col = acq::inner_matrix_stochastic(kind, post, omega, *state.pool, spec);
        state.zeta.col(omega) += (w / keff) * col.v;
    }
}

}  // namespace

const char* comp_name(CompAlgo algo) {
    switch (algo) {
        case CompAlgo::SCGA: return "scga";
        case CompAlgo::ASCGA: return "ascga";
        case CompAlgo::CADAM: return "cadam";
        case CompAlgo::NASA: return "nasa";
        case CompAlgo::NESTED_MC: return "nested-mc";
    }
    return "?";
}

CompAlgo comp_from_name(const std::string& name) {
    for (int i = 0; i < kCompAlgoCount; ++i) {
        const auto algo = static_cast<CompAlgo>(i);
        if (name == comp_name(algo)) return algo;
    }
    throw std::invalid_argument("unknown compositional algorithm: " + name);
}

CompParams CompParams::defaults_for(CompAlgo algo) {
    CompParams p;
    switch (algo) {
        case CompAlgo::CADAM:
            p.lr = 3.162e-3;   // centre of the 1e-5..1 log range
            p.beta = 0.0316;   // centre of the 0.001..0.999 log range
            p.beta_pow = 0.0;  // constant averaging/extrapolation weight
            break;
        case CompAlgo::NESTED_MC:
            p.lr = 1.732e-3;  // mirrors the plain Adam configuration
            break;
        default:
            break;
    }
    return p;
}

CompState comp_init(const Matrix& x0, CompAlgo algo, const CompParams& params, acq::Kind kind,
                    const gp::GpModel& model, const acq::AcquisitionSpec& spec, int k2,
                    const acq::SamplePool* pool, Rng& rng, bool memory_efficient) {
    (void)algo;
    if (!memory_efficient && pool == nullptr)
        throw std::invalid_argument("comp_init: standard form needs the sample pool");
    if (k2 < 1) throw std::invalid_argument("comp_init: refresh minibatch must be >= 1");
    CompState st;
    st.q = static_cast<int>(x0.rows());
    st.d = static_cast<int>(x0.cols());
    st.x = acq::flatten(x0);
    clip_unit_box(st.x);
    st.u = st.x;
    st.m1 = Vector::Zero(st.x.size());
    st.m2 = Vector::Zero(st.x.size());
    st.params = params;
    st.memory_efficient = memory_efficient;
    st.pool = memory_efficient ? nullptr : pool;

    const Matrix xq = acq::unflatten(st.x, st.q, st.d);
    const gp::BatchPosterior post = gp::posterior(model, xq, false);
    if (memory_efficient) {
        const acq::MeDraws md = acq::inner_matrix_me(kind, post, k2, rng, spec);
        st.zeta = md.values;
    } else {
        const int m = pool->size();
        const int keff = std::min(k2, m);
        st.zeta = Matrix::Zero(st.q, m);
        for (const int omega : refresh_indices(m, k2, rng)) {
            const auto col = acq::inner_matrix_stochastic(kind, post, omega, *pool, spec);
            st.zeta.col(omega) = col.v / keff;
        }
    }
    require_finite(st, "init");
    return st;
}

void comp_x_update(CompState& state, const Vector& grad, CompAlgo algo) {
    if (!grad.allFinite()) throw NonFiniteState("comp_x_update: non-finite gradient");
    if (grad.size() != state.x.size())
        throw linalg::DimensionMismatch("comp_x_update: gradient size mismatch");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const CompParams& p = state.params;
    switch (algo) {
        case CompAlgo::SCGA:
        case CompAlgo::ASCGA: {
            state.x += p.lr * std::pow(t, -p.lr_pow) * grad;
            break;
        }
        case CompAlgo::CADAM: {
            const double b1 = p.b1_scale * std::pow(p.mu, t);
            const double b2 = 1.0 - p.c_gamma * (1.0 - b1) * (1.0 - b1) / std::pow(t, p.p2);
            state.m1 = b1 * state.m1 + (1.0 - b1) * grad;
            state.m2 = b2 * state.m2 + (1.0 - b2) * grad.cwiseProduct(grad);
            state.prod_b1 *= b1;
            state.prod_b2 *= b2;
            const Vector mhat = state.m1 / (1.0 - state.prod_b1);
            const Vector vhat = state.m2 / (1.0 - state.prod_b2);
            const double eta_t =
                p.lr * std::sqrt(1.0 - b2) / ((1.0 - b1) * std::pow(t, p.p_eta));
            state.x.array() += eta_t * mhat.array() / (vhat.array().sqrt() + p.eps);
            break;
        }
        case CompAlgo::NASA: {
            const double tau = std::pow(t, -p.nasa_gamma);
            const double aw = std::min(1.0, p.nasa_a * tau);
            state.m1 = (1.0 - aw) * state.m1 + aw * grad;
            state.x += p.nasa_beta * tau * state.m1;
            break;
        }
        case CompAlgo::NESTED_MC: {
            state.m1 = p.beta1 * state.m1 + (1.0 - p.beta1) * grad;
            state.m2 = p.beta2 * state.m2 + (1.0 - p.beta2) * grad.cwiseProduct(grad);
            state.prod_b1 *= p.beta1;
            state.prod_b2 *= p.beta2;
            const Vector mhat = state.m1 / (1.0 - state.prod_b1);
            const Vector vhat = state.m2 / (1.0 - state.prod_b2);
            const double eta = p.lr * std::pow(p.lr_decay, t - 1.0);
            state.x.array() += eta * mhat.array() / (vhat.array().sqrt() + p.eps);
            break;
        }
    }
    clip_unit_box(state.x);
    if (!state.x.allFinite()) throw NonFiniteState("comp_x_update: non-finite iterate");
}

void comp_u_update(CompState& state, const Vector& x_prev, CompAlgo algo) {
    switch (algo) {
        case CompAlgo::SCGA:
        case CompAlgo::NASA:
        case CompAlgo::NESTED_MC:
            state.u = state.x;
            break;
        case CompAlgo::ASCGA:
        case CompAlgo::CADAM: {
            const CompParams& p = state.params;
            const double t = static_cast<double>(state.t);
            const double beta_t =
                std::min(1.0, p.beta * std::pow(t, -p.beta_pow));
            const double binv = 1.0 / beta_t;
            state.u = (1.0 - binv) * x_prev + binv * state.x;
            clip_unit_box(state.u);
            break;
        }
    }
}

double comp_zeta_weight(const CompState& state, CompAlgo algo) {
    const CompParams& p = state.params;
    const double t = static_cast<double>(std::max<long>(state.t, 1));
    switch (algo) {
        case CompAlgo::NESTED_MC:
            return 1.0;
        case CompAlgo::NASA:
            return std::min(1.0, p.nasa_b * std::pow(t, -p.nasa_gamma));
        default:
            return std::min(1.0, p.beta * std::pow(t, -p.beta_pow));
    }
}

void comp_step(CompState& state, CompAlgo algo, acq::Kind kind, const gp::GpModel& model,
               const acq::AcquisitionSpec& spec, int k1, int k2, Rng& rng) {
    const Matrix xq = acq::unflatten(state.x, state.q, state.d);
    const gp::BatchPosterior post = gp::posterior(model, xq, true);
    acq::CompGradientCtx ctx;
    ctx.zeta = state.zeta;
    ctx.u = state.u;
    ctx.pool = state.pool;
    ctx.memory_efficient = state.memory_efficient;
    const acq::AcqGradient gr = acq::grad_comp_at(kind, post, ctx, k1, rng, spec);

    const Vector x_prev = state.x;
    comp_x_update(state, gr.g, algo);
    comp_u_update(state, x_prev, algo);
    refresh_zeta(state, kind, model, spec, k2, comp_zeta_weight(state, algo), rng);
    require_finite(state, "refresh");
}

BatchResult run_comp(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                     const std::vector<Matrix>& restarts, CompAlgo algo,
                     const CompParams& params, int t_steps, int k1, int k2,
                     const acq::SamplePool* pool, Rng& rng, bool memory_efficient) {
    if (restarts.empty()) throw std::invalid_argument("run_comp: no restart batches");
    if (!memory_efficient && pool == nullptr)
        throw std::invalid_argument("run_comp: standard form needs a sample pool");

    const int q = static_cast<int>(restarts.front().rows());
    const int d = static_cast<int>(restarts.front().cols());

    std::vector<std::uint64_t> seeds(restarts.size());
    for (auto& s : seeds) s = rng();
    const std::uint64_t eval_seed = rng();

    std::optional<acq::SamplePool> eval_pool;
    if (memory_efficient) eval_pool.emplace(acq::SamplePool::draw(2048, q, eval_seed));

    BatchResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts.size(); ++r) {
        if (restarts[r].rows() != q || restarts[r].cols() != d)
            throw linalg::DimensionMismatch("run_comp: restart batch shape mismatch");
        Rng local = make_rng(seeds[r]);
        CompState st = comp_init(restarts[r], algo, params, spec.kind, model, spec, k2, pool,
                                 local, memory_efficient);
        for (int step = 0; step < t_steps; ++step)
            comp_step(st, algo, spec.kind, model, spec, k1, k2, local);
        const Matrix batch = acq::unflatten(st.x, q, d);
        const gp::BatchPosterior post = gp::posterior(model, batch, false);
        const double value = memory_efficient
                                 ? acq::acq_fsm(spec.kind, post, *eval_pool, spec)
                                 : acq::acq_comp(spec.kind, post, *pool, spec);
        if (value > best.value) {
            best.value = value;
            best.batch = batch;
            best.restart = static_cast<int>(r);
        }
    }
    return best;
}

}  // namespace cbo::opt
