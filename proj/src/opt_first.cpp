#include "cbo/opt_first.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

namespace cbo::opt {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clip_unit_box(Vector& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

//! Exponential step-size decay applies to the algorithms whose published
//! tuning included a schedule; ADAGRAD and ADAMOS carry their own rules and
//! RPROP's per-coordinate sizes already adapt multiplicatively.
bool uses_exponential_decay(FirstOrderAlgo algo) {
    switch (algo) {
        case FirstOrderAlgo::SGA:
        case FirstOrderAlgo::RMSPROP:
        case FirstOrderAlgo::ADAM:
        case FirstOrderAlgo::ADADELTA:
        case FirstOrderAlgo::ADAMW:
            return true;
        default:
            return false;
    }
}

}  // namespace

const char* first_order_name(FirstOrderAlgo algo) {
    switch (algo) {
        case FirstOrderAlgo::SGA: return "sga";
        case FirstOrderAlgo::ADAGRAD: return "adagrad";
        case FirstOrderAlgo::RMSPROP: return "rmsprop";
        case FirstOrderAlgo::ADAM: return "adam";
        case FirstOrderAlgo::ADADELTA: return "adadelta";
        case FirstOrderAlgo::RPROP: return "rprop";
        case FirstOrderAlgo::ADAMW: return "adamw";
        case FirstOrderAlgo::ADAMOS: return "adamos";
    }
    return "?";
}

FirstOrderAlgo first_order_from_name(const std::string& name) {
    for (int i = 0; i < kFirstOrderAlgoCount; ++i) {
        const auto algo = static_cast<FirstOrderAlgo>(i);
        if (name == first_order_name(algo)) return algo;
    }
    throw std::invalid_argument("unknown first-order algorithm: " + name);
}

FirstOrderParams FirstOrderParams::defaults_for(FirstOrderAlgo algo) {
    FirstOrderParams p;
    switch (algo) {
        case FirstOrderAlgo::ADADELTA:
            p.gamma = 0.95;  // the 0..0.999 log range has no centre; canonical value
            break;
        case FirstOrderAlgo::ADAMOS:
            p.lr = 3.162e-3;  // centre of the wider 1e-5..1 log range
            break;
        default:
            break;
    }
    return p;
}

FirstOrderState first_order_init(const Vector& x0, FirstOrderAlgo algo,
                                 const FirstOrderParams& params) {
    FirstOrderState st;
    st.x = x0;
    clip_unit_box(st.x);
    const Eigen::Index n = x0.size();
    st.m1 = Vector::Zero(n);
    st.m2 = Vector::Zero(n);
    st.aux = Vector::Zero(n);
    st.params = params;
    if (algo == FirstOrderAlgo::RPROP) st.m1 = Vector::Constant(n, params.lr);
    return st;
}

void general_step(FirstOrderState& state, const Vector& grad, FirstOrderAlgo algo) {
    if (!grad.allFinite()) throw NonFiniteGradient("general_step: non-finite gradient");
    if (grad.size() != state.x.size())
        throw linalg::DimensionMismatch("general_step: gradient size mismatch");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const FirstOrderParams& p = state.params;
    const double eta =
        uses_exponential_decay(algo) ? p.lr * std::pow(p.lr_decay, t - 1.0) : p.lr;

    switch (algo) {
        case FirstOrderAlgo::SGA: {
            if (p.momentum != 0.0) {
                if (state.t == 1)
                    state.m1 = grad;  // first accumulation enters undamped
                else
                    state.m1 = p.momentum * state.m1 + (1.0 - p.dampening) * grad;
                if (p.nesterov)
                    state.x += eta * (grad + p.momentum * state.m1);
                else
                    state.x += eta * state.m1;
            } else {
                state.x += eta * grad;
            }
            break;
        }
        case FirstOrderAlgo::ADAGRAD: {
            state.m2.array() += grad.array().square();
            state.x.array() += eta * grad.array() / (state.m2.array() + p.eps).sqrt();
            break;
        }
        case FirstOrderAlgo::RMSPROP: {
            state.m2 = p.gamma * state.m2 + (1.0 - p.gamma) * grad.cwiseProduct(grad);
            state.x.array() += eta * grad.array() / (state.m2.array() + p.eps).sqrt();
            break;
        }
        case FirstOrderAlgo::ADAM:
        case FirstOrderAlgo::ADAMW: {
            state.m1 = p.beta1 * state.m1 + (1.0 - p.beta1) * grad;
            state.m2 = p.beta2 * state.m2 + (1.0 - p.beta2) * grad.cwiseProduct(grad);
            state.prod_b1 *= p.beta1;
            state.prod_b2 *= p.beta2;
            const Vector mhat = state.m1 / (1.0 - state.prod_b1);
            const Vector vhat = state.m2 / (1.0 - state.prod_b2);
            if (algo == FirstOrderAlgo::ADAMW) state.x *= 1.0 - p.weight_decay * eta;
            state.x.array() += eta * mhat.array() / (vhat.array().sqrt() + p.eps);
            break;
        }
        case FirstOrderAlgo::ADADELTA: {
            // m1 keeps the decayed sum of past squared-step ratios; aux holds
            // the summand made by the previous step, folded in one step late so
            // the running numerator never sees the current gradient.
            state.m1 = p.gamma * state.m1 + state.aux;
            state.m2 = p.gamma * state.m2 + (1.0 - p.gamma) * grad.cwiseProduct(grad);
            const auto num = (state.m1.array() + p.eps / (p.lr * p.lr)).sqrt();
            const auto den = (state.m2.array() + p.eps).sqrt();
            state.x.array() += eta * grad.array() * num / den;
            state.aux = ((1.0 - p.gamma) * grad.array().square() /
                         (state.m2.array() + p.eps))
                            .matrix();
            break;
        }
        case FirstOrderAlgo::RPROP: {
            // m1: per-coordinate step sizes; aux: previous effective gradient.
            // On a sign flip the size shrinks and the coordinate skips one
            // move (its gradient is treated as zero for this step).
            for (Eigen::Index i = 0; i < state.x.size(); ++i) {
                double g = grad(i);
                const double s = g * state.aux(i);
                if (s > 0.0)
                    state.m1(i) = std::min(state.m1(i) * p.grow, p.step_max);
                else if (s < 0.0) {
                    state.m1(i) = std::max(state.m1(i) * p.shrink, p.step_min);
                    g = 0.0;
                }
                state.x(i) += state.m1(i) * sign_of(g);
                state.aux(i) = g;
            }
            break;
        }
        case FirstOrderAlgo::ADAMOS: {
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
    }
    clip_unit_box(state.x);
    if (!state.x.allFinite()) throw NonFiniteGradient("general_step: non-finite iterate");
}

BatchResult run_first_order(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                            const std::vector<Matrix>& restarts, FirstOrderAlgo algo,
                            const FirstOrderParams& params, int t_steps, int minibatch,
                            const acq::SamplePool* pool, Rng& rng) {
    if (restarts.empty()) throw std::invalid_argument("run_first_order: no restart batches");
    if (minibatch < 1) throw std::invalid_argument("run_first_order: minibatch must be >= 1");
    const bool finite_sum = spec.form == acq::Form::FSM;
    if (!finite_sum && spec.form != acq::Form::ERM)
        throw std::invalid_argument("run_first_order: form must be the fresh-sample or finite-sum one");
    if (finite_sum && pool == nullptr)
        throw std::invalid_argument("run_first_order: finite-sum form needs a sample pool");

    const int q = static_cast<int>(restarts.front().rows());
    const int d = static_cast<int>(restarts.front().cols());

    // Per-restart seeds come off the master stream first so the outcome does
    // not depend on restart processing order.
    std::vector<std::uint64_t> seeds(restarts.size());
    for (auto& s : seeds) s = rng();
    const std::uint64_t eval_seed = rng();

    std::optional<acq::SamplePool> eval_pool;
    if (!finite_sum) eval_pool.emplace(acq::SamplePool::draw(2048, q, eval_seed));

    BatchResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts.size(); ++r) {
        if (restarts[r].rows() != q || restarts[r].cols() != d)
            throw linalg::DimensionMismatch("run_first_order: restart batch shape mismatch");
        Rng local = make_rng(seeds[r]);
        FirstOrderState st = first_order_init(acq::flatten(restarts[r]), algo, params);
        for (int step = 0; step < t_steps; ++step) {
            const Matrix xq = acq::unflatten(st.x, q, d);
            acq::AcqGradient gr;
            if (finite_sum) {
                const int m = pool->size();
                if (minibatch >= m) {
                    gr = acq::grad_fsm(spec.kind, model, xq, pool->z, spec);
                } else {
                    const auto idx = sample_without_replacement(m, minibatch, local);
                    Matrix zrows(minibatch, q);
                    for (int i = 0; i < minibatch; ++i) zrows.row(i) = pool->z.row(idx[static_cast<std::size_t>(i)]);
                    gr = acq::grad_fsm(spec.kind, model, xq, zrows, spec);
                }
            } else {
                gr = acq::grad_erm(spec.kind, model, xq, minibatch, local, spec);
            }
            general_step(st, gr.g, algo);
        }
        const Matrix batch = acq::unflatten(st.x, q, d);
        const gp::BatchPosterior post = gp::posterior(model, batch, false);
        const double value = finite_sum ? acq::acq_fsm(spec.kind, post, *pool, spec)
                                        : acq::acq_fsm(spec.kind, post, *eval_pool, spec);
        if (value > best.value) {
            best.value = value;
            best.batch = batch;
            best.restart = static_cast<int>(r);
        }
    }
    return best;
}

}  // namespace cbo::opt
