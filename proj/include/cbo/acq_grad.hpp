#pragma once

#include "cbo/acquisition.hpp"

namespace cbo::acq {

//! Gradient of an acquisition estimate with respect to the flattened batch
//! vector (coordinate p*d + a), together with the estimate itself.
struct AcqGradient {
    Vector g;
    double value = 0.0;
};

//! Finite-sum gradient over the given draws (K x q), evaluated through the
//! chain rule wrapper'(v) * d(mu + Lz) with sub-gradient conventions
//! relu'(0) = 0, |.|'(0) = 0 and first-index argmax ties.
AcqGradient grad_fsm(Kind kind, const gp::GpModel& model, const Matrix& xq,
                     const Matrix& zrows, const AcquisitionSpec& spec);

//! Same chain rule applied to a posterior that already carries gradients;
//! lets callers reuse one posterior across evaluations.
AcqGradient grad_fsm_at(Kind kind, const gp::BatchPosterior& post, const Matrix& zrows,
                        const AcquisitionSpec& spec);

//! Fresh-draw gradient: identical chain rule over minibatch_size draws taken
//! from rng at each call.
AcqGradient grad_erm(Kind kind, const gp::GpModel& model, const Matrix& xq,
                     int minibatch_size, Rng& rng, const AcquisitionSpec& spec);

//! Auxiliary context of a compositional optimiser run: the tracked inner
//! expectation zeta and the second auxiliary iterate u.  In the standard form
//! zeta is q x M with the 1/M column scaling and pool points at the fixed
//! draw collection behind the columns; in the memory-efficient form zeta is
//! q x K of raw inner values and pool stays null.
struct CompGradientCtx {
    Matrix zeta;
    Vector u;
    const SamplePool* pool = nullptr;
    bool memory_efficient = false;
};

//! Compositional gradient estimate: Jacobian-transpose of a minibatch inner
//! estimate times the outer gradient evaluated at ctx.zeta (not at the exact
//! expectation).  Standard form samples k1 pool indices without replacement;
//! memory-efficient form uses k1 = K fresh draws paired with zeta's columns.
//! value reports the outer composition at ctx.zeta.
AcqGradient grad_comp(Kind kind, const gp::GpModel& model, const Matrix& xq,
                      const CompGradientCtx& ctx, int k1, Rng& rng,
                      const AcquisitionSpec& spec);

//! As grad_comp but with the posterior (with gradients) supplied by the caller.
AcqGradient grad_comp_at(Kind kind, const gp::BatchPosterior& post,
                         const CompGradientCtx& ctx, int k1, Rng& rng,
                         const AcquisitionSpec& spec);

}  // namespace cbo::acq
