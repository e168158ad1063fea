#pragma once

#include "cbo/opt_first.hpp"

namespace cbo::opt {

struct NonFiniteState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//! Compositional solvers.  All of them iterate three coupled updates:
//!   (1) x     <- x + eta_t * phi1(gradient history) / phi2   (clipped to the box)
//!   (2) u     <- x, or an extrapolation through the last two x iterates
//!   (3) zeta  <- weighted average (or plain replacement) of inner-map
//!                minibatch estimates evaluated at u
//! The gradient in (1) is the Jacobian-transpose-times-outer-gradient
//! estimate evaluated at (x, zeta), never at the exact inner expectation.
enum class CompAlgo { SCGA, ASCGA, CADAM, NASA, NESTED_MC };

constexpr int kCompAlgoCount = 5;

const char* comp_name(CompAlgo algo);
CompAlgo comp_from_name(const std::string& name);

//! Hyperparameters.  Defaults follow the centres of the published search
//! domains where those exist and the declared schedule shapes otherwise; all
//! of it is config, not tuned truth.
struct CompParams {
    double lr = 0.0316;    //!< step-size base; eta_t = lr * t^-lr_pow (SCGA/ASCGA)
    double lr_pow = 0.75;  //!< step-size decay exponent (SCGA/ASCGA)
    double beta = 0.316;   //!< averaging base weight; beta_t = beta * t^-beta_pow
    double beta_pow = 0.5; //!< averaging decay exponent (0 keeps beta constant)
    double lr_decay = 0.97;  //!< multiplicative step decay (NESTED_MC, mirroring Adam)
    double beta1 = 0.5245;   //!< first-moment weight (NESTED_MC)
    double beta2 = 0.9487;   //!< second-moment weight (NESTED_MC)
    double eps = 1e-8;
    // CADAM moment/step schedules, same shapes as the matching
    // non-compositional variant so the reformulation is the only difference:
    //   b1_t  = b1_scale * mu^t
    //   b2_t  = 1 - c_gamma * (1 - b1_t)^2 / t^p2
    //   eta_t = lr * sqrt(1 - b2_t) / ((1 - b1_t) * t^p_eta)
    double mu = 0.99;
    double b1_scale = 0.9;
    double c_gamma = 0.75;
    double p2 = 0.5;
    double p_eta = 0.26;
    // Single-timescale constants: tau_t = t^-nasa_gamma; the gradient tracker
    // mixes at rate nasa_a * tau, the step is nasa_beta * tau, and the inner
    // tracker mixes at rate nasa_b * tau.
    double nasa_a = 1.0;
    double nasa_b = 1.0;
    double nasa_beta = 1.0;
    double nasa_gamma = 0.75;

    static CompParams defaults_for(CompAlgo algo);
};

//! Mutable run state.  zeta is q x M (columns scaled by 1/M) in the standard
//! form and q x K (raw inner values) in the memory-efficient form.  pool is
//! the fixed draw collection behind the standard form's columns; it stays
//! null in the memory-efficient form.
struct CompState {
    Vector x;
    Vector u;
    Matrix zeta;
    Vector m1;
    Vector m2;
    long t = 0;
    double prod_b1 = 1.0;
    double prod_b2 = 1.0;
    CompParams params;
    bool memory_efficient = false;
    int q = 0;
    int d = 0;
    const acq::SamplePool* pool = nullptr;
};

//! Initial state at batch x0 (q x d): u = x, zeta = one inner-map minibatch
//! estimate over k2 pool indices (all of them when k2 >= M, consuming no
//! randomness) or, memory-efficiently, over k2 fresh draws from rng.
CompState comp_init(const Matrix& x0, CompAlgo algo, const CompParams& params, acq::Kind kind,
                    const gp::GpModel& model, const acq::AcquisitionSpec& spec, int k2,
                    const acq::SamplePool* pool, Rng& rng, bool memory_efficient);

//! One full compositional step: x update with a k1-minibatch gradient at
//! (x_t, zeta_t), u update, then the zeta refresh with a k2-minibatch inner
//! estimate at the new u.  Throws NonFiniteState if any iterate degenerates.
//! In the memory-efficient form both k1 and k2 must equal zeta's column
//! count.
void comp_step(CompState& state, CompAlgo algo, acq::Kind kind, const gp::GpModel& model,
               const acq::AcquisitionSpec& spec, int k1, int k2, Rng& rng);

// -- Building blocks (exposed so synthetic objectives can drive the exact
//    solver arithmetic without a surrogate model) --

//! Applies the algorithm's x update for one gradient estimate; advances t,
//! updates the moment accumulators and clips x to the unit box.
void comp_x_update(CompState& state, const Vector& grad, CompAlgo algo);

//! Applies the algorithm's u rule given the previous x iterate (the value x
//! held before the current comp_x_update); clips u to the unit box.
void comp_u_update(CompState& state, const Vector& x_prev, CompAlgo algo);

//! Mixing weight for this step's zeta refresh: the new estimate enters with
//! this weight and the old zeta keeps one minus it (1 = plain replacement).
double comp_zeta_weight(const CompState& state, CompAlgo algo);

//! Multi-restart driver mirroring the first-order runner: t_steps per
//! restart, selection by the outer-composition value on the full pool
//! (standard form) or a 2048-draw estimate shared across restarts
//! (memory-efficient form).
BatchResult run_comp(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                     const std::vector<Matrix>& restarts, CompAlgo algo,
                     const CompParams& params, int t_steps, int k1, int k2,
                     const acq::SamplePool* pool, Rng& rng, bool memory_efficient);

}  // namespace cbo::opt
