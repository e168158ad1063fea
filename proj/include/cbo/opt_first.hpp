#pragma once

#include "cbo/acq_grad.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cbo::opt {

using linalg::Matrix;
using linalg::Vector;

struct NonFiniteGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//! First-order ascent algorithms sharing one update skeleton
//!   x <- delta_t * x + eta_t * phi1 / phi2     (elementwise ratio)
//! followed by clipping to the unit box.  phi1 aggregates past gradients,
//! phi2 normalises by past gradient magnitudes; delta_t is 1 for everything
//! except the decoupled weight decay of ADAMW.
enum class FirstOrderAlgo {
    SGA,
    ADAGRAD,
    RMSPROP,
    ADAM,
    ADADELTA,
    RPROP,
    ADAMW,
    ADAMOS,
};

constexpr int kFirstOrderAlgoCount = 8;

const char* first_order_name(FirstOrderAlgo algo);
FirstOrderAlgo first_order_from_name(const std::string& name);

//! Hyperparameters for the whole family.  Defaults are the centres of the
//! published search domains (geometric centre for log-uniform ranges,
//! arithmetic centre for uniform ones); defaults_for() applies the few
//! per-algorithm exceptions.  All values are plain config, not tuned truths.
struct FirstOrderParams {
    double lr = 1.732e-3;      //!< base step size (centre of 1e-5..0.3 log range)
    double lr_decay = 0.97;    //!< per-step multiplicative decay for scheduled algorithms
    double beta1 = 0.5245;     //!< first-moment weight (ADAM/ADAMW)
    double beta2 = 0.9487;     //!< second-moment weight (ADAM/ADAMW)
    double gamma = 0.5;        //!< squared-gradient forgetting factor (RMSPROP/ADADELTA)
    double momentum = 0.5;     //!< heavy-ball weight (SGA)
    double dampening = 0.5;    //!< damping on new gradients entering the momentum buffer (SGA)
    bool nesterov = false;     //!< lookahead momentum flag (SGA)
    double weight_decay = 3.162e-5;  //!< decoupled decay rate lambda (ADAMW)
    double eps = 1e-8;         //!< denominator guard
    double shrink = 0.5;       //!< RPROP step-size factor after a gradient sign flip
    double grow = 2.0;         //!< RPROP step-size factor while the sign persists
    double step_min = 1e-6;    //!< RPROP per-coordinate step floor
    double step_max = 50.0;    //!< RPROP per-coordinate step ceiling
    // ADAMOS moment/step schedules (shapes shared with the compositional
    // Adam variant so the two are comparable):
    //   b1_t  = b1_scale * mu^t
    //   b2_t  = 1 - c_gamma * (1 - b1_t)^2 / t^p2
    //   eta_t = lr * sqrt(1 - b2_t) / ((1 - b1_t) * t^p_eta)
    double mu = 0.99;
    double b1_scale = 0.9;
    double c_gamma = 0.75;
    double p2 = 0.5;
    double p_eta = 0.26;

    static FirstOrderParams defaults_for(FirstOrderAlgo algo);
};

//! Mutable per-run state.  m1/m2 are the phi accumulators; aux is the third
//! per-coordinate slot some algorithms need (RPROP: previous gradient,
//! ADADELTA: the most recent squared-step summand).  prod_b1/prod_b2 carry
//! running products of the moment weights for bias correction.
struct FirstOrderState {
    Vector x;
    Vector m1;
    Vector m2;
    Vector aux;
    long t = 0;
    double prod_b1 = 1.0;
    double prod_b2 = 1.0;
    FirstOrderParams params;
};

FirstOrderState first_order_init(const Vector& x0, FirstOrderAlgo algo,
                                 const FirstOrderParams& params);

//! One generalized ascent step; mutates state in place and clips x to [0,1].
//! Throws NonFiniteGradient if grad contains NaN or infinity.
void general_step(FirstOrderState& state, const Vector& grad, FirstOrderAlgo algo);

//! Outcome of a multi-restart acquisition maximisation.
struct BatchResult {
    Matrix batch;        //!< winning batch, q x d
    double value = 0.0;  //!< acquisition estimate used for the selection
    int restart = -1;    //!< index of the winning start
};

//! Runs t_steps from every restart batch and returns the best final batch.
//!
//! Finite-sum form: per-step gradients over `minibatch` pool rows sampled
//! without replacement (the whole pool, rng untouched, when minibatch >= M);
//! selection by the full-pool estimate.  Fresh-sample form: `minibatch` new
//! draws per step; selection by a 2048-draw estimate shared across restarts.
//! Per-restart seeds are pre-drawn from rng, so results do not depend on the
//! order in which restarts are processed.
BatchResult run_first_order(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                            const std::vector<Matrix>& restarts, FirstOrderAlgo algo,
                            const FirstOrderParams& params, int t_steps, int minibatch,
                            const acq::SamplePool* pool, Rng& rng);

}  // namespace cbo::opt
