#pragma once

#include "cbo/linalg.hpp"
#include "cbo/rng.hpp"

#include <vector>

namespace cbo::gp {

using linalg::LowerTriangular;
using linalg::Matrix;
using linalg::Vector;

//! Vector view that also binds matrix rows (non-unit stride).
using VecRef = Eigen::Ref<const Vector, 0, Eigen::InnerStride<>>;

//! Kernel hyperparameters stored in log space so box-constrained fitting is
//! unconstrained in sign.  Packed order: per-dimension log lengthscales, then
//! log signal variance, then log noise variance.
struct KernelParams {
    Vector log_lengthscales;
    double log_signal_variance = 0.0;
    double log_noise_variance = 0.0;

    static KernelParams defaults(int dim);

    Vector lengthscales() const { return log_lengthscales.array().exp(); }
    double signal_variance() const { return std::exp(log_signal_variance); }
    double noise_variance() const { return std::exp(log_noise_variance); }

    Vector pack() const;
    static KernelParams unpack(const Vector& packed, int dim);
};

//! Gamma prior over lengthscales used during fitting (shape 3, rate 6 puts
//! its mass near 0.5, the natural scale of a unit input box).
struct GammaPrior {
    double shape = 3.0;
    double rate = 6.0;
};

//! Box for the packed log parameters.
struct ParamBounds {
    double log_length_lo = std::log(1e-3), log_length_hi = std::log(1e3);
    double log_signal_lo = std::log(1e-3), log_signal_hi = std::log(1e3);
    double log_noise_lo = std::log(1e-8), log_noise_hi = 0.0;

    Vector lower(int dim) const;
    Vector upper(int dim) const;
};

//! Observations with outputs standardised to zero mean / unit spread, so the
//! zero-mean surrogate is adequate and acquisition scales are comparable
//! across tasks.  Inputs live in the unit box.
struct Dataset {
    Matrix inputs;   // n x d
    Vector outputs;  // standardised
    double raw_mean = 0.0;
    double raw_std = 1.0;

    int n() const { return static_cast<int>(inputs.rows()); }
    int dim() const { return static_cast<int>(inputs.cols()); }

    static Dataset standardise(const Matrix& inputs, const Vector& raw_outputs);
    double destandardise(double standardised) const { return raw_mean + raw_std * standardised; }
    double standardise_value(double raw) const { return (raw - raw_mean) / raw_std; }
};

//! Matern 5/2 with per-dimension lengthscales.
double matern52(const VecRef& x1, const VecRef& x2, const KernelParams& params);

//! d k / d x1; smooth everywhere including x1 == x2.
Vector matern52_grad_x1(const VecRef& x1, const VecRef& x2, const KernelParams& params);

//! Negative log marginal likelihood of the standardised outputs.
double nlml(const Dataset& data, const KernelParams& params);

//! Gradient of nlml with respect to the packed log parameters.
Vector nlml_grad(const Dataset& data, const KernelParams& params);

//! Surrogate with its training factorisation cached.  n == 0 is allowed and
//! yields the prior.
struct GpModel {
    Dataset data;
    KernelParams params;
    LowerTriangular chol_c;  // factor of K + noise * I
    Vector alpha;            // (K + noise * I)^{-1} y
    double incumbent = 0.0;  // best standardised output (0 when empty)
};

GpModel make_model(Dataset data, KernelParams params);

struct FitOptions {
    int restarts = 5;    // starts: the given init plus (restarts - 1) perturbed copies
    int max_steps = 160;  // L-BFGS budget per start (stops early once stationary)
    double perturb_sd = 0.5;
    GammaPrior prior{};
    ParamBounds bounds{};
};

//! Type-II MAP fit: minimises nlml minus the lengthscale log-prior with
//! box-constrained L-BFGS, multi-started.  The result never has higher nlml
//! than the initial parameters.
GpModel fit(const Dataset& data, const KernelParams& init, const FitOptions& opts, Rng& rng);

//! Joint posterior over a batch of q query points, optionally with the
//! derivatives needed to differentiate reparameterised samples: dmean is
//! q x (q*d) and dchol holds one q x q matrix per batch coordinate.
//! Coordinate index convention: pa = p * d + a for batch point p, input dim a.
struct BatchPosterior {
    Vector mean;  // q
    Matrix cov;   // q x q
    LowerTriangular chol;
    bool has_gradients = false;
    Matrix dmean;               // q x (q*d)
    std::vector<Matrix> dchol;  // q*d entries, q x q each

    int q() const { return static_cast<int>(mean.size()); }
};

BatchPosterior posterior(const GpModel& model, const Matrix& xq, bool with_gradients);

}  // namespace cbo::gp
