#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "cbo/acquisition.hpp"
#include "cbo/gp.hpp"
#include "cbo/linalg.hpp"
#include "cbo/rng.hpp"

namespace cbo::opt {

using linalg::Matrix;
using linalg::Vector;

//! A maximisation objective over a flattened batch in the unit box.
using Objective = std::function<double(const Vector&)>;

struct ZeroResult {
    Vector x;
    double value = 0.0;
};

//! Best of `budget` uniform draws from the unit box.
ZeroResult random_search(const Objective& objective, int dim, long budget, Rng& rng);

//! Tunable constants of the evolution strategy.  Fields left at their
//! sentinel values are derived from the problem size and offspring count
//! with the usual textbook formulas.
struct CmaParams {
    double eta_mu = 1.0;         // mean learning rate
    double eta_indicator = 1.5;  // threshold scale of the path-length gate
    int kappa = 0;               // parents kept per generation; 0 -> offspring/2
    double c1_override = -1.0;     // rank-one covariance rate; <0 -> derived
    double eta_cov_override = -1.0;  // rank-kappa covariance rate; <0 -> derived
};

struct CmaState {
    Vector mean;
    double step = 0.3;
    Matrix cov;
    Vector path_sigma;
    Vector path_cov;
    long generation = 0;
    Vector best_x;
    double best_value = 0.0;
    CmaParams params;
};

CmaState cma_init(const Vector& mean0, double step0, const CmaParams& params = CmaParams{});

//! One generation: sample, clip, rank, and update mean/step/covariance.
void cma_step(CmaState& state, const Objective& objective, int offspring, Rng& rng);

struct DePopulation {
    Matrix members;      // P x dq, rows inside the unit box
    Vector fitness;      // objective value per member
    double f_scale = 0.7;
    double p_mutation = 0.9;
    Vector best_x;       // best member ever constructed
    double best_value = 0.0;
};

DePopulation de_init(const Matrix& members, const Objective& objective, double f_scale = 0.7,
                     double p_mutation = 0.9);

//! One mutation/selection sweep over the whole population.
void de_step(DePopulation& pop, const Objective& objective, Rng& rng);

//! Value of the compositional objective at a minibatch estimate of the inner
//! expectation: sampled pool columns carry v_omega / K, the rest stay zero.
double zero_order_comp_eval(acq::Kind kind, const gp::GpModel& model, const Matrix& xq, int k,
                            const acq::SamplePool& pool, Rng& rng,
                            const acq::AcquisitionSpec& spec);

}  // namespace cbo::opt
