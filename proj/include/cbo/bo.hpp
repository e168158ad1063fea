#pragma once

#include "cbo/opt_comp.hpp"
#include "cbo/opt_second.hpp"
#include "cbo/opt_zero.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace cbo::bo {

using linalg::Matrix;
using linalg::Vector;

//! Solver families the optimiser registry can dispatch to.
enum class OptimiserFamily {
    FIRST_ORDER,    //!< stochastic-gradient ascent variants
    COMPOSITIONAL,  //!< nested-expectation solvers with a zeta tracker
    LBFGS,          //!< deterministic quasi-Newton on the full-pool estimate
    CLBFGS,         //!< quasi-Newton on the compositional estimate
    RANDOM_SEARCH,  //!< uniform batch sampling
    CMA_ES,         //!< evolution strategy
    DE,             //!< differential evolution
};

struct OptimiserInfo {
    std::string name;
    OptimiserFamily family = OptimiserFamily::FIRST_ORDER;
    std::vector<acq::Form> forms;  //!< supported estimate forms; front() is the default
};

//! Every dispatchable optimiser id, in a stable listing order.
const std::vector<OptimiserInfo>& optimiser_registry();

//! Registry lookup; throws std::invalid_argument for unknown ids.
const OptimiserInfo& optimiser_info(const std::string& name);

//! Inner-solver choice plus its hyperparameters.  Only the block matching the
//! id's family is read; the rest is ignored.
struct OptimiserConfig {
    std::string name = "adam";
    acq::Form form = acq::Form::FSM;
    opt::FirstOrderParams first{};
    opt::CompParams comp{};
    opt::LbfgsOptions lbfgs{};
    int cma_offspring = 32;
    double cma_step0 = 0.3;
    double de_f_scale = 0.7;
    double de_p_mutation = 0.9;
};

//! OptimiserConfig with the family's published hyperparameter defaults and
//! the id's default form (or the requested one, validated against the
//! registry).
OptimiserConfig make_optimiser(const std::string& name);
OptimiserConfig make_optimiser(const std::string& name, acq::Form form);

//! One outer-loop configuration.  The defaults follow the published setup:
//! batches of 16 over 32 acquisition steps, 64 inner steps on minibatches of
//! 128 from a pool of 512, restarts selected 1024 -> 32, and 3 uniform
//! initial points.
struct BoConfig {
    int q = 16;
    int n_steps = 32;
    acq::AcquisitionSpec acq{};  //!< template; form and incumbent are set per step
    OptimiserConfig optimiser{};
    int t_opt = 64;
    int minibatch = 128;
    int pool_size = 512;
    int n_raw = 1024;
    int n_restarts = 32;
    int n_init = 3;
    std::uint64_t seed = 0;
    bool top_k_restarts = false;  //!< plain best-k restart selection instead of Boltzmann
    gp::FitOptions fit{};
};

//! Throws std::invalid_argument when any field combination is unusable
//! (sizes, unknown optimiser id, unsupported form for the id's family).
void validate_config(const BoConfig& config, int dim);

//! Black-box objective over the unit box, maximised by the outer loop.
using BlackBox = std::function<double(const Vector& u)>;

//! Per-step trace entry.  Step 0 describes the initial design (batch is the
//! n_init x d design, acquisition fields stay NaN); later steps carry the
//! selected q x d batch.  regret is left NaN here and filled by the
//! orchestration layer that knows the task optimum.
struct BoStepRow {
    int step = 0;
    Matrix batch;
    Vector raw_values;
    double incumbent = -std::numeric_limits<double>::infinity();
    double acq_value = std::numeric_limits<double>::quiet_NaN();
    double raw_best_acq = std::numeric_limits<double>::quiet_NaN();
    int restart = -1;
    double regret = std::numeric_limits<double>::quiet_NaN();
    double fit_ms = 0.0;
    double opt_ms = 0.0;
    double fit_nlml = std::numeric_limits<double>::quiet_NaN();
};

struct BoTrace {
    std::vector<BoStepRow> rows;  //!< n_steps + 1 rows, step index 0..n_steps
    Matrix inputs;                //!< all queried unit-box points
    Vector outputs;               //!< their raw black-box values
};

//! Mutable outer-loop state: the growing dataset plus the best raw value.
struct BoState {
    BoConfig config;
    int dim = 0;
    Matrix inputs;
    Vector outputs;
    double incumbent = -std::numeric_limits<double>::infinity();
    int step = 0;

    int n() const { return static_cast<int>(inputs.rows()); }
};

BoState bo_init(const BoConfig& config, int dim);

//! Restart batches picked from a scan of uniformly random candidates, plus
//! the scan's argmax batch and its score for the never-worse-than-raw
//! guarantee.
struct RestartSelection {
    std::vector<Matrix> batches;
    Matrix best_raw;
    double best_raw_value = 0.0;
};

//! Draws k distinct indices from {0..n-1} favouring large values: weights are
//! exp of the standardised values and the argmax is always included.  When
//! the values are flat (zero spread) the draw is plain uniform without
//! replacement and nothing is forced; top_k instead returns the k largest
//! (ties by index).  k == n returns 0..n-1 without consuming randomness.
std::vector<int> boltzmann_select(const Vector& values, int k, Rng& rng, bool top_k = false);

//! Scores n_raw uniformly random q-batches with the full-pool estimate and
//! keeps n_restarts of them via boltzmann_select.  Batches are generated
//! point by point, coordinate by coordinate, so the draw order is part of
//! the contract.
RestartSelection select_restarts(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                                 const acq::SamplePool& pool, int q, int n_raw, int n_restarts,
                                 Rng& rng, bool top_k = false);

//! One full inner maximisation: runs the configured solver from every
//! selected restart (solver failures drop that restart), then re-scores all
//! surviving final batches and the best raw batch with the shared full-pool
//! estimate and returns the argmax.  restart is the winning start's index,
//! or -1 when the raw batch won.  Deterministic given step_seed.
opt::BatchResult maximise_acquisition(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                                      const acq::SamplePool& pool, const RestartSelection& sel,
                                      const BoConfig& config, std::uint64_t step_seed);

//! One outer iteration: refit the surrogate, draw the step's sample pool,
//! select restarts, maximise the acquisition, query the black box at the q
//! new points and grow the dataset.  Consumes exactly one value from rng
//! (the step seed); everything inside runs on streams derived from it.
BoStepRow bo_step(BoState& state, const BlackBox& black_box, Rng& rng);

//! Full outer loop: n_init uniform initial points, then n_steps bo_steps.
//! A pure function of (config, dim, black box).
BoTrace run_bo(const BoConfig& config, int dim, const BlackBox& black_box);

}  // namespace cbo::bo
