#pragma once

#include "cbo/bench.hpp"
#include "cbo/bo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cbo::runner {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

//! One experiment tuple: a task paired with an acquisition and a fully
//! resolved solver configuration.  bo.seed is overwritten per run with a
//! value derived from (tuple_id, seed) only, so records do not depend on
//! execution order.
struct TupleConfig {
    std::string tuple_id;  //!< unique; derived from the fields when empty
    std::string task;
    int dim = 2;
    bo::BoConfig bo{};
};

//! Canonical id "task-dim-kind-form-optimiser", lower-case.
std::string derive_tuple_id(const TupleConfig& tuple);

struct ExperimentConfig {
    std::vector<TupleConfig> tuples;
    std::vector<std::uint64_t> seeds;
    int jobs = 1;
};

//! Validates resolvability of every id, distinct seeds, unique tuple ids and
//! the engine config of every tuple; fills empty tuple ids.  Throws
//! std::invalid_argument.
void validate_experiment(ExperimentConfig& config);

//! Parses the JSON experiment document.  Unknown keys throw, so typos fail
//! fast.  Top level: "tuples" (array), "seeds" (array), "jobs"; per tuple:
//! task, dim, acq, form, optimizer plus engine-field and hyperparameter
//! overrides.
ExperimentConfig parse_experiment(const std::string& json_text);

struct StepRecord {
    int step = 0;
    double incumbent = 0.0;
    double regret = 0.0;
    double opt_ms = 0.0;
    double fit_ms = 0.0;
};

struct RunRecord {
    std::string tuple_id;
    std::string task;
    int dim = 0;
    std::string acq;
    std::string form;
    std::string optimiser;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;  //!< n_steps + 1 rows when ok
    std::string status = "ok";

    bool ok() const { return status == "ok"; }
};

//! Executes one tuple at one seed against its registered task; errors are
//! captured in status, never thrown.
RunRecord run_one(const TupleConfig& tuple, std::uint64_t seed);

//! As run_one but with an injected objective (for tests); the task still
//! provides the optimum for the regret metric.
RunRecord run_one_with(const TupleConfig& tuple, std::uint64_t seed,
                       const bench::SyntheticTask& task, const bo::BlackBox& black_box);

//! All (tuple x seed) runs, parallel over `jobs` workers.  Record order is
//! tuple-major then seed, independent of the parallelism degree.
std::vector<RunRecord> run_sweep(const ExperimentConfig& config);

//! Aggregates for one (optimiser, form) group.
struct OptimiserSummary {
    std::string optimiser;
    std::string form;
    int runs = 0;
    int failed = 0;
    double mean_final_regret = 0.0;
    double median_final_regret = 0.0;
    //! Share (percent) of comparison cells (task, dim, acq, seed) this group
    //! won by lowest final regret; ties split evenly.
    double best_share = 0.0;
    std::vector<double> mean_regret_curve;
};

struct Summary {
    int total_runs = 0;
    int failed_runs = 0;
    std::vector<OptimiserSummary> optimisers;  //!< sorted by (optimiser, form)
};

Summary summarise(const std::vector<RunRecord>& records);

//! CSV persistence.  Fixed header
//! tuple_id,task,dim,acq,form,optimizer,seed,step,incumbent,regret,opt_ms,fit_ms,status
//! with one row per step (a single sentinel row with step -1 for failed
//! runs); doubles are written round-trippably.
void write_csv(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> read_csv(const std::string& path);

std::string summary_to_json(const Summary& summary);
void write_summary_json(const Summary& summary, const std::string& path);

}  // namespace cbo::runner
