#pragma once

#include "cbo/linalg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cbo::bench {

using linalg::Vector;

struct OutOfDomain : std::invalid_argument {
    explicit OutOfDomain(const std::string& what) : std::invalid_argument(what) {}
};

//! A box-constrained synthetic objective under the maximisation convention:
//! evaluate() returns the negated textbook function value, so the task is to
//! find the maximum.  optimum_value / optimum_point describe that maximum.
struct SyntheticTask {
    std::string name;
    int dim = 0;
    Vector lower;
    Vector upper;
    double optimum_value = 0.0;
    Vector optimum_point;
};

//! Names accepted by make_task, in registry order.
const std::vector<std::string>& task_names();

//! Builds the named task at the requested dimension.  Throws
//! std::invalid_argument for unknown names, non-positive dimensions, or a
//! powell dimension that is not a positive multiple of 4.
SyntheticTask make_task(const std::string& name, int dim);

//! Negated benchmark value at a native-domain point.  Throws OutOfDomain when
//! x leaves the task box (beyond a 1e-12 absolute slack) and DimensionMismatch
//! on a size mismatch.
double evaluate(const SyntheticTask& task, const Vector& x_native);

//! Affine map from the native box onto [0,1]^d and its inverse.  Both throw
//! OutOfDomain outside their respective boxes.
Vector to_unit(const SyntheticTask& task, const Vector& x_native);
Vector from_unit(const SyntheticTask& task, const Vector& u);

//! evaluate(task, from_unit(task, u)).
double evaluate_unit(const SyntheticTask& task, const Vector& u);

//! One step of a normalised-regret trace.
struct RegretRow {
    int step = 0;
    double incumbent = 0.0;
    double regret = 0.0;
};

//! Normalised immediate regret r_t = |inc_t - f*| / |inc_0 - f*| for a
//! non-empty incumbent trace.  r_0 is exactly 1; when the initial gap is zero
//! every row gets regret 0.
std::vector<RegretRow> normalised_regret(const std::vector<double>& incumbents,
                                         const SyntheticTask& task);

}  // namespace cbo::bench
