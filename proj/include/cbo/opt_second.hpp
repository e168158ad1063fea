#pragma once

#include "cbo/acquisition.hpp"
#include "cbo/gp.hpp"
#include "cbo/linalg.hpp"
#include "cbo/rng.hpp"

#include <deque>
#include <functional>

namespace cbo::opt {

using linalg::Matrix;
using linalg::Vector;

//! One quasi-Newton curvature pair.  Orientation is for maximisation: s is the
//! iterate difference and h the *negated* gradient difference (previous minus
//! next), so h' s > 0 on concave stretches and the implied inverse-curvature
//! model stays positive definite.
struct CurvaturePair {
    Vector s;
    Vector h;
    double rho = 0.0;  // 1 / (h' s)
};

//! Bounded history of accepted pairs, oldest first.  Pairs failing the
//! curvature gate h' s > curvature_min are silently dropped.
class LbfgsHistory {
  public:
    explicit LbfgsHistory(int max_pairs = 10, double curvature_min = 1e-10)
        : max_pairs_(max_pairs), curvature_min_(curvature_min) {}

    bool push(const Vector& s, const Vector& h);
    const std::deque<CurvaturePair>& pairs() const { return pairs_; }
    void clear() { pairs_.clear(); }

  private:
    std::deque<CurvaturePair> pairs_;
    int max_pairs_;
    double curvature_min_;
};

//! Two-loop recursion: applies the inverse-curvature model accumulated in
//! history to grad and returns an ascent direction.  The base model is
//! gamma * I with gamma = s'h / h'h of the newest pair (identity when empty).
Vector lbfgs_direction(const LbfgsHistory& history, const Vector& grad);

struct LbfgsOptions {
    int max_steps = 64;
    int history = 10;
    double curvature_min = 1e-10;
    double armijo_c = 1e-4;
    int max_halvings = 20;
    double step_tol = 1e-12;  // stop when the accepted step is this small
    double grad_tol = 1e-8;   // stop when the box-projected gradient is this small
};

struct LbfgsResult {
    Vector x;            // best iterate seen (including the start point)
    double value = 0.0;  // objective at x
    int steps = 0;       // accepted steps
    bool line_search_failed = false;
};

//! Objective callback: returns the value at x and fills grad (ascent
//! orientation: the gradient of the function being maximised).
using ValueGrad = std::function<double(const Vector& x, Vector& grad)>;

//! Projected L-BFGS ascent over the box [lower, upper]: directions from the
//! two-loop recursion, step sizes by Armijo backtracking from 1 with halving,
//! trial points clipped to the box before evaluation.  A failed line search
//! ends the run; the best evaluated point is always returned.
LbfgsResult lbfgs_run(const ValueGrad& objective, Vector x0, const Vector& lower,
                      const Vector& upper, const LbfgsOptions& opts = {});

//! Quasi-Newton ascent on the compositional acquisition over the unit box.
//! The inner-expectation tracker is rebuilt at every evaluation point from a
//! refresh minibatch, and both minibatch index streams are frozen at entry,
//! so the objective the line search sees is deterministic and curvature
//! pairs stay coherent.  With k1 = k2 = pool size this retraces the
//! finite-sum quasi-Newton trajectory exactly.
LbfgsResult clbfgs_run(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                       const Matrix& x0, int t_steps, int k1, int k2,
                       const acq::SamplePool& pool, Rng& rng, const LbfgsOptions& opts = {});

}  // namespace cbo::opt
