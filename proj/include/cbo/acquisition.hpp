#pragma once

#include "cbo/gp.hpp"
#include "cbo/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cbo::acq {

using linalg::Matrix;
using linalg::Vector;

struct IndexOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

enum class Kind { EI, PI, SR, UCB };
enum class Form { ERM, FSM, COMP, COMP_ME };

const char* kind_name(Kind kind);
const char* form_name(Form form);
Kind kind_from_name(const std::string& name);
Form form_from_name(const std::string& name);

//! Constants shared by every evaluation of one acquisition-maximisation call.
//! beta weights the exploration term of UCB; tau is the sigmoid temperature of
//! the smoothed PI; incumbent is the best observed standardised output.
struct AcquisitionSpec {
    Kind kind = Kind::EI;
    Form form = Form::FSM;
    double beta = 2.0;
    double tau = 0.05;
    double incumbent = 0.0;
};

//! Bookkeeping for live stored standard-normal draws.  Structures that own a
//! draw buffer hold a lease sized by the number of scalars, so tests can
//! assert peak storage bounds of the memory-efficient code paths.
class SampleLease {
public:
    SampleLease() = default;
    explicit SampleLease(long count);
    SampleLease(const SampleLease& other);
    SampleLease& operator=(const SampleLease& other);
    SampleLease(SampleLease&& other) noexcept;
    SampleLease& operator=(SampleLease&& other) noexcept;
    ~SampleLease();

private:
    long count_ = 0;
};

struct SampleAllocStats {
    long live = 0;  // currently leased draw scalars
    long peak = 0;  // maximum live since the last reset
};
SampleAllocStats sample_alloc_stats();
//! Sets the peak watermark to the current live count.
void reset_sample_alloc_stats();

//! Fixed collection of i.i.d. standard-normal draws, one row per sample.
//! Drawn once per acquisition-maximisation call from the given seed.
struct SamplePool {
    Matrix z;  // M x q
    std::uint64_t seed = 0;
    SampleLease lease;

    int size() const { return static_cast<int>(z.rows()); }
    int q() const { return static_cast<int>(z.cols()); }

    static SamplePool draw(int m, int q, std::uint64_t seed);
};

//! One q-vector of inner values; column_index records which pool sample
//! produced it (-1 when the draw did not come from a pool).
struct InnerValue {
    Vector v;
    int column_index = -1;
};

double sigmoid(double x);
double sigmoid_prime(double x);

//! First index attaining the maximum (deterministic tie-breaking).
int argmax_first(const Vector& v);

//! Weight of the UCB exploration term: sqrt(beta * pi / 2).
double ucb_weight(const AcquisitionSpec& spec);

//! Inner value vector for one draw z:
//!   EI:  relu(mu + Lz - incumbent)
//!   PI:  (mu + Lz - incumbent) / tau
//!   SR:  mu + Lz
//!   UCB: mu + sqrt(beta*pi/2) * |Lz|   (elementwise absolute value)
InnerValue inner_v(Kind kind, const gp::BatchPosterior& post, const Vector& z,
                   const AcquisitionSpec& spec);

//! Same values given the precomputed correlated part Lz.
Vector inner_values_from_lz(Kind kind, const gp::BatchPosterior& post, const Vector& lz,
                            const AcquisitionSpec& spec);

//! Finite-sum acquisition estimate: mean over the pool of the batch maximum of
//! the wrapped inner vector (wrapper: identity for EI/SR/UCB, sigmoid for PI).
double acq_fsm(Kind kind, const gp::BatchPosterior& post, const SamplePool& pool,
               const AcquisitionSpec& spec);

//! Same estimate computed through the outer/inner composition f(E[g]); equal
//! to acq_fsm up to floating-point rounding.
double acq_comp(Kind kind, const gp::BatchPosterior& post, const SamplePool& pool,
                const AcquisitionSpec& spec);

//! Dense inner expectation E[g] = (1/M) [v_1 ... v_M], q x M.
Matrix inner_expectation(Kind kind, const gp::BatchPosterior& post,
                         const SamplePool& pool, const AcquisitionSpec& spec);

//! One stochastic instance of the inner mapping: a q x M matrix that is zero
//! everywhere except column `column_index`, stored sparsely.
struct SparseInnerColumn {
    Vector v;
    int column_index = 0;
    int columns = 0;
};
SparseInnerColumn inner_matrix_stochastic(Kind kind, const gp::BatchPosterior& post,
                                          int omega, const SamplePool& pool,
                                          const AcquisitionSpec& spec);

//! Memory-efficient stochastic inner instance: K fresh draws and their inner
//! values, never touching a pool.  values is q x K; z is K x q.
struct MeDraws {
    Matrix values;
    Matrix z;
    SampleLease lease;

    int k() const { return static_cast<int>(z.rows()); }
};
MeDraws inner_matrix_me(Kind kind, const gp::BatchPosterior& post, int k_draws,
                        Rng& rng, const AcquisitionSpec& spec);
//! Deterministic variant evaluating the given draws (K x q).
MeDraws inner_matrix_me_from(Kind kind, const gp::BatchPosterior& post, const Matrix& z,
                             const AcquisitionSpec& spec);

//! Fresh-sample estimate of the acquisition: minibatch mean of the wrapped
//! batch maxima with draws taken from rng at each call.
double acq_erm_sample(Kind kind, const gp::BatchPosterior& post, int minibatch_size,
                      Rng& rng, const AcquisitionSpec& spec);

//! Outer composition value at a q x M first-auxiliary matrix whose columns
//! carry the 1/M scaling of the inner expectation:
//!   EI/SR/UCB: sum_m max_j A_{jm};  PI: (1/M) sum_m max_j Sig(M * A_{jm}).
double outer_value(Kind kind, const Matrix& zeta);
//! Gradient of outer_value: per column an indicator at the argmax row
//! (EI/SR/UCB) or Sig'(M * zeta) at the argmax row (PI).
Matrix outer_grad(Kind kind, const Matrix& zeta);

//! Memory-efficient outer composition over a q x K matrix of raw inner values:
//!   EI/SR/UCB: (1/K) sum_m max_j A_{jm};  PI: (1/K) sum_m max_j Sig(A_{jm}).
double outer_value_me(Kind kind, const Matrix& zeta);
Matrix outer_grad_me(Kind kind, const Matrix& zeta);

//! Layout between batch matrices (q x d) and flat optimiser vectors (dq):
//! coordinate p*d + a holds batch point p, input dimension a.
Vector flatten(const Matrix& points);
Matrix unflatten(const Vector& x, int q, int d);

}  // namespace cbo::acq
