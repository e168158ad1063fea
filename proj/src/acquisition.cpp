#include "cbo/acquisition.hpp"

#include <atomic>
#include <cmath>

namespace cbo::acq {

namespace {

std::atomic<long> g_live_samples{0};
std::atomic<long> g_peak_samples{0};

void lease_add(long n) {
    if (n == 0) return;
    const long live = g_live_samples.fetch_add(n) + n;
    long peak = g_peak_samples.load();
    while (peak < live && !g_peak_samples.compare_exchange_weak(peak, live)) {
    }
}

void lease_sub(long n) {
    if (n != 0) g_live_samples.fetch_sub(n);
}

}  // namespace

SampleLease::SampleLease(long count) : count_(count) { lease_add(count_); }
SampleLease::SampleLease(const SampleLease& other) : count_(other.count_) {
    lease_add(count_);
}
SampleLease& SampleLease::operator=(const SampleLease& other) {
    if (this != &other) {
        lease_sub(count_);
        count_ = other.count_;
        lease_add(count_);
    }
    return *this;
}
SampleLease::SampleLease(SampleLease&& other) noexcept : count_(other.count_) {
    other.count_ = 0;
}
SampleLease& SampleLease::operator=(SampleLease&& other) noexcept {
    if (this != &other) {
        lease_sub(count_);
        count_ = other.count_;
        other.count_ = 0;
    }
    return *this;
}
SampleLease::~SampleLease() { lease_sub(count_); }

SampleAllocStats sample_alloc_stats() {
    return {g_live_samples.load(), g_peak_samples.load()};
}

void reset_sample_alloc_stats() { g_peak_samples.store(g_live_samples.load()); }

const char* kind_name(Kind kind) {
    switch (kind) {
        case Kind::EI: return "EI";
        case Kind::PI: return "PI";
        case Kind::SR: return "SR";
        case Kind::UCB: return "UCB";
    }
    return "?";
}

const char* form_name(Form form) {
    switch (form) {
        case Form::ERM: return "ERM";
        case Form::FSM: return "FSM";
        case Form::COMP: return "COMP";
        case Form::COMP_ME: return "COMP-ME";
    }
    return "?";
}

Kind kind_from_name(const std::string& name) {
    for (Kind k : {Kind::EI, Kind::PI, Kind::SR, Kind::UCB})
        if (name == kind_name(k)) return k;
    throw std::invalid_argument("unknown acquisition kind: " + name);
}

Form form_from_name(const std::string& name) {
    for (Form f : {Form::ERM, Form::FSM, Form::COMP, Form::COMP_ME})
        if (name == form_name(f)) return f;
    throw std::invalid_argument("unknown acquisition form: " + name);
}

SamplePool SamplePool::draw(int m, int q, std::uint64_t seed) {
    if (m < 1 || q < 1) throw std::invalid_argument("SamplePool::draw: m and q must be >= 1");
    SamplePool pool;
    pool.seed = seed;
    auto rng = make_rng(seed);
    pool.z = normal_matrix(m, q, rng);
    pool.lease = SampleLease(static_cast<long>(m) * q);
    return pool;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double sigmoid_prime(double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
}

int argmax_first(const Vector& v) {
    int best = 0;
    for (int j = 1; j < v.size(); ++j)
        if (v(j) > v(best)) best = j;
    return best;
}

double ucb_weight(const AcquisitionSpec& spec) {
    return std::sqrt(spec.beta * M_PI / 2.0);
}

Vector inner_values_from_lz(Kind kind, const gp::BatchPosterior& post, const Vector& lz,
                            const AcquisitionSpec& spec) {
    switch (kind) {
        case Kind::EI:
            return ((post.mean + lz).array() - spec.incumbent).cwiseMax(0.0).matrix();
        case Kind::PI:
            return ((post.mean + lz).array() - spec.incumbent).matrix() / spec.tau;
        case Kind::SR:
            return post.mean + lz;
        case Kind::UCB:
            return post.mean + ucb_weight(spec) * lz.cwiseAbs();
    }
    return Vector();
}

namespace {

Vector inner_values(Kind kind, const gp::BatchPosterior& post, const Vector& z,
                    const AcquisitionSpec& spec) {
    return inner_values_from_lz(kind, post, post.chol.m * z, spec);
}

//! Batch maximum of the wrapped inner vector for one draw.
double wrapped_max(Kind kind, const Vector& v) {
    const double top = v(argmax_first(v));
    return kind == Kind::PI ? sigmoid(top) : top;
}

double mean_wrapped_max(Kind kind, const gp::BatchPosterior& post, const Matrix& zrows,
                        const AcquisitionSpec& spec) {
    double sum = 0.0;
    for (int m = 0; m < zrows.rows(); ++m) {
        const Vector z = zrows.row(m).transpose();
        sum += wrapped_max(kind, inner_values(kind, post, z, spec));
    }
    return sum / static_cast<double>(zrows.rows());
}

}  // namespace

InnerValue inner_v(Kind kind, const gp::BatchPosterior& post, const Vector& z,
                   const AcquisitionSpec& spec) {
    if (z.size() != post.mean.size())
        throw linalg::DimensionMismatch("inner_v: draw size does not match batch size");
    InnerValue out;
    out.v = inner_values(kind, post, z, spec);
    return out;
}

double acq_fsm(Kind kind, const gp::BatchPosterior& post, const SamplePool& pool,
               const AcquisitionSpec& spec) {
    if (pool.q() != post.q())
        throw linalg::DimensionMismatch("acq_fsm: pool draw size does not match batch size");
    return mean_wrapped_max(kind, post, pool.z, spec);
}

Matrix inner_expectation(Kind kind, const gp::BatchPosterior& post, const SamplePool& pool,
                         const AcquisitionSpec& spec) {
    if (pool.q() != post.q())
        throw linalg::DimensionMismatch("inner_expectation: pool/batch size mismatch");
    const int m = pool.size();
    Matrix zeta(post.q(), m);
    for (int i = 0; i < m; ++i) {
        const Vector z = pool.z.row(i).transpose();
        zeta.col(i) = inner_values(kind, post, z, spec) / static_cast<double>(m);
    }
    return zeta;
}

double acq_comp(Kind kind, const gp::BatchPosterior& post, const SamplePool& pool,
                const AcquisitionSpec& spec) {
    return outer_value(kind, inner_expectation(kind, post, pool, spec));
}

SparseInnerColumn inner_matrix_stochastic(Kind kind, const gp::BatchPosterior& post,
                                          int omega, const SamplePool& pool,
                                          const AcquisitionSpec& spec) {
    if (omega < 0 || omega >= pool.size())
        throw IndexOutOfRange("inner_matrix_stochastic: sample index outside the pool");
    SparseInnerColumn col;
    col.column_index = omega;
    col.columns = pool.size();
    const Vector z = pool.z.row(omega).transpose();
    col.v = inner_values(kind, post, z, spec);
    return col;
}

MeDraws inner_matrix_me(Kind kind, const gp::BatchPosterior& post, int k_draws, Rng& rng,
                        const AcquisitionSpec& spec) {
    if (k_draws < 1) throw std::invalid_argument("inner_matrix_me: need at least one draw");
    MeDraws out;
    out.lease = SampleLease(static_cast<long>(k_draws) * post.q());
    out.z = normal_matrix(k_draws, post.q(), rng);
    out.values.resize(post.q(), k_draws);
    for (int k = 0; k < k_draws; ++k) {
        const Vector z = out.z.row(k).transpose();
        out.values.col(k) = inner_values(kind, post, z, spec);
    }
    return out;
}

MeDraws inner_matrix_me_from(Kind kind, const gp::BatchPosterior& post, const Matrix& z,
                             const AcquisitionSpec& spec) {
    if (z.cols() != post.q())
        throw linalg::DimensionMismatch("inner_matrix_me_from: draw size mismatch");
    MeDraws out;
    out.lease = SampleLease(static_cast<long>(z.size()));
    out.z = z;
    out.values.resize(post.q(), z.rows());
    for (int k = 0; k < z.rows(); ++k) {
        const Vector zk = out.z.row(k).transpose();
        out.values.col(k) = inner_values(kind, post, zk, spec);
    }
    return out;
}

double acq_erm_sample(Kind kind, const gp::BatchPosterior& post, int minibatch_size,
                      Rng& rng, const AcquisitionSpec& spec) {
    if (minibatch_size < 1)
        throw std::invalid_argument("acq_erm_sample: minibatch must be >= 1");
    const Matrix z = normal_matrix(minibatch_size, post.q(), rng);
    return mean_wrapped_max(kind, post, z, spec);
}

double outer_value(Kind kind, const Matrix& zeta) {
    const int m = static_cast<int>(zeta.cols());
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
        const double top = zeta.col(i).maxCoeff();
        sum += kind == Kind::PI ? sigmoid(static_cast<double>(m) * top) : top;
    }
    return kind == Kind::PI ? sum / static_cast<double>(m) : sum;
}

Matrix outer_grad(Kind kind, const Matrix& zeta) {
    const int m = static_cast<int>(zeta.cols());
    Matrix grad = Matrix::Zero(zeta.rows(), m);
    for (int i = 0; i < m; ++i) {
        const int j = argmax_first(zeta.col(i));
        grad(j, i) = kind == Kind::PI
                         ? sigmoid_prime(static_cast<double>(m) * zeta(j, i))
                         : 1.0;
    }
    return grad;
}

double outer_value_me(Kind kind, const Matrix& zeta) {
    const int k = static_cast<int>(zeta.cols());
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double top = zeta.col(i).maxCoeff();
        sum += kind == Kind::PI ? sigmoid(top) : top;
    }
    return sum / static_cast<double>(k);
}

Matrix outer_grad_me(Kind kind, const Matrix& zeta) {
    const int k = static_cast<int>(zeta.cols());
    Matrix grad = Matrix::Zero(zeta.rows(), k);
    for (int i = 0; i < k; ++i) {
        const int j = argmax_first(zeta.col(i));
        const double w = kind == Kind::PI ? sigmoid_prime(zeta(j, i)) : 1.0;
        grad(j, i) = w / static_cast<double>(k);
    }
    return grad;
}

Vector flatten(const Matrix& points) {
    const int q = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    Vector x(q * d);
    for (int p = 0; p < q; ++p)
        for (int a = 0; a < d; ++a) x(p * d + a) = points(p, a);
    return x;
}

Matrix unflatten(const Vector& x, int q, int d) {
    if (x.size() != static_cast<Eigen::Index>(q) * d)
        throw linalg::DimensionMismatch("unflatten: flat size does not equal q*d");
    Matrix points(q, d);
    for (int p = 0; p < q; ++p)
        for (int a = 0; a < d; ++a) points(p, a) = x(p * d + a);
    return points;
}

}  // namespace cbo::acq
