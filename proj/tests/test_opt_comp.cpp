#include <doctest.h>

#include "cbo/opt_comp.hpp"

#include <cmath>
#include <vector>

using cbo::make_rng;
using cbo::acq::AcquisitionSpec;
using cbo::acq::Form;
using cbo::acq::Kind;
using cbo::acq::SamplePool;
using cbo::gp::GpModel;
using cbo::linalg::Matrix;
using cbo::linalg::Vector;
using cbo::opt::CompAlgo;
using cbo::opt::CompParams;
using cbo::opt::CompState;
using cbo::opt::FirstOrderAlgo;
using cbo::opt::FirstOrderParams;

namespace {

constexpr CompAlgo kAllAlgos[] = {CompAlgo::SCGA, CompAlgo::ASCGA, CompAlgo::CADAM,
                                  CompAlgo::NASA, CompAlgo::NESTED_MC};

GpModel random_model(int n, int d, std::uint64_t seed, double log_length = std::log(0.5),
                     double log_signal = 0.0, double log_noise = std::log(1e-2)) {
    auto rng = make_rng(seed);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = cbo::uniform01(rng);
    const Vector y = cbo::normal_vector(n, rng);
    cbo::gp::KernelParams params;
    params.log_lengthscales = Vector::Constant(d, log_length);
    params.log_signal_variance = log_signal;
    params.log_noise_variance = log_noise;
    return cbo::gp::make_model(cbo::gp::Dataset::standardise(x, y), params);
}

Matrix random_batch(int q, int d, std::uint64_t seed) {
    auto rng = make_rng(seed);
    Matrix xq(q, d);
    for (int p = 0; p < q; ++p)
        for (int a = 0; a < d; ++a) xq(p, a) = 0.15 + 0.7 * cbo::uniform01(rng);
    return xq;
}

//! A bare state for driving the update rules directly with synthetic gradients.
CompState toy_state(const Vector& x0, const CompParams& params) {
    CompState st;
    st.x = x0;
    st.u = x0;
    st.m1 = Vector::Zero(x0.size());
    st.m2 = Vector::Zero(x0.size());
    st.params = params;
    return st;
}

}  // namespace

TEST_SUITE_BEGIN("opt_comp");

TEST_CASE("constant-schedule compositional adam matches plain adam") {
    // With a constant inner schedule (mu = 1, p2 = 0) the scheduled moment
    // weights reduce to fixed decay rates.  Mapping the step size through the
    // schedule's normalisation makes the update identical to textbook Adam.
    const double beta1 = 0.9;
    const double beta2 = 0.999;
    FirstOrderParams pf;
    pf.lr = 1e-3;
    pf.lr_decay = 1.0;
    pf.beta1 = beta1;
    pf.beta2 = beta2;
    pf.eps = 1e-8;

    CompParams pc;
    pc.mu = 1.0;
    pc.b1_scale = beta1;
    pc.p2 = 0.0;
    pc.c_gamma = (1.0 - beta2) / ((1.0 - beta1) * (1.0 - beta1));
    pc.p_eta = 0.0;
    pc.eps = 1e-8;
    pc.lr = pf.lr * (1.0 - beta1) / std::sqrt(1.0 - beta2);

    const int n = 4;
    auto adam = cbo::opt::first_order_init(Vector::Constant(n, 0.5), FirstOrderAlgo::ADAM, pf);
    CompState cadam = toy_state(Vector::Constant(n, 0.5), pc);

    auto grng = make_rng(5150);
    for (int t = 1; t <= 50; ++t) {
        const Vector g = 0.3 * cbo::normal_vector(n, grng);
        cbo::opt::general_step(adam, g, FirstOrderAlgo::ADAM);
        cbo::opt::comp_x_update(cadam, g, CompAlgo::CADAM);
        CHECK((adam.x - cadam.x).lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK((adam.m1 - cadam.m1).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK((adam.m2 - cadam.m2).lpNorm<Eigen::Infinity>() <= 1e-15);
        CHECK(adam.prod_b1 == cadam.prod_b1);
    }
}

TEST_CASE("nested monte carlo with full refresh retraces adam on the finite-sum form") {
    // A power-of-two pool size makes the tracker exactly the scaled inner
    // values, so the two trajectories agree bitwise for kinds whose outer
    // weights are constant.
    const GpModel model = random_model(10, 3, 901);
    const int q = 3;
    const int m_pool = 128;
    const SamplePool pool = SamplePool::draw(m_pool, q, 902);
    const std::vector<Matrix> restarts = {random_batch(q, 3, 903), random_batch(q, 3, 904)};

    const FirstOrderParams pf = FirstOrderParams::defaults_for(FirstOrderAlgo::ADAM);
    const CompParams pc = CompParams::defaults_for(CompAlgo::NESTED_MC);
    REQUIRE(pf.lr == pc.lr);
    REQUIRE(pf.beta1 == pc.beta1);
    REQUIRE(pf.beta2 == pc.beta2);
    REQUIRE(pf.lr_decay == pc.lr_decay);

    for (const Kind kind : {Kind::EI, Kind::SR}) {
        AcquisitionSpec spec;
        spec.kind = kind;
        spec.form = Form::FSM;
        spec.incumbent = 0.2;

        auto rng_a = make_rng(905);
        const auto fsm = cbo::opt::run_first_order(model, spec, restarts, FirstOrderAlgo::ADAM,
                                                   pf, 12, 32, &pool, rng_a);
        auto rng_b = make_rng(905);
        const auto comp = cbo::opt::run_comp(model, spec, restarts, CompAlgo::NESTED_MC, pc, 12,
                                             32, m_pool, &pool, rng_b, false);

        CHECK((fsm.batch - comp.batch).lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK(fsm.restart == comp.restart);
        CHECK(fsm.value == doctest::Approx(comp.value).epsilon(1e-10));
    }
}

TEST_CASE("scga converges on a deterministic compositional toy") {
    // Inner map A x - b, outer map -|zeta|^2; the maximiser is x* = A^{-1} b.
    Matrix a(2, 2);
    a << 2.0, 0.3, 0.1, 1.5;
    Vector xstar(2);
    xstar << 0.6, 0.4;
    const Vector b = a * xstar;

    CompParams p;
    p.lr = 0.1;
    p.lr_pow = 0.5;
    CompState st = toy_state(Vector::Constant(2, 0.1), p);
    for (int t = 0; t < 5000; ++t) {
        const Vector zeta = a * st.x - b;
        const Vector grad = -2.0 * a.transpose() * zeta;
        cbo::opt::comp_x_update(st, grad, CompAlgo::SCGA);
    }
    CHECK((st.x - xstar).norm() <= 1e-3);
}

TEST_CASE("nasa filters gradient noise on a toy quadratic") {
    const Vector xstar = (Vector(2) << 0.3, 0.7).finished();
    CompParams p = CompParams::defaults_for(CompAlgo::NASA);
    CompState st = toy_state(Vector::Constant(2, 0.5), p);
    auto nrng = make_rng(906);
    for (int t = 0; t < 10000; ++t) {
        const Vector grad = -2.0 * (st.x - xstar) + 0.2 * cbo::normal_vector(2, nrng);
        cbo::opt::comp_x_update(st, grad, CompAlgo::NASA);
    }
    CHECK((st.x - xstar).norm() <= 1e-2);
}

TEST_CASE("a zero learning rate with full batches is a fixed point") {
    const GpModel model = random_model(8, 2, 903);
    const Matrix x0 = random_batch(2, 2, 904);
    const SamplePool pool = SamplePool::draw(64, 2, 905);
    AcquisitionSpec spec;
    spec.kind = Kind::SR;
    CompParams p;
    p.lr = 0.0;

    auto rng = make_rng(906);
    CompState st = cbo::opt::comp_init(x0, CompAlgo::SCGA, p, spec.kind, model, spec, 64, &pool,
                                       rng, false);
    const Vector x_before = st.x;
    const Matrix zeta_before = st.zeta;
    const auto rng_before = rng;
    cbo::opt::comp_step(st, CompAlgo::SCGA, spec.kind, model, spec, 64, 64, rng);
    CHECK(rng == rng_before);  // full batches consume no randomness
    CHECK((st.x - x_before).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((st.u - st.x).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((st.zeta - zeta_before).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("the tracker starts at the exact inner expectation when fully sampled") {
    const GpModel model = random_model(8, 2, 907);
    const Matrix x0 = random_batch(2, 2, 908);
    const SamplePool pool = SamplePool::draw(96, 2, 909);
    for (const Kind kind : {Kind::EI, Kind::PI, Kind::SR, Kind::UCB}) {
        AcquisitionSpec spec;
        spec.kind = kind;
        spec.incumbent = 0.1;
        auto rng = make_rng(910);
        const CompState st = cbo::opt::comp_init(x0, CompAlgo::SCGA, CompParams{}, kind, model,
                                                 spec, 96, &pool, rng, false);
        const cbo::gp::BatchPosterior post = cbo::gp::posterior(model, x0, false);
        const Matrix expected = cbo::acq::inner_expectation(kind, post, pool, spec);
        CHECK((st.zeta - expected).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("memory-efficient initialisation is reproducible by seed") {
    const GpModel model = random_model(8, 2, 911);
    const Matrix x0 = random_batch(2, 2, 912);
    AcquisitionSpec spec;
    spec.kind = Kind::SR;
    auto r1 = make_rng(913);
    auto r2 = make_rng(913);
    auto r3 = make_rng(914);
    const CompState a = cbo::opt::comp_init(x0, CompAlgo::NASA, CompParams{}, spec.kind, model,
                                            spec, 24, nullptr, r1, true);
    const CompState b = cbo::opt::comp_init(x0, CompAlgo::NASA, CompParams{}, spec.kind, model,
                                            spec, 24, nullptr, r2, true);
    const CompState c = cbo::opt::comp_init(x0, CompAlgo::NASA, CompParams{}, spec.kind, model,
                                            spec, 24, nullptr, r3, true);
    CHECK((a.zeta - b.zeta).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.zeta - c.zeta).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("memory-efficient steps stay within the draw allocation bound") {
    const GpModel model = random_model(8, 2, 915);
    const Matrix x0 = random_batch(2, 2, 916);
    const int k = 24;
    const int q = 2;
    AcquisitionSpec spec;
    spec.kind = Kind::EI;
    auto rng = make_rng(917);
    cbo::acq::reset_sample_alloc_stats();
    CompState st = cbo::opt::comp_init(x0, CompAlgo::SCGA, CompParams{}, spec.kind, model, spec,
                                       k, nullptr, rng, true);
    for (int t = 0; t < 3; ++t)
        cbo::opt::comp_step(st, CompAlgo::SCGA, spec.kind, model, spec, k, k, rng);
    CHECK(cbo::acq::sample_alloc_stats().peak <= static_cast<long>(k) * q);
    CHECK(cbo::acq::sample_alloc_stats().live == 0);
}

TEST_CASE("memory-efficient compositional adam retraces the pooled version for one step") {
    // With the fresh-draw count equal to the pool size and the step's rng
    // seeded like the pool, the memory-efficient gradient touches the same
    // draws as the pooled one, so the first iterate must coincide.
    const GpModel model = random_model(8, 2, 918);
    const Matrix x0 = random_batch(2, 2, 919);
    const int m = 16;
    const std::uint64_t pool_seed = 920;
    const SamplePool pool = SamplePool::draw(m, 2, pool_seed);
    AcquisitionSpec spec;
    spec.kind = Kind::EI;
    spec.incumbent = 0.1;
    const CompParams p = CompParams::defaults_for(CompAlgo::CADAM);

    auto rng_std = make_rng(1);  // untouched: every minibatch is the full batch
    CompState st_std = cbo::opt::comp_init(x0, CompAlgo::CADAM, p, spec.kind, model, spec, m,
                                           &pool, rng_std, false);

    auto rng_init = make_rng(pool_seed);
    CompState st_me = cbo::opt::comp_init(x0, CompAlgo::CADAM, p, spec.kind, model, spec, m,
                                          nullptr, rng_init, true);
    // The raw tracker holds unscaled inner values; the pooled one is scaled.
    CHECK((st_me.zeta / m - st_std.zeta).lpNorm<Eigen::Infinity>() <= 1e-12);

    cbo::opt::comp_step(st_std, CompAlgo::CADAM, spec.kind, model, spec, m, m, rng_std);
    auto rng_step = make_rng(pool_seed);  // the gradient's fresh draws replay the pool
    cbo::opt::comp_step(st_me, CompAlgo::CADAM, spec.kind, model, spec, m, m, rng_step);

    CHECK((st_std.x - st_me.x).lpNorm<Eigen::Infinity>() <= 1e-13);
    CHECK((st_std.u - st_me.u).lpNorm<Eigen::Infinity>() <= 1e-13);
}

TEST_CASE("the tracker converges to the inner expectation at a frozen batch") {
    const GpModel model = random_model(10, 2, 921);
    const Matrix x0 = random_batch(2, 2, 922);
    const SamplePool pool = SamplePool::draw(128, 2, 923);
    AcquisitionSpec spec;
    spec.kind = Kind::EI;
    spec.incumbent = 0.1;
    CompParams p;
    p.lr = 0.0;  // freeze the batch so only the tracker moves

    auto rng = make_rng(924);
    CompState st = cbo::opt::comp_init(x0, CompAlgo::SCGA, p, spec.kind, model, spec, 16, &pool,
                                       rng, false);
    const cbo::gp::BatchPosterior post = cbo::gp::posterior(model, x0, false);
    const Matrix expected = cbo::acq::inner_expectation(spec.kind, post, pool, spec);

    cbo::opt::comp_step(st, CompAlgo::SCGA, spec.kind, model, spec, 16, 16, rng);
    const double err_first = (st.zeta - expected).norm();
    for (int t = 0; t < 1999; ++t)
        cbo::opt::comp_step(st, CompAlgo::SCGA, spec.kind, model, spec, 16, 16, rng);
    const double err_last = (st.zeta - expected).norm();
    CHECK(err_last < err_first / 3.0);
    CHECK(err_last <= 0.25 * expected.norm() + 1e-12);
}

TEST_CASE("runner returns the best initial batch when no steps are taken") {
    const GpModel model = random_model(9, 2, 925);
    const SamplePool pool = SamplePool::draw(64, 2, 926);
    const std::vector<Matrix> restarts = {random_batch(2, 2, 927), random_batch(2, 2, 928),
                                          random_batch(2, 2, 929)};
    AcquisitionSpec spec;
    spec.kind = Kind::EI;
    spec.incumbent = 0.1;

    auto rng = make_rng(930);
    const auto res = cbo::opt::run_comp(model, spec, restarts, CompAlgo::CADAM, CompParams{}, 0,
                                        32, 32, &pool, rng, false);

    int arg = -1;
    double best = -1e300;
    for (std::size_t r = 0; r < restarts.size(); ++r) {
        const auto post = cbo::gp::posterior(model, restarts[r], false);
        const double v = cbo::acq::acq_comp(spec.kind, post, pool, spec);
        if (v > best) {
            best = v;
            arg = static_cast<int>(r);
        }
    }
    CHECK(res.restart == arg);
    CHECK(res.value == doctest::Approx(best).epsilon(1e-14));
    CHECK((res.batch - restarts[static_cast<std::size_t>(arg)]).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("runs are reproducible from the master seed") {
    const GpModel model = random_model(9, 2, 931);
    const SamplePool pool = SamplePool::draw(64, 2, 932);
    const std::vector<Matrix> restarts = {random_batch(2, 2, 933), random_batch(2, 2, 934)};
    AcquisitionSpec spec;
    spec.kind = Kind::PI;

    SUBCASE("pooled") {
        auto r1 = make_rng(935);
        auto r2 = make_rng(935);
        const auto a = cbo::opt::run_comp(model, spec, restarts, CompAlgo::CADAM, CompParams{},
                                          3, 16, 32, &pool, r1, false);
        const auto b = cbo::opt::run_comp(model, spec, restarts, CompAlgo::CADAM, CompParams{},
                                          3, 16, 32, &pool, r2, false);
        CHECK((a.batch - b.batch).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(a.value == b.value);
        CHECK(a.restart == b.restart);
    }
    SUBCASE("memory-efficient") {
        auto r1 = make_rng(936);
        auto r2 = make_rng(936);
        const auto a = cbo::opt::run_comp(model, spec, restarts, CompAlgo::NASA, CompParams{},
                                          2, 24, 24, nullptr, r1, true);
        const auto b = cbo::opt::run_comp(model, spec, restarts, CompAlgo::NASA, CompParams{},
                                          2, 24, 24, nullptr, r2, true);
        CHECK((a.batch - b.batch).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(a.value == b.value);
    }
}

TEST_CASE("iterates remain inside the unit box under aggressive steps") {
    const GpModel model = random_model(10, 2, 937);
    const SamplePool pool = SamplePool::draw(64, 3, 938);
    const std::vector<Matrix> restarts = {random_batch(3, 2, 939)};
    AcquisitionSpec spec;
    spec.kind = Kind::UCB;

    auto rng = make_rng(940);
    for (const CompAlgo algo : kAllAlgos) {
        CompParams p = CompParams::defaults_for(algo);
        p.lr = 2.5;
        p.nasa_beta = 3.0;
        const auto res = cbo::opt::run_comp(model, spec, restarts, algo, p, 8, 16, 32, &pool,
                                            rng, false);
        CHECK(res.batch.allFinite());
        CHECK(res.batch.minCoeff() >= 0.0);
        CHECK(res.batch.maxCoeff() <= 1.0);
        CHECK(std::isfinite(res.value));
    }
}

TEST_CASE("non-finite gradients are rejected") {
    CompParams p;
    CompState st = toy_state(Vector::Constant(3, 0.5), p);
    Vector bad = Vector::Zero(3);
    bad(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(cbo::opt::comp_x_update(st, bad, CompAlgo::SCGA), cbo::opt::NonFiniteState);
    const Vector wrong = Vector::Zero(2);
    CHECK_THROWS_AS(cbo::opt::comp_x_update(st, wrong, CompAlgo::SCGA),
                    cbo::linalg::DimensionMismatch);
}

TEST_CASE("algorithm names round-trip") {
    for (const CompAlgo algo : kAllAlgos)
        CHECK(cbo::opt::comp_from_name(cbo::opt::comp_name(algo)) == algo);
    CHECK_THROWS_AS(cbo::opt::comp_from_name("adamx"), std::invalid_argument);
}

TEST_SUITE_END();
