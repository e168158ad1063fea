#include <doctest.h>

#include "cbo/bo.hpp"

#include <cmath>
#include <set>
#include <vector>

using cbo::make_rng;
using cbo::Rng;
using cbo::acq::AcquisitionSpec;
using cbo::acq::Form;
using cbo::acq::Kind;
using cbo::acq::SamplePool;
using cbo::bo::BoConfig;
using cbo::bo::BoTrace;
using cbo::bo::boltzmann_select;
using cbo::bo::make_optimiser;
using cbo::bo::maximise_acquisition;
using cbo::bo::OptimiserFamily;
using cbo::bo::RestartSelection;
using cbo::bo::run_bo;
using cbo::bo::select_restarts;
using cbo::gp::GpModel;
using cbo::linalg::Matrix;
using cbo::linalg::Vector;

namespace {

GpModel random_model(int n, int d, std::uint64_t seed) {
    auto rng = make_rng(seed);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = cbo::uniform01(rng);
    const Vector y = cbo::normal_vector(n, rng);
    cbo::gp::KernelParams params;
    params.log_lengthscales = Vector::Constant(d, std::log(0.5));
    params.log_signal_variance = 0.0;
    params.log_noise_variance = std::log(1e-2);
    return cbo::gp::make_model(cbo::gp::Dataset::standardise(x, y), params);
}

double pool_score(const GpModel& model, const AcquisitionSpec& spec, const SamplePool& pool,
                  const Matrix& batch) {
    return cbo::acq::acq_fsm(spec.kind, cbo::gp::posterior(model, batch, false), pool, spec);
}

//! Small config that keeps a full outer step affordable in a unit test.
BoConfig tiny_config() {
    BoConfig config;
    config.q = 2;
    config.n_steps = 2;
    config.acq.kind = Kind::SR;
    config.optimiser = make_optimiser("adam");
    config.t_opt = 5;
    config.minibatch = 8;
    config.pool_size = 32;
    config.n_raw = 16;
    config.n_restarts = 4;
    config.n_init = 3;
    config.seed = 7;
    config.fit.restarts = 1;
    config.fit.max_steps = 25;
    return config;
}

bool in_unit_box(const Matrix& m) {
    return m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0 && m.allFinite();
}

}  // namespace

TEST_SUITE_BEGIN("bo");

TEST_CASE("the optimiser registry lists every solver with a default form") {
    const auto& registry = cbo::bo::optimiser_registry();
    CHECK(registry.size() == 18);
    std::set<std::string> names;
    for (const auto& info : registry) {
        CHECK(!info.forms.empty());
        names.insert(info.name);
        const auto& found = cbo::bo::optimiser_info(info.name);
        CHECK(found.family == info.family);
    }
    CHECK(names.size() == registry.size());
    CHECK(cbo::bo::optimiser_info("adam").family == OptimiserFamily::FIRST_ORDER);
    CHECK(cbo::bo::optimiser_info("cadam").family == OptimiserFamily::COMPOSITIONAL);
    CHECK(cbo::bo::optimiser_info("lbfgs").family == OptimiserFamily::LBFGS);
    CHECK(cbo::bo::optimiser_info("clbfgs").family == OptimiserFamily::CLBFGS);
    CHECK(cbo::bo::optimiser_info("cma-es").family == OptimiserFamily::CMA_ES);
    CHECK_THROWS_AS((void)cbo::bo::optimiser_info("newton"), std::invalid_argument);
}

TEST_CASE("make_optimiser applies family defaults and validates the form") {
    const auto adam = make_optimiser("adam");
    CHECK(adam.form == Form::FSM);
    CHECK(adam.first.lr ==
          cbo::opt::FirstOrderParams::defaults_for(cbo::opt::FirstOrderAlgo::ADAM).lr);
    const auto cadam = make_optimiser("cadam");
    CHECK(cadam.form == Form::COMP);
    const auto cadam_me = make_optimiser("cadam", Form::COMP_ME);
    CHECK(cadam_me.form == Form::COMP_ME);
    CHECK(make_optimiser("lbfgs").form == Form::FSM);
    CHECK(make_optimiser("clbfgs").form == Form::COMP);
    CHECK_THROWS_AS((void)make_optimiser("adam", Form::COMP), std::invalid_argument);
    CHECK_THROWS_AS((void)make_optimiser("lbfgs", Form::ERM), std::invalid_argument);
}

TEST_CASE("selecting as many indices as there are values returns all of them") {
    Vector values(5);
    values << 0.3, -1.0, 2.0, 0.0, 5.0;
    auto rng = make_rng(11);
    const auto rng_before = rng;
    const auto all = boltzmann_select(values, 5, rng);
    REQUIRE(all.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
    CHECK(rng == rng_before);
}

TEST_CASE("a dominant value is always included by the forcing rule") {
    Vector values = Vector::Zero(12);
    values[7] = 50.0;
    auto rng = make_rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const auto picked = boltzmann_select(values, 3, rng);
        CHECK(picked.front() == 7);
        const std::set<int> unique(picked.begin(), picked.end());
        CHECK(unique.size() == picked.size());
        for (const int i : picked) {
            CHECK(i >= 0);
            CHECK(i < 12);
        }
    }
}

TEST_CASE("flat values fall back to uniform sampling without replacement") {
    const Vector values = Vector::Constant(8, 3.25);
    auto rng = make_rng(37);
    const int trials = 10000;
    std::vector<int> first_count(8, 0);
    std::vector<int> include_count(8, 0);
    for (int trial = 0; trial < trials; ++trial) {
        const auto picked = boltzmann_select(values, 3, rng);
        REQUIRE(picked.size() == 3);
        ++first_count[static_cast<std::size_t>(picked.front())];
        for (const int i : picked) ++include_count[static_cast<std::size_t>(i)];
    }
    // First pick is exactly uniform over 8: chi-square with 7 dof at p = 0.01.
    const double expected_first = trials / 8.0;
    double stat = 0.0;
    for (const int count : first_count) {
        const double diff = count - expected_first;
        stat += diff * diff / expected_first;
    }
    CHECK(stat < 18.4753);
    // Marginal inclusion is 3/8 per index; allow five binomial sigmas.
    const double expected_inc = trials * 3.0 / 8.0;
    const double sigma = std::sqrt(trials * (3.0 / 8.0) * (5.0 / 8.0));
    for (const int count : include_count)
        CHECK(std::abs(count - expected_inc) <= 5.0 * sigma);
}

TEST_CASE("larger values are included more often than smaller ones") {
    Vector values(10);
    for (int i = 0; i < 10; ++i) values[i] = 0.4 * i;
    auto rng = make_rng(59);
    int high = 0;
    int low = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        for (const int i : boltzmann_select(values, 4, rng)) {
            if (i == 9) ++high;
            if (i == 0) ++low;
        }
    }
    CHECK(high > low + 200);
}

TEST_CASE("top-k mode returns the k largest values with index tie-breaking") {
    Vector values(6);
    values << 1.0, 4.0, 4.0, -2.0, 5.0, 1.0;
    auto rng = make_rng(61);
    const auto rng_before = rng;
    const auto picked = boltzmann_select(values, 3, rng, true);
    REQUIRE(picked.size() == 3);
    CHECK(picked[0] == 4);
    CHECK(picked[1] == 1);
    CHECK(picked[2] == 2);
    CHECK(rng == rng_before);
    CHECK_THROWS_AS((void)boltzmann_select(values, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS((void)boltzmann_select(values, 7, rng), std::invalid_argument);
    Vector bad = values;
    bad[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)boltzmann_select(bad, 2, rng), std::invalid_argument);
}

TEST_CASE("requesting every raw batch returns them in generation order") {
    const GpModel model = random_model(10, 2, 101);
    AcquisitionSpec spec;
    spec.kind = Kind::EI;
    spec.incumbent = model.incumbent;
    const SamplePool pool = SamplePool::draw(32, 3, 102);
    auto rng = make_rng(103);
    auto replay = rng;
    const RestartSelection sel = select_restarts(model, spec, pool, 3, 6, 6, rng);
    REQUIRE(sel.batches.size() == 6);
    double best_value = -std::numeric_limits<double>::infinity();
    Matrix best_batch;
    for (const Matrix& batch : sel.batches) {
        Matrix expected(3, 2);
        for (int p = 0; p < 3; ++p)
            for (int a = 0; a < 2; ++a) expected(p, a) = cbo::uniform01(replay);
        CHECK((batch - expected).lpNorm<Eigen::Infinity>() == 0.0);
        const double value = pool_score(model, spec, pool, batch);
        if (value > best_value) {
            best_value = value;
            best_batch = batch;
        }
    }
    CHECK(sel.best_raw_value == doctest::Approx(best_value).epsilon(1e-14));
    CHECK((sel.best_raw - best_batch).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("the scan argmax is one of the selected restart batches") {
    const GpModel model = random_model(12, 2, 111);
    AcquisitionSpec spec;
    spec.kind = Kind::UCB;
    spec.incumbent = model.incumbent;
    const SamplePool pool = SamplePool::draw(64, 2, 112);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto rng = make_rng(113 + seed);
        const RestartSelection sel = select_restarts(model, spec, pool, 2, 40, 6, rng);
        REQUIRE(sel.batches.size() == 6);
        bool found = false;
        for (const Matrix& batch : sel.batches)
            if ((batch - sel.best_raw).lpNorm<Eigen::Infinity>() == 0.0) found = true;
        CHECK(found);
        CHECK(pool_score(model, spec, pool, sel.best_raw) ==
              doctest::Approx(sel.best_raw_value).epsilon(1e-14));
    }
}

TEST_CASE("maximise_acquisition never returns less than the best raw batch") {
    const GpModel model = random_model(14, 2, 121);
    const SamplePool pool = SamplePool::draw(32, 2, 122);
    const struct {
        const char* name;
        Form form;
    } setups[] = {
        {"adam", Form::FSM},   {"adam", Form::ERM},     {"cadam", Form::COMP},
        {"cadam", Form::COMP_ME}, {"lbfgs", Form::FSM}, {"clbfgs", Form::COMP},
        {"random-search", Form::FSM}, {"cma-es", Form::FSM}, {"de", Form::FSM},
    };
    for (const auto& setup : setups) {
        CAPTURE(setup.name);
        BoConfig config = tiny_config();
        config.optimiser = make_optimiser(setup.name, setup.form);
        AcquisitionSpec spec = config.acq;
        spec.form = setup.form;
        spec.incumbent = model.incumbent;
        auto rng = make_rng(123);
        const RestartSelection sel =
            select_restarts(model, spec, pool, config.q, config.n_raw, config.n_restarts, rng);
        const auto result = maximise_acquisition(model, spec, pool, sel, config, 999);
        CHECK(result.value >= sel.best_raw_value);
        CHECK(in_unit_box(result.batch));
        CHECK(result.batch.rows() == config.q);
        CHECK(result.batch.cols() == 2);
        CHECK(pool_score(model, spec, pool, result.batch) ==
              doctest::Approx(result.value).epsilon(1e-12));
        // Re-running with the same step seed reproduces the outcome.
        const auto again = maximise_acquisition(model, spec, pool, sel, config, 999);
        CHECK((again.batch - result.batch).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(again.value == result.value);
    }
}

TEST_CASE("a constant black box leaves the incumbent flat") {
    BoConfig config = tiny_config();
    const BoTrace trace = run_bo(config, 2, [](const Vector&) { return 1.5; });
    REQUIRE(trace.rows.size() == 3);
    for (const auto& row : trace.rows) CHECK(row.incumbent == 1.5);
}

TEST_CASE("the trace has one row per step with a non-decreasing incumbent") {
    BoConfig config = tiny_config();
    config.n_steps = 3;
    const auto black_box = [](const Vector& u) { return -(u.array() - 0.3).matrix().squaredNorm(); };
    const BoTrace trace = run_bo(config, 2, black_box);
    REQUIRE(trace.rows.size() == 4);
    CHECK(trace.rows.front().batch.rows() == config.n_init);
    CHECK(trace.rows.front().restart == -1);
    CHECK(std::isnan(trace.rows.front().acq_value));
    for (std::size_t t = 0; t < trace.rows.size(); ++t) {
        const auto& row = trace.rows[t];
        CHECK(row.step == static_cast<int>(t));
        CHECK(row.raw_values.allFinite());
        CHECK(in_unit_box(row.batch));
        if (t > 0) {
            CHECK(row.batch.rows() == config.q);
            CHECK(row.incumbent >= trace.rows[t - 1].incumbent);
            CHECK(row.acq_value >= row.raw_best_acq);
            CHECK(row.fit_ms >= 0.0);
            CHECK(row.opt_ms >= 0.0);
            CHECK(std::isfinite(row.fit_nlml));
        }
    }
    CHECK(trace.inputs.rows() == config.n_init + config.n_steps * config.q);
    CHECK(trace.outputs.size() == trace.inputs.rows());
    // The final incumbent is the max over everything queried.
    CHECK(trace.rows.back().incumbent == doctest::Approx(trace.outputs.maxCoeff()));
}

TEST_CASE("zero steps yield only the initial-design row") {
    BoConfig config = tiny_config();
    config.n_steps = 0;
    const BoTrace trace = run_bo(config, 2, [](const Vector& u) { return u.sum(); });
    REQUIRE(trace.rows.size() == 1);
    CHECK(trace.rows.front().step == 0);
    CHECK(trace.inputs.rows() == config.n_init);
}

TEST_CASE("identical configs reproduce the trace and different seeds move it") {
    BoConfig config = tiny_config();
    const auto black_box = [](const Vector& u) {
        return std::sin(3.0 * u[0]) + std::cos(2.0 * u[1]);
    };
    const BoTrace a = run_bo(config, 2, black_box);
    const BoTrace b = run_bo(config, 2, black_box);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t t = 0; t < a.rows.size(); ++t) {
        CHECK(a.rows[t].incumbent == b.rows[t].incumbent);
        CHECK((a.rows[t].batch - b.rows[t].batch).lpNorm<Eigen::Infinity>() == 0.0);
        if (t > 0) CHECK(a.rows[t].acq_value == b.rows[t].acq_value);
    }
    CHECK((a.inputs - b.inputs).lpNorm<Eigen::Infinity>() == 0.0);
    config.seed = 8;
    const BoTrace c = run_bo(config, 2, black_box);
    CHECK((a.inputs.topRows(config.n_init) - c.inputs.topRows(config.n_init))
              .lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("ten steps on a concave one-dimensional box find the maximum region") {
    BoConfig config;
    config.q = 1;
    config.n_steps = 10;
    config.acq.kind = Kind::SR;
    config.optimiser = make_optimiser("adam");
    config.t_opt = 30;
    config.minibatch = 32;
    config.pool_size = 64;
    config.n_raw = 128;
    config.n_restarts = 8;
    config.n_init = 3;
    config.seed = 5;
    config.fit.restarts = 2;
    config.fit.max_steps = 60;
    const auto black_box = [](const Vector& u) {
        const double t = u[0] - 0.73;
        return -t * t;
    };
    const BoTrace trace = run_bo(config, 1, black_box);
    // Gap to the maximum, scaled by the worst value over the domain.
    const double worst = -0.73 * 0.73;
    CHECK(std::abs(trace.rows.back().incumbent) <= 0.05 * std::abs(worst));
}

TEST_CASE("invalid configurations are rejected up front") {
    BoConfig config = tiny_config();
    config.n_raw = 2;
    CHECK_THROWS_AS((void)run_bo(config, 2, [](const Vector&) { return 0.0; }),
                    std::invalid_argument);
    config = tiny_config();
    config.optimiser.form = Form::COMP;  // adam cannot run the compositional form
    CHECK_THROWS_AS((void)run_bo(config, 2, [](const Vector&) { return 0.0; }),
                    std::invalid_argument);
    config = tiny_config();
    config.optimiser = make_optimiser("de");
    config.n_restarts = 2;
    CHECK_THROWS_AS((void)run_bo(config, 2, [](const Vector&) { return 0.0; }),
                    std::invalid_argument);
    config = tiny_config();
    config.q = 0;
    CHECK_THROWS_AS((void)cbo::bo::bo_init(config, 2), std::invalid_argument);
    CHECK_THROWS_AS((void)cbo::bo::bo_init(tiny_config(), 0), std::invalid_argument);
}

TEST_CASE("a black box that returns non-finite values fails the run loudly") {
    BoConfig config = tiny_config();
    config.n_steps = 1;
    CHECK_THROWS_AS((void)run_bo(config, 2,
                                 [](const Vector&) {
                                     return std::numeric_limits<double>::quiet_NaN();
                                 }),
                    std::runtime_error);
}

TEST_SUITE_END();
