#include "cbo/bo.hpp"

#include "cbo/acq_grad.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cbo::bo {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

//! Full-pool estimate used as the shared scorer for restart selection and
//! the final candidate re-selection.
double pool_value(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                  const acq::SamplePool& pool, const Matrix& batch) {
    const gp::BatchPosterior post = gp::posterior(model, batch, false);
    return acq::acq_fsm(spec.kind, post, pool, spec);
}

struct Candidate {
    Matrix batch;
    int restart = -1;
};

bool form_supported(const OptimiserInfo& info, acq::Form form) {
    return std::find(info.forms.begin(), info.forms.end(), form) != info.forms.end();
}

}  // namespace

const std::vector<OptimiserInfo>& optimiser_registry() {
    static const std::vector<OptimiserInfo> registry = [] {
        std::vector<OptimiserInfo> all;
        for (int i = 0; i < opt::kFirstOrderAlgoCount; ++i) {
            const auto algo = static_cast<opt::FirstOrderAlgo>(i);
            all.push_back({opt::first_order_name(algo), OptimiserFamily::FIRST_ORDER,
                           {acq::Form::FSM, acq::Form::ERM}});
        }
        for (int i = 0; i < opt::kCompAlgoCount; ++i) {
            const auto algo = static_cast<opt::CompAlgo>(i);
            all.push_back({opt::comp_name(algo), OptimiserFamily::COMPOSITIONAL,
                           {acq::Form::COMP, acq::Form::COMP_ME}});
        }
        all.push_back({"lbfgs", OptimiserFamily::LBFGS, {acq::Form::FSM}});
        all.push_back({"clbfgs", OptimiserFamily::CLBFGS, {acq::Form::COMP}});
        all.push_back({"random-search", OptimiserFamily::RANDOM_SEARCH, {acq::Form::FSM}});
        all.push_back({"cma-es", OptimiserFamily::CMA_ES, {acq::Form::FSM}});
        all.push_back({"de", OptimiserFamily::DE, {acq::Form::FSM}});
        return all;
    }();
    return registry;
}

const OptimiserInfo& optimiser_info(const std::string& name) {
    for (const OptimiserInfo& info : optimiser_registry())
        if (info.name == name) return info;
    throw std::invalid_argument("optimiser_info: unknown optimiser '" + name + "'");
}

OptimiserConfig make_optimiser(const std::string& name) {
    return make_optimiser(name, optimiser_info(name).forms.front());
}

OptimiserConfig make_optimiser(const std::string& name, acq::Form form) {
    const OptimiserInfo& info = optimiser_info(name);
    if (!form_supported(info, form))
        throw std::invalid_argument("make_optimiser: form " +
                                    std::string(acq::form_name(form)) +
                                    " is not supported by '" + name + "'");
    OptimiserConfig config;
    config.name = name;
    config.form = form;
    if (info.family == OptimiserFamily::FIRST_ORDER)
        config.first = opt::FirstOrderParams::defaults_for(opt::first_order_from_name(name));
    else if (info.family == OptimiserFamily::COMPOSITIONAL)
        config.comp = opt::CompParams::defaults_for(opt::comp_from_name(name));
    return config;
}

void validate_config(const BoConfig& config, int dim) {
    if (dim < 1) throw std::invalid_argument("validate_config: dimension must be positive");
    if (config.q < 1) throw std::invalid_argument("validate_config: q must be >= 1");
    if (config.n_steps < 0) throw std::invalid_argument("validate_config: n_steps must be >= 0");
    if (config.t_opt < 0) throw std::invalid_argument("validate_config: t_opt must be >= 0");
    if (config.minibatch < 1)
        throw std::invalid_argument("validate_config: minibatch must be >= 1");
    if (config.pool_size < 1)
        throw std::invalid_argument("validate_config: pool_size must be >= 1");
    if (config.n_restarts < 1)
        throw std::invalid_argument("validate_config: n_restarts must be >= 1");
    if (config.n_raw < config.n_restarts)
        throw std::invalid_argument("validate_config: n_raw must be >= n_restarts");
    if (config.n_init < 1) throw std::invalid_argument("validate_config: n_init must be >= 1");
    if (!(config.acq.tau > 0.0))
        throw std::invalid_argument("validate_config: tau must be positive");
    if (config.acq.beta < 0.0)
        throw std::invalid_argument("validate_config: beta must be non-negative");
    const OptimiserInfo& info = optimiser_info(config.optimiser.name);
    if (!form_supported(info, config.optimiser.form))
        throw std::invalid_argument("validate_config: form " +
                                    std::string(acq::form_name(config.optimiser.form)) +
                                    " is not supported by '" + config.optimiser.name + "'");
    if (info.family == OptimiserFamily::DE && config.n_restarts < 3)
        throw std::invalid_argument("validate_config: de needs n_restarts >= 3");
    if (info.family == OptimiserFamily::CMA_ES && config.optimiser.cma_offspring < 3)
        throw std::invalid_argument("validate_config: cma-es needs at least 3 offspring");
}

BoState bo_init(const BoConfig& config, int dim) {
    validate_config(config, dim);
    BoState state;
    state.config = config;
    state.dim = dim;
    state.inputs = Matrix(0, dim);
    state.outputs = Vector(0);
    return state;
}

std::vector<int> boltzmann_select(const Vector& values, int k, Rng& rng, bool top_k) {
    const int n = static_cast<int>(values.size());
    if (k < 1 || k > n)
        throw std::invalid_argument("boltzmann_select: need 1 <= k <= values.size()");
    for (int i = 0; i < n; ++i)
        if (!std::isfinite(values[i]))
            throw std::invalid_argument("boltzmann_select: non-finite value");
    if (k == n) {
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    if (top_k) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return values[a] > values[b]; });
        order.resize(static_cast<std::size_t>(k));
        return order;
    }
    const double mean = values.mean();
    const double sd = std::sqrt((values.array() - mean).square().mean());
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    const bool flat = sd <= 1e-12 * scale;

    std::vector<double> weight(static_cast<std::size_t>(n), 1.0);
    if (!flat)
        for (int i = 0; i < n; ++i)
            weight[static_cast<std::size_t>(i)] = std::exp((values[i] - mean) / sd);

    std::vector<int> selected;
    selected.reserve(static_cast<std::size_t>(k));
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    if (!flat) {
        const int arg = acq::argmax_first(values);
        selected.push_back(arg);
        taken[static_cast<std::size_t>(arg)] = 1;
    }
    while (static_cast<int>(selected.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            if (!taken[static_cast<std::size_t>(i)]) total += weight[static_cast<std::size_t>(i)];
        const double u = uniform01(rng) * total;
        double cum = 0.0;
        int pick = -1;
        for (int i = 0; i < n; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            cum += weight[static_cast<std::size_t>(i)];
            pick = i;
            if (cum > u) break;
        }
        selected.push_back(pick);
        taken[static_cast<std::size_t>(pick)] = 1;
    }
    return selected;
}

RestartSelection select_restarts(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                                 const acq::SamplePool& pool, int q, int n_raw, int n_restarts,
                                 Rng& rng, bool top_k) {
    if (n_raw < n_restarts || n_restarts < 1)
        throw std::invalid_argument("select_restarts: need n_raw >= n_restarts >= 1");
    const int d = model.data.dim();
    std::vector<Matrix> raw;
    raw.reserve(static_cast<std::size_t>(n_raw));
    Vector values(n_raw);
    for (int i = 0; i < n_raw; ++i) {
        Matrix batch(q, d);
        for (int p = 0; p < q; ++p)
            for (int a = 0; a < d; ++a) batch(p, a) = uniform01(rng);
        values[i] = pool_value(model, spec, pool, batch);
        raw.push_back(std::move(batch));
    }
    const int arg = acq::argmax_first(values);

    RestartSelection sel;
    sel.best_raw = raw[static_cast<std::size_t>(arg)];
    sel.best_raw_value = values[arg];
    for (const int i : boltzmann_select(values, n_restarts, rng, top_k))
        sel.batches.push_back(raw[static_cast<std::size_t>(i)]);
    return sel;
}

opt::BatchResult maximise_acquisition(const gp::GpModel& model, const acq::AcquisitionSpec& spec,
                                      const acq::SamplePool& pool, const RestartSelection& sel,
                                      const BoConfig& config, std::uint64_t step_seed) {
    const OptimiserConfig& oc = config.optimiser;
    const OptimiserInfo& info = optimiser_info(oc.name);
    if (!form_supported(info, oc.form))
        throw std::invalid_argument("maximise_acquisition: form not supported by optimiser");
    if (sel.batches.empty())
        throw std::invalid_argument("maximise_acquisition: no restart batches");
    const int q = static_cast<int>(sel.batches.front().rows());
    const int d = static_cast<int>(sel.batches.front().cols());
    const int n_restarts = static_cast<int>(sel.batches.size());

    const auto restart_rng = [&](int r) {
        return make_rng(mix_seed(step_seed, 1000 + static_cast<std::uint64_t>(r)));
    };
    const opt::Objective value_at = [&](const Vector& x) {
        return pool_value(model, spec, pool, acq::unflatten(x, q, d));
    };

    std::vector<Candidate> candidates;
    switch (info.family) {
        case OptimiserFamily::FIRST_ORDER: {
            const opt::FirstOrderAlgo algo = opt::first_order_from_name(oc.name);
            const acq::SamplePool* p = (oc.form == acq::Form::ERM) ? nullptr : &pool;
            for (int r = 0; r < n_restarts; ++r) {
                Rng rng = restart_rng(r);
                try {
                    const opt::BatchResult res =
                        opt::run_first_order(model, spec, {sel.batches[static_cast<std::size_t>(r)]},
                                             algo, oc.first, config.t_opt, config.minibatch, p, rng);
                    candidates.push_back({res.batch, r});
                } catch (const std::exception&) {
                }
            }
            break;
        }
        case OptimiserFamily::COMPOSITIONAL: {
            const opt::CompAlgo algo = opt::comp_from_name(oc.name);
            const bool me = oc.form == acq::Form::COMP_ME;
            const acq::SamplePool* p = me ? nullptr : &pool;
            for (int r = 0; r < n_restarts; ++r) {
                Rng rng = restart_rng(r);
                try {
                    const opt::BatchResult res = opt::run_comp(
                        model, spec, {sel.batches[static_cast<std::size_t>(r)]}, algo, oc.comp,
                        config.t_opt, config.minibatch, config.minibatch, p, rng, me);
                    candidates.push_back({res.batch, r});
                } catch (const std::exception&) {
                }
            }
            break;
        }
        case OptimiserFamily::LBFGS: {
            opt::LbfgsOptions opts = oc.lbfgs;
            opts.max_steps = config.t_opt;
            const opt::ValueGrad objective = [&](const Vector& x, Vector& grad) {
                const Matrix xq = acq::unflatten(x, q, d);
                const gp::BatchPosterior post = gp::posterior(model, xq, true);
                const acq::AcqGradient g = acq::grad_fsm_at(spec.kind, post, pool.z, spec);
                grad = g.g;
                return g.value;
            };
            const Vector lower = Vector::Zero(q * d);
            const Vector upper = Vector::Ones(q * d);
            for (int r = 0; r < n_restarts; ++r) {
                try {
                    const opt::LbfgsResult res = opt::lbfgs_run(
                        objective, acq::flatten(sel.batches[static_cast<std::size_t>(r)]), lower,
                        upper, opts);
                    candidates.push_back({acq::unflatten(res.x, q, d), r});
                } catch (const std::exception&) {
                }
            }
            break;
        }
        case OptimiserFamily::CLBFGS: {
            opt::LbfgsOptions opts = oc.lbfgs;
            opts.max_steps = config.t_opt;
            for (int r = 0; r < n_restarts; ++r) {
                Rng rng = restart_rng(r);
                try {
                    const opt::LbfgsResult res =
                        opt::clbfgs_run(model, spec, sel.batches[static_cast<std::size_t>(r)],
                                        config.t_opt, config.minibatch, config.minibatch, pool,
                                        rng, opts);
                    candidates.push_back({acq::unflatten(res.x, q, d), r});
                } catch (const std::exception&) {
                }
            }
            break;
        }
        case OptimiserFamily::RANDOM_SEARCH: {
            const long budget = static_cast<long>(config.n_restarts) * config.t_opt;
            if (budget > 0) {
                Rng rng = make_rng(mix_seed(step_seed, 4));
                try {
                    const opt::ZeroResult res = opt::random_search(value_at, q * d, budget, rng);
                    candidates.push_back({acq::unflatten(res.x, q, d), 0});
                } catch (const std::exception&) {
                }
            }
            break;
        }
        case OptimiserFamily::CMA_ES: {
            if (config.t_opt > 0) {
                Rng rng = make_rng(mix_seed(step_seed, 4));
                opt::CmaState state = opt::cma_init(acq::flatten(sel.best_raw), oc.cma_step0);
                try {
                    for (int g = 0; g < config.t_opt; ++g)
                        opt::cma_step(state, value_at, oc.cma_offspring, rng);
                } catch (const std::exception&) {
                }
                if (state.generation > 0)
                    candidates.push_back({acq::unflatten(state.best_x, q, d), 0});
            }
            break;
        }
        case OptimiserFamily::DE: {
            if (config.t_opt > 0) {
                Rng rng = make_rng(mix_seed(step_seed, 4));
                try {
                    Matrix members(n_restarts, q * d);
                    for (int r = 0; r < n_restarts; ++r)
                        members.row(r) =
                            acq::flatten(sel.batches[static_cast<std::size_t>(r)]).transpose();
                    opt::DePopulation pop =
                        opt::de_init(members, value_at, oc.de_f_scale, oc.de_p_mutation);
                    for (int g = 0; g < config.t_opt; ++g) opt::de_step(pop, value_at, rng);
                    candidates.push_back({acq::unflatten(pop.best_x, q, d), 0});
                } catch (const std::exception&) {
                }
            }
            break;
        }
    }

    opt::BatchResult best;
    best.batch = sel.best_raw;
    best.value = sel.best_raw_value;
    best.restart = -1;
    for (const Candidate& candidate : candidates) {
        double value = 0.0;
        try {
            value = pool_value(model, spec, pool, candidate.batch);
        } catch (const std::exception&) {
            continue;
        }
        if (std::isfinite(value) && value > best.value) {
            best.batch = candidate.batch;
            best.value = value;
            best.restart = candidate.restart;
        }
    }
    return best;
}

BoStepRow bo_step(BoState& state, const BlackBox& black_box, Rng& rng) {
    const BoConfig& config = state.config;
    if (state.n() < 1) throw std::invalid_argument("bo_step: dataset is empty");
    const std::uint64_t step_seed = rng();
    const int d = state.dim;
    const int q = config.q;

    BoStepRow row;
    row.step = ++state.step;

    const auto fit_start = Clock::now();
    const gp::Dataset data = gp::Dataset::standardise(state.inputs, state.outputs);
    Rng fit_rng = make_rng(mix_seed(step_seed, 1));
    const gp::GpModel model = gp::fit(data, gp::KernelParams::defaults(d), config.fit, fit_rng);
    row.fit_ms = elapsed_ms(fit_start);
    row.fit_nlml = gp::nlml(data, model.params);

    acq::AcquisitionSpec spec = config.acq;
    spec.form = config.optimiser.form;
    spec.incumbent = model.incumbent;

    const acq::SamplePool pool =
        acq::SamplePool::draw(config.pool_size, q, mix_seed(step_seed, 2));
    Rng select_rng = make_rng(mix_seed(step_seed, 3));
    const RestartSelection sel = select_restarts(model, spec, pool, q, config.n_raw,
                                                 config.n_restarts, select_rng,
                                                 config.top_k_restarts);
    row.raw_best_acq = sel.best_raw_value;

    const auto opt_start = Clock::now();
    const opt::BatchResult result =
        maximise_acquisition(model, spec, pool, sel, config, step_seed);
    row.opt_ms = elapsed_ms(opt_start);
    row.acq_value = result.value;
    row.restart = result.restart;
    row.batch = result.batch;

    row.raw_values = Vector(q);
    for (int p = 0; p < q; ++p) {
        const double y = black_box(result.batch.row(p).transpose());
        if (!std::isfinite(y))
            throw std::runtime_error("bo_step: black box returned a non-finite value");
        row.raw_values[p] = y;
    }

    const int n_old = state.n();
    state.inputs.conservativeResize(n_old + q, d);
    state.outputs.conservativeResize(n_old + q);
    state.inputs.bottomRows(q) = result.batch;
    state.outputs.tail(q) = row.raw_values;
    state.incumbent = std::max(state.incumbent, row.raw_values.maxCoeff());
    row.incumbent = state.incumbent;
    return row;
}

BoTrace run_bo(const BoConfig& config, int dim, const BlackBox& black_box) {
    BoState state = bo_init(config, dim);
    Rng rng = make_rng(config.seed);

    Matrix init(config.n_init, dim);
    for (int i = 0; i < config.n_init; ++i)
        for (int a = 0; a < dim; ++a) init(i, a) = uniform01(rng);
    Vector init_values(config.n_init);
    for (int i = 0; i < config.n_init; ++i) {
        const double y = black_box(init.row(i).transpose());
        if (!std::isfinite(y))
            throw std::runtime_error("run_bo: black box returned a non-finite value");
        init_values[i] = y;
    }
    state.inputs = init;
    state.outputs = init_values;
    state.incumbent = init_values.maxCoeff();

    BoTrace trace;
    trace.rows.reserve(static_cast<std::size_t>(config.n_steps) + 1);
    BoStepRow first;
    first.step = 0;
    first.batch = init;
    first.raw_values = init_values;
    first.incumbent = state.incumbent;
    trace.rows.push_back(std::move(first));

    for (int t = 0; t < config.n_steps; ++t)
        trace.rows.push_back(bo_step(state, black_box, rng));

    trace.inputs = state.inputs;
    trace.outputs = state.outputs;
    return trace;
}

}  // namespace cbo::bo
