#include "cbo/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace cbo::runner {
namespace {

using nlohmann::json;

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

//! Keeps status strings CSV-safe.
std::string sanitise(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void apply_hyper(bo::OptimiserConfig& oc, const std::string& key, const json& value) {
    const auto num = [&] { return value.get<double>(); };
    const auto integer = [&] { return value.get<int>(); };
    bool hit = false;
    const auto both = [&](double& first_field, double& comp_field) {
        first_field = num();
        comp_field = num();
        hit = true;
    };
    const auto one = [&](auto& field) {
        field = static_cast<std::remove_reference_t<decltype(field)>>(num());
        hit = true;
    };
    if (key == "lr") both(oc.first.lr, oc.comp.lr);
    else if (key == "lr_decay") both(oc.first.lr_decay, oc.comp.lr_decay);
    else if (key == "beta1") both(oc.first.beta1, oc.comp.beta1);
    else if (key == "beta2") both(oc.first.beta2, oc.comp.beta2);
    else if (key == "eps") both(oc.first.eps, oc.comp.eps);
    else if (key == "mu") both(oc.first.mu, oc.comp.mu);
    else if (key == "b1_scale") both(oc.first.b1_scale, oc.comp.b1_scale);
    else if (key == "c_gamma") both(oc.first.c_gamma, oc.comp.c_gamma);
    else if (key == "p2") both(oc.first.p2, oc.comp.p2);
    else if (key == "p_eta") both(oc.first.p_eta, oc.comp.p_eta);
    else if (key == "gamma") one(oc.first.gamma);
    else if (key == "momentum") one(oc.first.momentum);
    else if (key == "dampening") one(oc.first.dampening);
    else if (key == "weight_decay") one(oc.first.weight_decay);
    else if (key == "shrink") one(oc.first.shrink);
    else if (key == "grow") one(oc.first.grow);
    else if (key == "step_min") one(oc.first.step_min);
    else if (key == "step_max") one(oc.first.step_max);
    else if (key == "nesterov") {
        oc.first.nesterov = value.get<bool>();
        hit = true;
    } else if (key == "lr_pow") one(oc.comp.lr_pow);
    else if (key == "beta") one(oc.comp.beta);
    else if (key == "beta_pow") one(oc.comp.beta_pow);
    else if (key == "nasa_a") one(oc.comp.nasa_a);
    else if (key == "nasa_b") one(oc.comp.nasa_b);
    else if (key == "nasa_beta") one(oc.comp.nasa_beta);
    else if (key == "nasa_gamma") one(oc.comp.nasa_gamma);
    else if (key == "history") {
        oc.lbfgs.history = integer();
        hit = true;
    } else if (key == "curvature_min") one(oc.lbfgs.curvature_min);
    else if (key == "armijo_c") one(oc.lbfgs.armijo_c);
    else if (key == "max_halvings") {
        oc.lbfgs.max_halvings = integer();
        hit = true;
    } else if (key == "step_tol") one(oc.lbfgs.step_tol);
    else if (key == "grad_tol") one(oc.lbfgs.grad_tol);
    else if (key == "cma_offspring") {
        oc.cma_offspring = integer();
        hit = true;
    } else if (key == "cma_step0") one(oc.cma_step0);
    else if (key == "de_f_scale") one(oc.de_f_scale);
    else if (key == "de_p_mutation") one(oc.de_p_mutation);
    if (!hit) throw std::invalid_argument("parse_experiment: unknown hyperparameter '" + key + "'");
}

TupleConfig parse_tuple(const json& spec) {
    static const std::set<std::string> known = {
        "id",        "task",       "dim",      "acq",        "form",          "optimizer",
        "optimiser", "q",          "steps",    "t_opt",      "minibatch",     "pool",
        "n_raw",     "n_restarts", "n_init",   "top_k",      "beta",          "tau",
        "fit_restarts", "fit_max_steps", "hyper"};
    for (const auto& item : spec.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("parse_experiment: unknown tuple key '" + item.key() + "'");

    TupleConfig tuple;
    if (!spec.contains("task")) throw std::invalid_argument("parse_experiment: tuple needs a task");
    tuple.task = spec.at("task").get<std::string>();
    if (!spec.contains("dim")) throw std::invalid_argument("parse_experiment: tuple needs a dim");
    tuple.dim = spec.at("dim").get<int>();
    if (spec.contains("id")) tuple.tuple_id = spec.at("id").get<std::string>();

    std::string opt_name = "adam";
    if (spec.contains("optimizer")) opt_name = spec.at("optimizer").get<std::string>();
    if (spec.contains("optimiser")) opt_name = spec.at("optimiser").get<std::string>();
    if (spec.contains("form"))
        tuple.bo.optimiser =
            bo::make_optimiser(opt_name, acq::form_from_name(upper(spec.at("form").get<std::string>())));
    else
        tuple.bo.optimiser = bo::make_optimiser(opt_name);

    if (spec.contains("acq"))
        tuple.bo.acq.kind = acq::kind_from_name(upper(spec.at("acq").get<std::string>()));
    if (spec.contains("beta")) tuple.bo.acq.beta = spec.at("beta").get<double>();
    if (spec.contains("tau")) tuple.bo.acq.tau = spec.at("tau").get<double>();
    if (spec.contains("q")) tuple.bo.q = spec.at("q").get<int>();
    if (spec.contains("steps")) tuple.bo.n_steps = spec.at("steps").get<int>();
    if (spec.contains("t_opt")) tuple.bo.t_opt = spec.at("t_opt").get<int>();
    if (spec.contains("minibatch")) tuple.bo.minibatch = spec.at("minibatch").get<int>();
    if (spec.contains("pool")) tuple.bo.pool_size = spec.at("pool").get<int>();
    if (spec.contains("n_raw")) tuple.bo.n_raw = spec.at("n_raw").get<int>();
    if (spec.contains("n_restarts")) tuple.bo.n_restarts = spec.at("n_restarts").get<int>();
    if (spec.contains("n_init")) tuple.bo.n_init = spec.at("n_init").get<int>();
    if (spec.contains("top_k")) tuple.bo.top_k_restarts = spec.at("top_k").get<bool>();
    if (spec.contains("fit_restarts")) tuple.bo.fit.restarts = spec.at("fit_restarts").get<int>();
    if (spec.contains("fit_max_steps")) tuple.bo.fit.max_steps = spec.at("fit_max_steps").get<int>();
    if (spec.contains("hyper")) {
        const json& hyper = spec.at("hyper");
        if (!hyper.is_object())
            throw std::invalid_argument("parse_experiment: hyper must be an object");
        for (const auto& item : hyper.items()) apply_hyper(tuple.bo.optimiser, item.key(), item.value());
    }
    return tuple;
}

struct GroupKey {
    std::string optimiser;
    std::string form;

    bool operator<(const GroupKey& other) const {
        return std::tie(optimiser, form) < std::tie(other.optimiser, other.form);
    }
};

double median_of(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream stream(line);
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

std::string derive_tuple_id(const TupleConfig& tuple) {
    return lower(tuple.task) + "-" + std::to_string(tuple.dim) + "-" +
           lower(acq::kind_name(tuple.bo.acq.kind)) + "-" +
           lower(acq::form_name(tuple.bo.optimiser.form)) + "-" + lower(tuple.bo.optimiser.name);
}

void validate_experiment(ExperimentConfig& config) {
    if (config.jobs < 1) throw std::invalid_argument("validate_experiment: jobs must be >= 1");
    std::set<std::uint64_t> seen_seeds(config.seeds.begin(), config.seeds.end());
    if (seen_seeds.size() != config.seeds.size())
        throw std::invalid_argument("validate_experiment: seeds must be distinct");
    std::set<std::string> ids;
    for (TupleConfig& tuple : config.tuples) {
        (void)bench::make_task(tuple.task, tuple.dim);
        bo::validate_config(tuple.bo, tuple.dim);
        if (tuple.tuple_id.empty()) tuple.tuple_id = derive_tuple_id(tuple);
        if (!ids.insert(tuple.tuple_id).second)
            throw std::invalid_argument("validate_experiment: duplicate tuple id '" +
                                        tuple.tuple_id + "'");
    }
}

ExperimentConfig parse_experiment(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("parse_experiment: bad JSON: ") + e.what());
    }
    static const std::set<std::string> known = {"tuples", "seeds", "jobs"};
    for (const auto& item : doc.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("parse_experiment: unknown key '" + item.key() + "'");

    ExperimentConfig config;
    if (doc.contains("jobs")) config.jobs = doc.at("jobs").get<int>();
    if (doc.contains("seeds"))
        for (const json& s : doc.at("seeds")) config.seeds.push_back(s.get<std::uint64_t>());
    if (doc.contains("tuples"))
        for (const json& t : doc.at("tuples")) config.tuples.push_back(parse_tuple(t));
    validate_experiment(config);
    return config;
}

RunRecord run_one_with(const TupleConfig& tuple, std::uint64_t seed,
                       const bench::SyntheticTask& task, const bo::BlackBox& black_box) {
    RunRecord record;
    record.tuple_id = tuple.tuple_id.empty() ? derive_tuple_id(tuple) : tuple.tuple_id;
    record.task = tuple.task;
    record.dim = tuple.dim;
    record.acq = acq::kind_name(tuple.bo.acq.kind);
    record.form = acq::form_name(tuple.bo.optimiser.form);
    record.optimiser = tuple.bo.optimiser.name;
    record.seed = seed;
    try {
        bo::BoConfig config = tuple.bo;
        config.seed = mix_seed(hash_name(record.tuple_id), seed);
        const bo::BoTrace trace = bo::run_bo(config, tuple.dim, black_box);
        std::vector<double> incumbents;
        incumbents.reserve(trace.rows.size());
        for (const auto& row : trace.rows) incumbents.push_back(row.incumbent);
        const auto regret = bench::normalised_regret(incumbents, task);
        for (std::size_t i = 0; i < trace.rows.size(); ++i)
            record.steps.push_back({trace.rows[i].step, trace.rows[i].incumbent,
                                    regret[i].regret, trace.rows[i].opt_ms,
                                    trace.rows[i].fit_ms});
    } catch (const std::exception& e) {
        record.steps.clear();
        record.status = sanitise(std::string("error: ") + e.what());
    }
    return record;
}

RunRecord run_one(const TupleConfig& tuple, std::uint64_t seed) {
    bench::SyntheticTask task;
    try {
        task = bench::make_task(tuple.task, tuple.dim);
    } catch (const std::exception& e) {
        RunRecord record;
        record.tuple_id = tuple.tuple_id.empty() ? derive_tuple_id(tuple) : tuple.tuple_id;
        record.task = tuple.task;
        record.dim = tuple.dim;
        record.seed = seed;
        record.status = sanitise(std::string("error: ") + e.what());
        return record;
    }
    return run_one_with(tuple, seed, task,
                        [&task](const bo::Vector& u) { return bench::evaluate_unit(task, u); });
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& config) {
    ExperimentConfig resolved = config;
    validate_experiment(resolved);

    struct Job {
        const TupleConfig* tuple;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const TupleConfig& tuple : resolved.tuples)
        for (const std::uint64_t seed : resolved.seeds) jobs.push_back({&tuple, seed});

    std::vector<RunRecord> records(jobs.size());
    if (jobs.empty()) return records;

    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            records[i] = run_one(*jobs[i].tuple, jobs[i].seed);
        }
    };
    const int workers = std::max(1, std::min<int>(resolved.jobs, static_cast<int>(jobs.size())));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    return records;
}

Summary summarise(const std::vector<RunRecord>& records) {
    Summary summary;
    summary.total_runs = static_cast<int>(records.size());

    std::map<GroupKey, std::vector<const RunRecord*>> groups;
    for (const RunRecord& record : records) {
        if (!record.ok()) ++summary.failed_runs;
        groups[{record.optimiser, record.form}].push_back(&record);
    }

    // Comparison cells: one task instance at one seed, shared by the groups.
    struct CellKey {
        std::string task;
        int dim;
        std::string acq;
        std::uint64_t seed;

        bool operator<(const CellKey& other) const {
            return std::tie(task, dim, acq, seed) <
                   std::tie(other.task, other.dim, other.acq, other.seed);
        }
    };
    std::map<CellKey, std::map<GroupKey, double>> cells;
    for (const RunRecord& record : records) {
        if (!record.ok() || record.steps.empty()) continue;
        const CellKey cell{record.task, record.dim, record.acq, record.seed};
        const GroupKey group{record.optimiser, record.form};
        const double final_regret = record.steps.back().regret;
        auto [it, inserted] = cells[cell].try_emplace(group, final_regret);
        if (!inserted) it->second = std::min(it->second, final_regret);
    }
    std::map<GroupKey, double> wins;
    std::map<GroupKey, int> played;
    for (const auto& [cell, entries] : cells) {
        (void)cell;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [group, final_regret] : entries) best = std::min(best, final_regret);
        int n_ties = 0;
        for (const auto& [group, final_regret] : entries)
            if (final_regret == best) ++n_ties;
        for (const auto& [group, final_regret] : entries) {
            played[group] += 1;
            if (final_regret == best) wins[group] += 1.0 / n_ties;
        }
    }

    for (const auto& [key, group_records] : groups) {
        OptimiserSummary row;
        row.optimiser = key.optimiser;
        row.form = key.form;
        row.runs = static_cast<int>(group_records.size());
        std::vector<double> finals;
        std::size_t max_len = 0;
        for (const RunRecord* record : group_records) {
            if (!record->ok()) {
                ++row.failed;
                continue;
            }
            if (record->steps.empty()) continue;
            finals.push_back(record->steps.back().regret);
            max_len = std::max(max_len, record->steps.size());
        }
        double total = 0.0;
        for (const double f : finals) total += f;
        row.mean_final_regret =
            finals.empty() ? std::numeric_limits<double>::quiet_NaN() : total / finals.size();
        row.median_final_regret = median_of(finals);
        row.mean_regret_curve.assign(max_len, 0.0);
        std::vector<int> counts(max_len, 0);
        for (const RunRecord* record : group_records) {
            if (!record->ok()) continue;
            for (std::size_t i = 0; i < record->steps.size(); ++i) {
                row.mean_regret_curve[i] += record->steps[i].regret;
                ++counts[i];
            }
        }
        for (std::size_t i = 0; i < max_len; ++i)
            row.mean_regret_curve[i] =
                counts[i] > 0 ? row.mean_regret_curve[i] / counts[i]
                              : std::numeric_limits<double>::quiet_NaN();
        const int cells_played = played.count(key) ? played[key] : 0;
        row.best_share = cells_played > 0 ? 100.0 * wins[key] / cells_played : 0.0;
        summary.optimisers.push_back(std::move(row));
    }
    return summary;
}

void write_csv(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_csv: cannot open '" + path + "'");
    out << "tuple_id,task,dim,acq,form,optimizer,seed,step,incumbent,regret,opt_ms,fit_ms,status\n";
    for (const RunRecord& record : records) {
        const auto prefix = [&](std::ostream& os) {
            os << record.tuple_id << ',' << record.task << ',' << record.dim << ','
               << record.acq << ',' << record.form << ',' << record.optimiser << ','
               << record.seed << ',';
        };
        if (record.steps.empty()) {
            prefix(out);
            out << "-1,0,0,0,0," << record.status << "\n";
            continue;
        }
        for (const StepRecord& step : record.steps) {
            prefix(out);
            out << step.step << ',' << format_double(step.incumbent) << ','
                << format_double(step.regret) << ',' << format_double(step.opt_ms) << ','
                << format_double(step.fit_ms) << ',' << record.status << "\n";
        }
    }
    if (!out) throw IoError("write_csv: write failed for '" + path + "'");
}

std::vector<RunRecord> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("read_csv: empty file '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "tuple_id,task,dim,acq,form,optimizer,seed,step,incumbent,regret,opt_ms,fit_ms,status")
        throw IoError("read_csv: unexpected header in '" + path + "'");

    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 13) throw IoError("read_csv: malformed row '" + line + "'");
        const std::uint64_t seed = std::stoull(fields[6]);
        if (records.empty() || records.back().tuple_id != fields[0] ||
            records.back().seed != seed) {
            RunRecord record;
            record.tuple_id = fields[0];
            record.task = fields[1];
            record.dim = std::stoi(fields[2]);
            record.acq = fields[3];
            record.form = fields[4];
            record.optimiser = fields[5];
            record.seed = seed;
            record.status = fields[12];
            records.push_back(std::move(record));
        }
        const int step = std::stoi(fields[7]);
        if (step >= 0)
            records.back().steps.push_back({step, std::stod(fields[8]), std::stod(fields[9]),
                                            std::stod(fields[10]), std::stod(fields[11])});
    }
    return records;
}

std::string summary_to_json(const Summary& summary) {
    json doc;
    doc["total_runs"] = summary.total_runs;
    doc["failed_runs"] = summary.failed_runs;
    doc["optimisers"] = json::array();
    for (const OptimiserSummary& row : summary.optimisers) {
        json entry;
        entry["optimizer"] = row.optimiser;
        entry["form"] = row.form;
        entry["runs"] = row.runs;
        entry["failed"] = row.failed;
        entry["mean_final_regret"] = row.mean_final_regret;
        entry["median_final_regret"] = row.median_final_regret;
        entry["best_share_percent"] = row.best_share;
        entry["mean_regret_curve"] = row.mean_regret_curve;
        doc["optimisers"].push_back(std::move(entry));
    }
    return doc.dump(2);
}

void write_summary_json(const Summary& summary, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_summary_json: cannot open '" + path + "'");
    out << summary_to_json(summary) << "\n";
    if (!out) throw IoError("write_summary_json: write failed for '" + path + "'");
}

}  // namespace cbo::runner
