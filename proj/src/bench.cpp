#include "cbo/bench.hpp"

#include <cmath>
#include <numbers>

namespace cbo::bench {
namespace {

constexpr double kBoxSlack = 1e-12;

// Per-dimension Styblinski-Tang minimiser and minimum of t^4/2 - 8t^2 + 5t/2,
// refined by a bounded 1-D search followed by Newton polishing.
constexpr double kStangArgmin = -2.9035340277711771;
constexpr double kStangMin = -39.166165703771412;

double ackley_raw(const Vector& x) {
    const double d = static_cast<double>(x.size());
    constexpr double a = 20.0;
    constexpr double b = 0.2;
    constexpr double c = 2.0 * std::numbers::pi;
    const double root = std::sqrt(x.squaredNorm() / d);
    double cos_sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) cos_sum += std::cos(c * x[i]);
    return -a * std::exp(-b * root) - std::exp(cos_sum / d) + a + std::numbers::e;
}

double levy_raw(const Vector& x) {
    constexpr double pi = std::numbers::pi;
    const Eigen::Index d = x.size();
    const auto w = [&](Eigen::Index i) { return 1.0 + (x[i] - 1.0) / 4.0; };
    const double s1 = std::sin(pi * w(0));
    double sum = s1 * s1;
    for (Eigen::Index i = 0; i + 1 < d; ++i) {
        const double wi = w(i);
        const double s = std::sin(pi * wi + 1.0);
        sum += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * s * s);
    }
    const double wd = w(d - 1);
    const double s2 = std::sin(2.0 * pi * wd);
    return sum + (wd - 1.0) * (wd - 1.0) * (1.0 + s2 * s2);
}

double powell_raw(const Vector& x) {
    double sum = 0.0;
    for (Eigen::Index g = 0; g < x.size() / 4; ++g) {
        const double x1 = x[4 * g], x2 = x[4 * g + 1];
        const double x3 = x[4 * g + 2], x4 = x[4 * g + 3];
        const double t1 = x1 + 10.0 * x2;
        const double t2 = x3 - x4;
        const double t3 = x2 - 2.0 * x3;
        const double t4 = x1 - x4;
        sum += t1 * t1 + 5.0 * t2 * t2 + t3 * t3 * t3 * t3 + 10.0 * t4 * t4 * t4 * t4;
    }
    return sum;
}

double dixon_price_raw(const Vector& x) {
    double sum = (x[0] - 1.0) * (x[0] - 1.0);
    for (Eigen::Index i = 1; i < x.size(); ++i) {
        const double t = 2.0 * x[i] * x[i] - x[i - 1];
        sum += static_cast<double>(i + 1) * t * t;
    }
    return sum;
}

double styblinski_tang_raw(const Vector& x) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double t = x[i];
        const double t2 = t * t;
        sum += t2 * t2 - 16.0 * t2 + 5.0 * t;
    }
    return 0.5 * sum;
}

void check_box(const Vector& x, const Vector& lower, const Vector& upper,
               const char* where) {
    if (x.size() != lower.size())
        throw linalg::DimensionMismatch(std::string(where) + ": point dimension mismatch");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || x[i] < lower[i] - kBoxSlack ||
            x[i] > upper[i] + kBoxSlack)
            throw OutOfDomain(std::string(where) + ": coordinate " + std::to_string(i) +
                              " outside the box");
    }
}

SyntheticTask boxed(const std::string& name, int dim, double lo, double hi) {
    SyntheticTask task;
    task.name = name;
    task.dim = dim;
    task.lower = Vector::Constant(dim, lo);
    task.upper = Vector::Constant(dim, hi);
    return task;
}

}  // namespace

const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {
        "levy", "ackley", "powell", "dixon_price", "styblinski_tang"};
    return names;
}

SyntheticTask make_task(const std::string& name, int dim) {
    if (dim <= 0) throw std::invalid_argument("make_task: dimension must be positive");
    if (name == "levy") {
        SyntheticTask task = boxed(name, dim, -10.0, 10.0);
        task.optimum_value = 0.0;
        task.optimum_point = Vector::Ones(dim);
        return task;
    }
    if (name == "ackley") {
        SyntheticTask task = boxed(name, dim, -32.768, 32.768);
        task.optimum_value = 0.0;
        task.optimum_point = Vector::Zero(dim);
        return task;
    }
    if (name == "powell") {
        if (dim % 4 != 0)
            throw std::invalid_argument("make_task: powell needs a multiple-of-4 dimension");
        SyntheticTask task = boxed(name, dim, -4.0, 5.0);
        task.optimum_value = 0.0;
        task.optimum_point = Vector::Zero(dim);
        return task;
    }
    if (name == "dixon_price") {
        SyntheticTask task = boxed(name, dim, -10.0, 10.0);
        task.optimum_value = 0.0;
        task.optimum_point = Vector(dim);
        for (int i = 1; i <= dim; ++i) {
            const double p = std::pow(2.0, static_cast<double>(i));
            task.optimum_point[i - 1] = std::pow(2.0, -(p - 2.0) / p);
        }
        return task;
    }
    if (name == "styblinski_tang") {
        SyntheticTask task = boxed(name, dim, -5.0, 5.0);
        task.optimum_value = -kStangMin * dim;
        task.optimum_point = Vector::Constant(dim, kStangArgmin);
        return task;
    }
    throw std::invalid_argument("make_task: unknown task '" + name + "'");
}

double evaluate(const SyntheticTask& task, const Vector& x_native) {
    check_box(x_native, task.lower, task.upper, "evaluate");
    double raw = 0.0;
    if (task.name == "levy")
        raw = levy_raw(x_native);
    else if (task.name == "ackley")
        raw = ackley_raw(x_native);
    else if (task.name == "powell")
        raw = powell_raw(x_native);
    else if (task.name == "dixon_price")
        raw = dixon_price_raw(x_native);
    else if (task.name == "styblinski_tang")
        raw = styblinski_tang_raw(x_native);
    else
        throw std::invalid_argument("evaluate: unknown task '" + task.name + "'");
    return -raw;
}

Vector to_unit(const SyntheticTask& task, const Vector& x_native) {
    check_box(x_native, task.lower, task.upper, "to_unit");
    return (x_native - task.lower).cwiseQuotient(task.upper - task.lower);
}

Vector from_unit(const SyntheticTask& task, const Vector& u) {
    check_box(u, Vector::Zero(task.dim), Vector::Ones(task.dim), "from_unit");
    return task.lower + u.cwiseProduct(task.upper - task.lower);
}

double evaluate_unit(const SyntheticTask& task, const Vector& u) {
    return evaluate(task, from_unit(task, u));
}

std::vector<RegretRow> normalised_regret(const std::vector<double>& incumbents,
                                         const SyntheticTask& task) {
    if (incumbents.empty())
        throw std::invalid_argument("normalised_regret: empty incumbent trace");
    const double gap0 = std::abs(incumbents.front() - task.optimum_value);
    std::vector<RegretRow> rows;
    rows.reserve(incumbents.size());
    for (std::size_t t = 0; t < incumbents.size(); ++t) {
        RegretRow row;
        row.step = static_cast<int>(t);
        row.incumbent = incumbents[t];
        if (gap0 == 0.0)
            row.regret = 0.0;
        else
            row.regret = std::abs(incumbents[t] - task.optimum_value) / gap0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace cbo::bench
