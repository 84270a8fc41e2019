#include "metrics/stats.hpp"

#include "core/errors.hpp"

#include <cmath>
#include <limits>

namespace drb {

namespace {

// Lower regularized gamma P(a, x) by series expansion; converges for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 10000; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16)
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) by Lentz continued fraction; for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 10000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16)
            break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0)
        throw usage_error("gamma_q: domain error");
    if (x == 0.0)
        return 1.0;
    if (x < a + 1.0)
        return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double chi_square_pvalue(double stat, std::uint64_t df) {
    if (df == 0)
        return 1.0;
    return gamma_q(static_cast<double>(df) / 2.0, stat / 2.0);
}

chi_square_result pearson_chi_square(std::span<const std::uint64_t> observed,
                                     std::span<const double> expected) {
    if (observed.size() != expected.size() || observed.empty())
        throw usage_error("pearson_chi_square: observed/expected size mismatch");
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!(expected[i] > 0.0))
            throw usage_error("pearson_chi_square: zero expected count in cell " +
                              std::to_string(i));
        const double diff = static_cast<double>(observed[i]) - expected[i];
        stat += diff * diff / expected[i];
    }
    chi_square_result res;
    res.statistic = stat;
    res.df = observed.size() - 1;
    res.p_value = chi_square_pvalue(stat, res.df);
    return res;
}

chi_square_result pearson_uniform(std::span<const std::uint64_t> observed) {
    std::uint64_t total = 0;
    for (const auto o : observed)
        total += o;
    std::vector<double> expected(observed.size(),
                                 static_cast<double>(total) / static_cast<double>(observed.size()));
    return pearson_chi_square(observed, expected);
}

} // namespace drb
