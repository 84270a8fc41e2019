#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace drb {

/// Regularized upper incomplete gamma Q(a, x); the chi-square survival
/// function is Q(df/2, x/2).
double gamma_q(double a, double x);

/// P(X >= stat) for X ~ chi-square(df).
double chi_square_pvalue(double stat, std::uint64_t df);

struct chi_square_result {
    double statistic = 0.0;
    std::uint64_t df = 0;
    double p_value = 1.0;
};

/// Pearson statistic of observed counts against per-cell expectations.
/// Throws usage_error if any expectation is <= 0 (test-setup error).
chi_square_result pearson_chi_square(std::span<const std::uint64_t> observed,
                                     std::span<const double> expected);

/// Uniform-expectation convenience: every cell expects total/cells.
chi_square_result pearson_uniform(std::span<const std::uint64_t> observed);

} // namespace drb
