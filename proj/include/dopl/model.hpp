#pragma once

#include <Eigen/Core>

#include "dopl/params.hpp"

namespace dopl {

/// Logistic cdf 1/(1+exp(-u)), exact 0/1 at -inf/+inf.
inline double logistic_cdf(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    double e = std::exp(u);
    return e / (1.0 + e);
}

/// Lambda(a) - Lambda(b) for a >= b, computed without cancellation when a ~ b:
///   Lambda(a) - Lambda(b) = -expm1(b - a) * Lambda(a) * Lambda(-b).
/// Handles a = +inf and b = -inf exactly.
inline double logistic_cdf_diff(double a, double b) {
    if (a == kInf) return logistic_cdf(-b);   // 1 - Lambda(b)
    if (b == -kInf) return logistic_cdf(a);
    return -std::expm1(b - a) * logistic_cdf(a) * logistic_cdf(-b);
}

/// Single index z(y_prev, x_t, theta): x_t'beta + gamma_{y_prev}, plus the
/// interaction term gamma_{y_prev} * x_t'delta_{y_prev} when requested.
double single_index(int y_prev, const Eigen::VectorXd& x_t, const Params& params,
                    const IndexSpec& spec = {});

/// Probability of each outcome level given the previous level, covariates,
/// and fixed effect alpha (alpha may be +-inf, handled exactly).
Eigen::VectorXd transition_probs(int y_prev, const Eigen::VectorXd& x_t, double alpha,
                                 const Params& params, const IndexSpec& spec = {});

/// Probability of the outcome path y (length T) given y0, the T x K covariate
/// matrix, and fixed effect alpha.
double path_probability(int y0, const std::vector<int>& y, const Eigen::MatrixXd& x,
                        double alpha, const Params& params, const IndexSpec& spec = {});

}  // namespace dopl
