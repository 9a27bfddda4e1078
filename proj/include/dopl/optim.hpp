#pragma once

#include <functional>

#include <Eigen/Core>

#include "dopl/common.hpp"

namespace dopl {

/// Objective callback: returns f(x) and, when grad != nullptr, fills the
/// gradient. Return +inf to reject a point (line search backs off).
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct OptimOptions {
    int max_iter = 500;
    double grad_tol = 1e-8;   // stop when ||grad||_inf < grad_tol
    double step_tol = 1e-14;  // stop when the accepted step is this small
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = kInf;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
};

/// BFGS with backtracking Armijo line search. Robust to +inf objective
/// values away from the current iterate.
OptimResult minimize_bfgs(const Objective& fg, const Eigen::VectorXd& x0,
                          const OptimOptions& opts = {});

/// Central-difference gradient with per-coordinate step max(h, h*|x_k|).
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-5);

/// Forward-difference gradient reusing a precomputed f(x); half the
/// evaluations of the central rule at first-order accuracy.
Eigen::VectorXd numeric_gradient_forward(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double f0, double h = 1e-6);

/// Central-difference Jacobian of a vector-valued map, same stepping rule.
Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-5);

/// Monotone-threshold reparametrization. Thresholds are stored as a pinned
/// entry (index `pin`, value `pin_value`) plus log-gaps on either side, so
/// any free vector maps to a strictly increasing threshold vector.
Eigen::VectorXd lambda_from_free(const Eigen::VectorXd& u, int pin, double pin_value);
Eigen::VectorXd free_from_lambda(const Eigen::VectorXd& lambda, int pin);

}  // namespace dopl
