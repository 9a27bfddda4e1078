#include "dopl/optim.hpp"

#include <cmath>

namespace dopl {

OptimResult minimize_bfgs(const Objective& fg, const Eigen::VectorXd& x0,
                          const OptimOptions& opts) {
    const int d = static_cast<int>(x0.size());
    OptimResult res;
    res.x = x0;
    res.grad.resize(d);
    res.f = fg(res.x, &res.grad);
    if (!std::isfinite(res.f)) throw numerical_error("minimize_bfgs: objective not finite at start");

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);  // inverse Hessian approximation
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        if (res.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            res.converged = true;
            return res;
        }
        Eigen::VectorXd p = -H * res.grad;
        double slope = res.grad.dot(p);
        if (!(slope < 0)) {  // reset on loss of descent direction
            H.setIdentity();
            p = -res.grad;
            slope = res.grad.dot(p);
        }

        double step = 1.0;
        double f_new = kInf;
        Eigen::VectorXd x_new, g_new(d);
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + step * p;
            f_new = fg(x_new, nullptr);  // value-only while backtracking
            if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || step * p.lpNorm<Eigen::Infinity>() < opts.step_tol) {
            res.converged = res.grad.lpNorm<Eigen::Infinity>() < 1e3 * opts.grad_tol;
            return res;
        }
        f_new = fg(x_new, &g_new);

        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd yv = g_new - res.grad;
        double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            double rho = 1.0 / sy;
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
                rho * s * s.transpose();
        }
        res.x = std::move(x_new);
        res.f = f_new;
        res.grad = std::move(g_new);
    }
    res.iterations = opts.max_iter;
    res.converged = res.grad.lpNorm<Eigen::Infinity>() < 1e3 * opts.grad_tol;
    return res;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd g(d);
    Eigen::VectorXd xp = x;
    for (int k = 0; k < d; ++k) {
        double step = std::max(h, h * std::abs(x(k)));
        xp(k) = x(k) + step;
        double fp = f(xp);
        xp(k) = x(k) - step;
        double fm = f(xp);
        xp(k) = x(k);
        g(k) = (fp - fm) / (2 * step);
    }
    return g;
}

Eigen::VectorXd numeric_gradient_forward(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double f0, double h) {
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd g(d);
    Eigen::VectorXd xp = x;
    for (int k = 0; k < d; ++k) {
        double step = std::max(h, h * std::abs(x(k)));
        xp(k) = x(k) + step;
        g(k) = (f(xp) - f0) / step;
        xp(k) = x(k);
    }
    return g;
}

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
    const int d = static_cast<int>(x.size());
    Eigen::MatrixXd J;
    Eigen::VectorXd xp = x;
    for (int k = 0; k < d; ++k) {
        double step = std::max(h, h * std::abs(x(k)));
        xp(k) = x(k) + step;
        Eigen::VectorXd fp = f(xp);
        xp(k) = x(k) - step;
        Eigen::VectorXd fm = f(xp);
        xp(k) = x(k);
        if (J.size() == 0) J.resize(fp.size(), d);
        J.col(k) = (fp - fm) / (2 * step);
    }
    return J;
}

Eigen::VectorXd lambda_from_free(const Eigen::VectorXd& u, int pin, double pin_value) {
    const int m = static_cast<int>(u.size()) + 1;
    if (pin < 0 || pin >= m) throw invalid_input("lambda_from_free: pin index out of range");
    Eigen::VectorXd lam(m);
    lam(pin) = pin_value;
    for (int j = pin + 1; j < m; ++j) lam(j) = lam(j - 1) + std::exp(u(j - 1));
    for (int j = pin - 1; j >= 0; --j) lam(j) = lam(j + 1) - std::exp(u(j));
    return lam;
}

Eigen::VectorXd free_from_lambda(const Eigen::VectorXd& lambda, int pin) {
    const int m = static_cast<int>(lambda.size());
    if (pin < 0 || pin >= m) throw invalid_input("free_from_lambda: pin index out of range");
    Eigen::VectorXd u(m - 1);
    for (int j = pin + 1; j < m; ++j) {
        double gap = lambda(j) - lambda(j - 1);
        if (!(gap > 0)) throw invalid_input("free_from_lambda: thresholds not increasing");
        u(j - 1) = std::log(gap);
    }
    for (int j = pin - 1; j >= 0; --j) {
        double gap = lambda(j + 1) - lambda(j);
        if (!(gap > 0)) throw invalid_input("free_from_lambda: thresholds not increasing");
        u(j) = std::log(gap);
    }
    return u;
}

}  // namespace dopl
