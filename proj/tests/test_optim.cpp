#include <Eigen/Cholesky>

#include "doctest.h"
#include "dopl/optim.hpp"

using namespace dopl;

TEST_CASE("bfgs minimizes a quadratic") {
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    Eigen::VectorXd b(3);
    b << 1, -2, 0.5;
    Objective fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (g) *g = A * x - b;
        return 0.5 * x.dot(A * x) - b.dot(x);
    };
    OptimResult r = minimize_bfgs(fg, Eigen::VectorXd::Zero(3));
    CHECK(r.converged);
    Eigen::VectorXd want = A.ldlt().solve(b);
    CHECK((r.x - want).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("bfgs handles a curved valley and infinite rejections") {
    // Rosenbrock, with the objective set to +inf outside a box (the line
    // search must back off).
    Objective fg = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (x.lpNorm<Eigen::Infinity>() > 10.0) return kInf;
        double a = 1 - x(0), b = x(1) - x(0) * x(0);
        if (g) {
            (*g)(0) = -2 * a - 400 * x(0) * b;
            (*g)(1) = 200 * b;
        }
        return a * a + 100 * b * b;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    OptimOptions opts;
    opts.max_iter = 2000;
    OptimResult r = minimize_bfgs(fg, x0, opts);
    CHECK(r.f < 1e-12);
    CHECK((r.x - Eigen::Vector2d(1, 1)).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("numeric derivatives match analytic ones") {
    auto f = [](const Eigen::VectorXd& x) { return std::sin(x(0)) * std::exp(x(1)); };
    Eigen::VectorXd x(2);
    x << 0.7, -0.3;
    Eigen::VectorXd g = numeric_gradient(f, x);
    CHECK(g(0) == doctest::Approx(std::cos(0.7) * std::exp(-0.3)).epsilon(1e-8));
    CHECK(g(1) == doctest::Approx(std::sin(0.7) * std::exp(-0.3)).epsilon(1e-8));

    auto fv = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd y(2);
        y << x(0) * x(0) + x(1), 3 * x(1);
        return y;
    };
    Eigen::MatrixXd J = numeric_jacobian(fv, x);
    CHECK(J(0, 0) == doctest::Approx(2 * 0.7).epsilon(1e-8));
    CHECK(J(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(J(1, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(J(1, 1) == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("threshold reparametrization round trip") {
    Eigen::VectorXd lam(4);
    lam << -2.0, -0.5, 0.0, 1.7;
    for (int pin = 0; pin < 4; ++pin) {
        Eigen::VectorXd u = free_from_lambda(lam, pin);
        Eigen::VectorXd back = lambda_from_free(u, pin, lam(pin));
        CHECK((back - lam).lpNorm<Eigen::Infinity>() < 1e-12);
    }
    // Any free vector produces a strictly increasing threshold vector.
    Eigen::VectorXd wild(3);
    wild << 5.0, -30.0, 0.0;
    Eigen::VectorXd out = lambda_from_free(wild, 2, 0.0);
    for (int j = 1; j < 4; ++j) CHECK(out(j) > out(j - 1));
    CHECK(out(2) == 0.0);

    CHECK_THROWS_AS(free_from_lambda(Eigen::Vector2d(1.0, 1.0), 0), invalid_input);
    CHECK_THROWS_AS(lambda_from_free(wild, 5, 0.0), invalid_input);
}
