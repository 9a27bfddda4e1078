#include "doctest.h"
#include "dopl/identification.hpp"

using namespace dopl;

namespace {

CondLaw make_law(const Params& p, int K) {
    auto cells = demo_cells(K);
    Eigen::MatrixXd w =
        Eigen::MatrixXd::Constant(cells.size(), p.Q(), 1.0 / double(cells.size()));
    return population_law(p, cells, w, {-1.0, 0.3, 1.1}, {0.3, 0.4, 0.3});
}

Params three_level_truth() {
    Eigen::VectorXd beta(2), gamma(3), lambda(2);
    beta << 0.7, -0.4;
    gamma << 0.0, -1.0, 0.5;
    lambda << 0.0, 1.2;
    return Params(beta, gamma, lambda);
}

}  // namespace

TEST_CASE("demo cells cover a constant block and every sign pattern") {
    auto cells = demo_cells(2);
    REQUIRE(cells.size() >= 3);
    CHECK(cells[0].rows() == 3);
    CHECK(cells[0].cols() == 2);
    // First cell is constant over time.
    CHECK((cells[0].row(0) - cells[0].row(2)).cwiseAbs().maxCoeff() == 0.0);
    // Every sign-pattern cell keeps the last covariate on the increasing
    // pattern (the constant cell is exempt).
    for (size_t c = 1; c < cells.size(); ++c) {
        CHECK(cells[c](0, 1) <= cells[c](2, 1));
        CHECK(cells[c](2, 1) < cells[c](1, 1));
    }
}

TEST_CASE("full recovery pipeline on a three-level design") {
    Params truth = three_level_truth();
    CondLaw law = make_law(truth, 2);
    law.validate();
    RecoveredParams rec = identify_pipeline(law, 1);
    CHECK((rec.gamma - truth.gamma()).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((rec.beta - truth.beta()).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((rec.lambda - truth.lambda()).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("recovery does not depend on the conditioning level") {
    Params truth = three_level_truth();
    CondLaw law = make_law(truth, 2);
    for (int y0 = 1; y0 <= 3; ++y0) {
        RecoveredParams rec = identify_pipeline(law, y0);
        CHECK((rec.beta - truth.beta()).lpNorm<Eigen::Infinity>() < 1e-6);
        CHECK((rec.lambda - truth.lambda()).lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("state-dependence recovery is exact and shift invariant") {
    Eigen::VectorXd beta(1), gamma(3), lambda(2);
    beta << 0.3;
    gamma << 0.0, -1.0, 0.5;
    lambda << 0.0, 0.9;
    CondLaw law = make_law(Params(beta, gamma, lambda), 1);
    Eigen::VectorXd g = recover_gamma(law, 0);
    CHECK((g - gamma).lpNorm<Eigen::Infinity>() < 1e-8);

    // Adding a constant to every state-dependence coefficient is absorbed by
    // the fixed effect; the normalized recovery is unchanged.
    Eigen::VectorXd shifted = gamma.array() + 0.7;
    CondLaw law2 = make_law(Params(beta, shifted, lambda), 1);
    Eigen::VectorXd g2 = recover_gamma(law2, 0);
    CHECK((g2 - gamma).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("no state dependence recovers as zero") {
    Eigen::VectorXd beta(1), gamma(3), lambda(2);
    beta << 0.5;
    gamma.setConstant(0.4);
    lambda << -0.5, 0.5;
    CondLaw law = make_law(Params(beta, gamma, lambda), 1);
    Eigen::VectorXd g = recover_gamma(law, 0);
    CHECK(g.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("binary outcome pipeline") {
    Eigen::VectorXd beta(1), gamma(2), lambda(1);
    beta << -0.6;
    gamma << 0.0, 1.1;
    lambda << 0.0;
    Params truth(beta, gamma, lambda);
    CondLaw law = make_law(truth, 1);
    RecoveredParams rec = identify_pipeline(law, 1);
    CHECK(rec.gamma.size() == 2);
    CHECK((rec.gamma - gamma).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(std::abs(rec.beta(0) + 0.6) < 1e-6);
    REQUIRE(rec.lambda.size() == 1);
    CHECK(rec.lambda(0) == 0.0);  // nothing beyond the normalization
}

TEST_CASE("zero covariate effect is recovered as zero") {
    Eigen::VectorXd beta(2), gamma(3), lambda(2);
    beta << 0.0, 0.0;
    gamma << 0.0, 0.4, 1.0;
    lambda << 0.0, 0.8;
    CondLaw law = make_law(Params(beta, gamma, lambda), 2);
    RecoveredParams rec = identify_pipeline(law, 1);
    CHECK(rec.beta.lpNorm<Eigen::Infinity>() < 1e-6);
}
