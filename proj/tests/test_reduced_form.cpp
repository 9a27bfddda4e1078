#include "doctest.h"
#include "dopl/reduced_form.hpp"
#include "dopl/simulate.hpp"

using namespace dopl;

namespace {

PanelDataset shares_panel() {
    // Q = 2, one period, outcome shares (0.25, 0.75).
    PanelDataset d;
    d.n = 4;
    d.T = 1;
    d.Q = 2;
    d.K = 1;
    d.y0 = {1, 1, 1, 1};
    d.y.resize(4, 1);
    d.y << 1, 2, 2, 2;
    d.x.assign(4, Eigen::MatrixXd::Zero(1, 1));
    return d;
}

}  // namespace

TEST_CASE("thresholds-only fit reproduces the closed-form logit of a share") {
    ReducedFormModel rf = ordered_logit_mle(shares_panel(), RfDesign::PooledThresholdsOnly);
    // lambda_1 = log(0.25 / 0.75)
    CHECK(rf.lambda[0](0) == doctest::Approx(-1.0986122886681098).epsilon(1e-6));
    CHECK(rf.grad_norm < 1e-6);
}

TEST_CASE("pooled thresholds are consistent for the no-heterogeneity design") {
    Eigen::VectorXd beta(1), gamma(3), lambda(2);
    beta << 0.0;
    gamma << 0.0, 0.0, 0.0;
    lambda << -1.0, 0.8;
    DgpConfig cfg;
    cfg.n = 20000;
    cfg.T = 3;
    cfg.Q = 3;
    cfg.K = 1;
    cfg.params = Params(beta, gamma, lambda);
    cfg.seed = 2026;
    PanelDataset d = gen_panel(cfg);
    ReducedFormModel rf = ordered_logit_mle(d, RfDesign::PooledThresholdsOnly);
    CHECK((rf.lambda[0] - lambda).lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("symmetric design yields antisymmetric threshold estimates") {
    Eigen::VectorXd beta(1), gamma(3), lambda(2);
    beta << 0.0;
    gamma << 0.0, 0.0, 0.0;
    lambda << -1.3, 1.3;
    DgpConfig cfg;
    cfg.n = 30000;
    cfg.T = 3;
    cfg.Q = 3;
    cfg.K = 1;
    cfg.params = Params(beta, gamma, lambda);
    cfg.seed = 11;
    PanelDataset d = gen_panel(cfg);
    ReducedFormModel rf = ordered_logit_mle(d, RfDesign::PooledThresholdsOnly);
    CHECK(rf.lambda[0](0) == doctest::Approx(-rf.lambda[0](1)).epsilon(0.08));
}

TEST_CASE("missing outcome level produces an informative failure") {
    PanelDataset d = shares_panel();
    d.Q = 3;  // level 3 never observed
    try {
        ordered_logit_mle(d, RfDesign::PooledThresholdsOnly);
        FAIL("expected invalid_input");
    } catch (const invalid_input& e) {
        CHECK(std::string(e.what()).find("level 3") != std::string::npos);
    }
}

TEST_CASE("per-period fit reports the period of a missing level") {
    DgpConfig cfg = paper_design(60, false, 3);
    PanelDataset d = gen_panel(cfg);
    for (int i = 0; i < d.n; ++i)
        if (d.y(i, 1) == 4) d.y(i, 1) = 3;  // knock level 4 out of period 2
    try {
        ordered_logit_mle(d, RfDesign::PerPeriodFull);
        FAIL("expected invalid_input");
    } catch (const invalid_input& e) {
        std::string msg = e.what();
        CHECK(msg.find("level 4") != std::string::npos);
        CHECK(msg.find("period 2") != std::string::npos);
    }
}

TEST_CASE("per-period fit approximately recovers a no-heterogeneity design") {
    DgpConfig cfg = paper_design(8000, false, 21);
    PanelDataset d = gen_panel(cfg);
    ReducedFormModel rf = ordered_logit_mle(d, RfDesign::PerPeriodFull);
    CHECK(rf.grad_norm < 1e-6);
    // The contemporaneous first covariate carries coefficient 1 in the truth;
    // the pooled fit is only an approximation, so the check is loose.
    for (int t = 0; t < 3; ++t) {
        double b1 = rf.coef[t](cfg.Q - 1);
        CHECK(b1 > 0.5);
        CHECK(b1 < 1.5);
    }
    // Reduced-form path probabilities behave like a distribution.
    Eigen::VectorXd pp = rf_path_probabilities(rf, 2, d.x[0]);
    CHECK(pp.size() == 64);
    CHECK(pp.minCoeff() > 0);
    CHECK(pp.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("optimal instruments ignore parameters the moments do not use") {
    // Q = 2: the three-period moment functions do not depend on the single
    // threshold, so its gradient row vanishes.
    Eigen::VectorXd beta(1), gamma(2), lambda(1);
    beta << 0.8;
    gamma << 0.0, 0.5;
    lambda << 0.2;
    DgpConfig cfg;
    cfg.n = 40;
    cfg.T = 3;
    cfg.Q = 2;
    cfg.K = 1;
    cfg.params = Params(beta, gamma, lambda);
    cfg.seed = 17;
    PanelDataset d = gen_panel(cfg);
    ReducedFormModel rf = ordered_logit_mle(d, RfDesign::PerPeriodFull);
    auto family = enumerate_indices(2, 3);
    auto A = efficient_instruments(d, rf, cfg.params, family);
    REQUIRE(A.size() == static_cast<size_t>(d.n));
    // Packed order: beta (1), gamma (2), lambda (1); last coordinate is the
    // threshold.
    for (const auto& a : A) {
        REQUIRE(a.rows() == 4);
        CHECK(a.row(3).cwiseAbs().maxCoeff() < 1e-9);
    }
}
