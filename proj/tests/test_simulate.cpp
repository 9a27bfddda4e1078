#include <cstdio>

#include "doctest.h"
#include "dopl/simulate.hpp"

using namespace dopl;

TEST_CASE("panel draws are byte-identical under a fixed seed") {
    DgpConfig cfg = paper_design(50, true, 12345);
    PanelDataset a = gen_panel(cfg);
    PanelDataset b = gen_panel(cfg);
    CHECK(a.y0 == b.y0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0);
    for (int i = 0; i < a.n; ++i) CHECK((a.x[i] - b.x[i]).cwiseAbs().maxCoeff() == 0.0);

    cfg.seed = 54321;
    PanelDataset c = gen_panel(cfg);
    CHECK((a.y - c.y).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("per-unit streams are independent of n") {
    // Unit i draws the same covariates and outcomes whether or not more units
    // follow, so parallel scheduling cannot change results.
    DgpConfig small = paper_design(10, false, 7);
    DgpConfig large = paper_design(40, false, 7);
    PanelDataset a = gen_panel(small);
    PanelDataset b = gen_panel(large);
    for (int i = 0; i < small.n; ++i) {
        CHECK(a.y0[i] == b.y0[i]);
        CHECK((a.y.row(i) - b.y.row(i)).cwiseAbs().maxCoeff() == 0);
        CHECK((a.x[i] - b.x[i]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("paper design dimensions and normalization") {
    DgpConfig cfg = paper_design(100, true, 1);
    CHECK(cfg.Q == 4);
    CHECK(cfg.K == 3);
    CHECK(cfg.T == 3);
    CHECK(cfg.params.gamma()(1) == 0.0);
    CHECK(cfg.params.lambda()(1) == 0.0);
    CHECK(cfg.params.normalized());
    PanelDataset d = gen_panel(cfg);
    CHECK(d.n == 100);
    d.validate();
}

TEST_CASE("covariates follow the common-shock construction") {
    // X_1 = sqrt(3)(Z_i + Z_1)/sqrt(2) has variance 3; each X_j shares the
    // within-period shock Z_1, so corr(X_1, X_j) = 1/2 at large n.
    DgpConfig cfg = paper_design(4000, false, 99);
    CovariateDraw cov = gen_covariates(cfg);
    double s11 = 0, s12 = 0, s22 = 0, m1 = 0, m2 = 0;
    int cnt = 0;
    for (int i = 0; i < cfg.n; ++i)
        for (int t = 0; t <= cfg.T; ++t) {
            m1 += cov.x[i](t, 0);
            m2 += cov.x[i](t, 1);
            ++cnt;
        }
    m1 /= cnt;
    m2 /= cnt;
    for (int i = 0; i < cfg.n; ++i)
        for (int t = 0; t <= cfg.T; ++t) {
            double a = cov.x[i](t, 0) - m1, b = cov.x[i](t, 1) - m2;
            s11 += a * a;
            s12 += a * b;
            s22 += b * b;
        }
    CHECK(s11 / cnt == doctest::Approx(3.0).epsilon(0.1));
    CHECK(s22 / cnt == doctest::Approx(3.0).epsilon(0.1));
    CHECK(s12 / std::sqrt(s11 * s22) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("fixed initial level and degenerate heterogeneity") {
    DgpConfig cfg = paper_design(30, false, 5);
    cfg.y_init_rule = InitRule::FixedLevel;
    cfg.y_init_level = 3;
    PanelDataset d = gen_panel(cfg);
    for (int y0 : d.y0) CHECK(y0 == 3);

    DgpConfig inf_cfg = paper_design(30, false, 5);
    inf_cfg.heterogeneity.kind = HeterogeneityKind::Discrete;
    inf_cfg.heterogeneity.support = {-kInf};
    inf_cfg.heterogeneity.weights = {1.0};
    PanelDataset lo = gen_panel(inf_cfg);
    CHECK(lo.y.maxCoeff() == 1);  // everyone stuck at the bottom level
}

TEST_CASE("config file round trip") {
    DgpConfig cfg = paper_design(123, true, 777);
    cfg.heterogeneity.kind = HeterogeneityKind::Discrete;
    cfg.heterogeneity.support = {-1.0, 0.5, kInf};
    cfg.heterogeneity.weights = {0.25, 0.5, 0.25};
    std::string path = "/tmp/dopl_test_cfg.txt";
    write_dgp_config(cfg, path);
    DgpConfig r = read_dgp_config(path);
    std::remove(path.c_str());
    CHECK(r.n == cfg.n);
    CHECK(r.T == cfg.T);
    CHECK(r.Q == cfg.Q);
    CHECK(r.K == cfg.K);
    CHECK(r.seed == cfg.seed);
    CHECK((r.params.beta() - cfg.params.beta()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.params.gamma() - cfg.params.gamma()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.params.lambda() - cfg.params.lambda()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.params.gamma_norm_index() == cfg.params.gamma_norm_index());
    CHECK(r.heterogeneity.kind == HeterogeneityKind::Discrete);
    CHECK(r.heterogeneity.support == cfg.heterogeneity.support);
    CHECK(r.heterogeneity.weights == cfg.heterogeneity.weights);
}

TEST_CASE("config validation") {
    DgpConfig cfg = paper_design(10, false, 1);
    cfg.heterogeneity.kind = HeterogeneityKind::Discrete;
    cfg.heterogeneity.support = {0.0, 1.0};
    cfg.heterogeneity.weights = {0.6, 0.6};
    CHECK_THROWS_AS(cfg.validate(), invalid_input);
    cfg.heterogeneity.weights = {0.5, 0.5};
    CHECK_NOTHROW(cfg.validate());
    cfg.y_init_rule = InitRule::FixedLevel;
    cfg.y_init_level = 9;
    CHECK_THROWS_AS(cfg.validate(), invalid_input);
}
