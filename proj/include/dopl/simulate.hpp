#pragma once

#include <variant>

#include "dopl/panel.hpp"
#include "dopl/params.hpp"

namespace dopl {

/// How the unit-level heterogeneity A_i is generated.
enum class HeterogeneityKind {
    None,     // A_i = 0
    Paper,    // A_i = sqrt(3) * Z_i, correlated with the first covariate
    Discrete  // A_i drawn from a finite support with given weights
};

struct Heterogeneity {
    HeterogeneityKind kind = HeterogeneityKind::None;
    std::vector<double> support;  // Discrete only; entries may be +-inf
    std::vector<double> weights;  // Discrete only; must sum to 1
};

/// How the initial outcome is produced.
///  - ZeroStateDraw: one model step with no lagged-dummy contribution
///    (all gamma dummies off in period 0), using period-0 covariates.
///  - FixedLevel: Y_0 set to a given level for every unit.
enum class InitRule { ZeroStateDraw, FixedLevel };

struct DgpConfig {
    int n = 0;
    int T = 0;
    int Q = 0;
    int K = 0;
    Params params{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
    Heterogeneity heterogeneity;
    InitRule y_init_rule = InitRule::ZeroStateDraw;
    int y_init_level = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Paper Monte Carlo design: Q=4, K=3, T=3, beta=(1,0,0),
/// gamma=(-1,0,0,1), lambda=(-2,0,2), normalizations gamma_2 = lambda_2 = 0.
DgpConfig paper_design(int n, bool with_heterogeneity, std::uint64_t seed);

/// Covariates for periods 0..T (T'+1 = T+1 rows per unit):
/// X_{i1t} = sqrt(3)(Z_i + Z_{i1t})/sqrt(2), X_{ijt} = sqrt(3)(Z_{ijt} + Z_{i1t})/sqrt(2).
/// Also returns the unit effects Z_i used by the Paper heterogeneity.
struct CovariateDraw {
    std::vector<Eigen::MatrixXd> x;  // n blocks, (T+1) x K, row 0 = period 0
    Eigen::VectorXd z_unit;          // length n
};
CovariateDraw gen_covariates(const DgpConfig& cfg);

/// Full panel draw: covariates, heterogeneity, logistic shocks, outcome paths.
/// Deterministic given cfg.seed, independent of scheduling.
PanelDataset gen_panel(const DgpConfig& cfg);

/// Inverse-cdf logistic draw.
double sample_logistic(std::mt19937_64& rng);

/// Plain-text key-value DgpConfig file (one `key = value` per line).
DgpConfig read_dgp_config(const std::string& path);
void write_dgp_config(const DgpConfig& cfg, const std::string& path);

}  // namespace dopl
