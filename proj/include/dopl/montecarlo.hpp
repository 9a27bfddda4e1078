#pragma once

#include "dopl/gmm.hpp"
#include "dopl/simulate.hpp"

namespace dopl {

struct McOptions {
    int replications = 50;
    InstrumentKind instruments = InstrumentKind::PaperDifferences;
    GmmOptions gmm;
    bool mean_abs_error = false;  // default: median absolute error vs truth
};

/// Replication summary in packed parameter order
/// (beta_1..beta_K, gamma_1..gamma_Q, lambda_1..lambda_{Q-1}).
struct McResult {
    std::vector<std::string> names;
    Eigen::VectorXd truth;
    Eigen::MatrixXd estimates;  // completed replications x p
    Eigen::VectorXd median, mae, iqr;
    int replications = 0;
    int failed = 0;  // replications abandoned on numerical failure
};

/// Seeded replications of simulate + estimate on the given design. The
/// replication seeds derive deterministically from base.seed, so results are
/// byte-reproducible and independent of scheduling.
McResult run_montecarlo(const DgpConfig& base, const McOptions& opts);

/// Linear-interpolation sample quantile of a column (p in [0, 1]).
double sample_quantile(Eigen::VectorXd v, double p);

/// Display names for the packed parameter order.
std::vector<std::string> parameter_names(int K, int Q);

}  // namespace dopl
