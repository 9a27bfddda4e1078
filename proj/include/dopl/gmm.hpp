#pragma once

#include "dopl/reduced_form.hpp"

namespace dopl {

/// How unconditional moments are formed from the conditional family.
///  - PaperDifferences: instruments (1, pairwise covariate differences
///    x_t - x_s for t < s), interacted with every family entry of the unit's
///    initial-condition block.
///  - InitialConditionIndicators: indicator of the initial condition only
///    (the family is already partitioned by it).
///  - Efficient: per-unit optimal instrument matrices from the reduced form.
enum class InstrumentKind { PaperDifferences, InitialConditionIndicators, Efficient };

struct InstrumentSpec {
    InstrumentKind kind = InstrumentKind::PaperDifferences;
    // Divide each family entry by its model-implied conditional standard
    // deviation at the evaluated parameters (path distribution given x and the
    // initial condition, zero heterogeneity). The divisor is a function of
    // conditioning variables only, so conditional means stay at zero; it
    // removes the parameter-dependent exponential scale that otherwise lets a
    // fixed-weight objective trade bias for variance. For Efficient, the
    // instrument matrices are also built for the rescaled family.
    bool studentize = true;
    // Efficient only: fitted reduced form and a consistent preliminary estimate.
    const ReducedFormModel* rf = nullptr;
    const Params* prelim = nullptr;
};

struct GmmOptions {
    int multistart = 1;            // extra perturbed starts around the stage-0 point
    std::uint64_t seed = 0;        // start perturbations only
    int gamma_norm_index = 0;      // 0-based gamma coordinate pinned to 0
    int lambda_norm_index = 0;     // 0-based lambda coordinate pinned to 0
    int max_iter = 300;
    double start_spread = 0.5;     // sd of the multistart perturbations
    // Packed theta overriding the thresholds-only stage-0 start, e.g. a
    // preliminary estimate when re-estimating with efficient instruments.
    std::optional<Eigen::VectorXd> start;
};

struct GmmStage {
    std::string label;
    Eigen::VectorXd theta;  // packed (beta, gamma, lambda)
    double objective = 0.0;  // n * gbar' W gbar at the stage minimizer
};

struct JTest {
    bool available = false;  // false when dof = 0
    double J = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

struct GmmEstimate {
    Params theta_hat{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2),
                     Eigen::VectorXd::Zero(1)};
    Eigen::MatrixXd vcov;        // packed-theta coordinates, pinned rows/cols zero
    Eigen::VectorXd std_errors;  // sqrt of vcov diagonal
    std::vector<GmmStage> stages;
    int moment_dim = 0;
    int dropped_columns = 0;  // zero-variance moments removed with weight 0
    JTest j;
    bool converged = false;
};

/// n x M matrix of unconditional moments; row i is the Kronecker product of
/// the unit's instrument vector with the family slice for its own initial
/// condition.
Eigen::MatrixXd build_moment_stack(const PanelDataset& data, const Params& params,
                                   const InstrumentSpec& inst,
                                   const std::vector<MomentIndex>& family);

/// Staged weighted GMM: thresholds-only start, two diagonal inverse-variance
/// stages, then two full-covariance stages with the diagonal inflated by 10%
/// before inversion, each reweighted at the previous stage's minimizer.
GmmEstimate gmm_estimate(const PanelDataset& data, const std::vector<MomentIndex>& family,
                         const InstrumentSpec& inst, const GmmOptions& opts = {});

/// (Gamma' W Gamma)^{-1} Gamma' W S W Gamma (Gamma' W Gamma)^{-1} / n with
/// Gamma the central-difference Jacobian of the mean moments over the free
/// coordinates and S the empirical moment covariance. Returned in packed
/// coordinates with zero rows/columns at the pinned indices.
Eigen::MatrixXd sandwich_variance(const std::function<Eigen::MatrixXd(const Params&)>& stack,
                                  const Params& theta_hat, const Eigen::MatrixXd& W,
                                  int gamma_norm_index, int lambda_norm_index);

/// Overidentification statistic J = n gbar' S^{-1} gbar at theta_hat.
JTest j_statistic(const Eigen::MatrixXd& stack_at_thetahat, int n_free_params);

/// Upper tail of the chi-square distribution with k degrees of freedom.
double chisq_sf(double x, int k);

}  // namespace dopl
