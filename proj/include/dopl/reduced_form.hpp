#pragma once

#include "dopl/moments.hpp"
#include "dopl/panel.hpp"

namespace dopl {

/// Auxiliary ordered logit fitted without fixed effects.
///  - PooledThresholdsOnly: all periods pooled, no covariates, thresholds only.
///  - PerPeriodFull: one fit per period with lagged-outcome dummies
///    (levels 2..Q, level 1 is the base), contemporaneous covariates, and
///    time-averaged covariates.
enum class RfDesign { PooledThresholdsOnly, PerPeriodFull };

struct ReducedFormModel {
    int Q = 0, T = 0, K = 0;
    RfDesign design = RfDesign::PooledThresholdsOnly;
    std::vector<Eigen::VectorXd> coef;    // per period; empty vectors when pooled
    std::vector<Eigen::VectorXd> lambda;  // per period (single shared entry when pooled)
    double loglik = 0.0;
    double grad_norm = 0.0;

    /// P(Y_t = q | Y_{t-1} = y_prev, x_t, x_avg) under the fitted model,
    /// 1-based period t in 1..T.
    Eigen::VectorXd outcome_probs(int t, int y_prev, const Eigen::VectorXd& x_t,
                                  const Eigen::VectorXd& x_avg) const;
};

/// Ordered-logit maximum likelihood on the panel. Throws invalid_input when a
/// fitted slice misses an outcome level (naming the level and period), and
/// numerical_error when the optimizer cannot reach gradient norm < 1e-6.
ReducedFormModel ordered_logit_mle(const PanelDataset& data, RfDesign design);

/// Path probabilities over all_paths(Q, T) under the fitted per-period law,
/// starting from y0, for a unit with covariate block x (T x K).
Eigen::VectorXd rf_path_probabilities(const ReducedFormModel& rf, int y0,
                                      const Eigen::MatrixXd& x);

/// Optimal-instrument matrices A(X) = E[dm/dtheta | X]' V[m | X]^{-1}, one per
/// unit, with the conditional expectations taken by enumeration under the
/// reduced-form law. Moment coordinates are the family entries matching the
/// unit's initial condition; theta coordinates are (beta, gamma, lambda).
/// V is ridge-regularized by 1e-8 * trace / dim before inversion.
/// With studentize, the construction is carried out for the family divided by
/// its model-implied conditional standard deviation at `params`, matching the
/// rescaling the estimator applies; the raw family is badly conditioned.
std::vector<Eigen::MatrixXd> efficient_instruments(const PanelDataset& data,
                                                   const ReducedFormModel& rf,
                                                   const Params& params,
                                                   const std::vector<MomentIndex>& family,
                                                   bool studentize = true);

}  // namespace dopl
