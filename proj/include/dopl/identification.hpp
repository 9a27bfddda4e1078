#pragma once

#include "dopl/moments.hpp"

namespace dopl {

/// Conditional law of the outcome path given the initial condition and a
/// finite set of covariate cells. probs[c][y0-1] lists path probabilities in
/// all_paths(Q, T) order; cell_weights(c, y0-1) = P(cell c | y0).
struct CondLaw {
    int Q = 0, T = 0, K = 0;
    std::vector<Eigen::MatrixXd> x_cells;  // T x K covariate blocks
    Eigen::MatrixXd cell_weights;          // n_cells x Q, columns sum to 1
    std::vector<std::vector<Eigen::VectorXd>> probs;

    void validate() const;
};

/// Exact population law at params, mixing the fixed effect over a finite
/// support (weights sum to 1, entries may be +-inf).
CondLaw population_law(const Params& params, const std::vector<Eigen::MatrixXd>& x_cells,
                       const Eigen::MatrixXd& cell_weights,
                       const std::vector<double>& alpha_support,
                       const std::vector<double>& alpha_weights);

/// Cell layout exercising every recovery step: one constant-covariate cell
/// plus one cell per covariate sign pattern (last coordinate increasing).
std::vector<Eigen::MatrixXd> demo_cells(int K);

/// Shift parameters recovered from a conditional law; gamma and lambda are
/// normalized by their first entries.
struct RecoveredParams {
    Eigen::VectorXd gamma;   // length Q, gamma(0) = 0
    Eigen::VectorXd beta;    // length K
    Eigen::VectorXd lambda;  // length Q-1, lambda(0) = 0
};

/// Recovers gamma (normalized gamma_1 = 0) from the constant-covariate cell:
/// builds the Q x Q matrix of conditional event probabilities whose null
/// vector is (exp(gamma_q))_q and extracts it by SVD.
Eigen::VectorXd recover_gamma(const CondLaw& law, int cell);

/// Recovers beta from the sign-pattern conditional moments, gamma known.
Eigen::VectorXd recover_beta(const CondLaw& law, int y0, const Eigen::VectorXd& gamma);

/// Recovers lambda (normalized lambda_1 = 0) by bisection on each
/// lambda_q - lambda_1, beta and gamma known. Q = 2 returns the trivial
/// vector (0): nothing to recover.
Eigen::VectorXd recover_lambda(const CondLaw& law, int y0, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& gamma);

/// Full pipeline: gamma from the first constant cell, then beta, then lambda.
RecoveredParams identify_pipeline(const CondLaw& law, int y0 = 1);

}  // namespace dopl
