#pragma once

#include <vector>

#include "dopl/model.hpp"

namespace dopl {

/// Identifies one moment function: initial condition y0, level cutoffs
/// (q1, q2, q3), period triple t < s < r, and a history indicator
/// h = (y_1..y_{t-1}) selecting one element of the indicator basis.
/// Interior q2 (2..Q-1) requires r = s + 1.
struct MomentIndex {
    int y0 = 1;
    int q1 = 1;
    int q2 = 1;
    int q3 = 1;
    int t = 1;
    int s = 2;
    int r = 3;
    std::vector<int> history;  // length t-1; empty means no restriction needed (t = 1)

    void validate(int Q, int T) const;
};

/// Moment function for the T = 3 family, (t,s,r) = (1,2,3).
double moment_t3(const MomentIndex& idx, int y0, const std::vector<int>& y,
                 const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec = {});

/// General moment function: interior-q2 (t,s,s+1) family or boundary-q2
/// (t,s,r) family, multiplied by the history indicator 1{(y_1..y_{t-1}) = h}.
double moment_general(const MomentIndex& idx, int y0, const std::vector<int>& y,
                      const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec = {});

/// Interior-q2 branch formula with the two middle thresholds supplied
/// explicitly. Used to take the q2 -> {1, Q} limits numerically with an
/// auxiliary finite threshold.
double moment_interior_raw(const MomentIndex& idx, int y0, const std::vector<int>& y,
                           const Eigen::MatrixXd& x, const Params& params,
                           double lambda_lo, double lambda_hi, const IndexSpec& spec = {});

/// The alternative normalization m~ = -m / exp(z_t - z(q2, x_r) + lambda_{q3,q1}).
/// Only defined for t = 1 (the predecessor level is the initial condition).
double rescale_tilde(double value, const MomentIndex& idx, int y0, const Eigen::MatrixXd& x,
                     const Params& params, const IndexSpec& spec = {});

/// All moment indices for given (Q, T): every y0, every (q1,q2,q3), every
/// t < s <= T-1 with r = s+1, crossed with all Q^{t-1} history indicators.
std::vector<MomentIndex> enumerate_indices(int Q, int T);

/// Same, restricted to one initial condition.
std::vector<MomentIndex> enumerate_indices_y0(int Q, int T, int y0);

/// Number of moment conditions per initial condition.
/// Dynamic: (Q-1) Q (Q-1) sum_{t=1}^{T-2} (T-t-1) Q^{t-1}.
/// Static (all gamma equal): Q^T - T(Q-1) - 1.
long long moment_count(int Q, int T, bool static_model = false);

/// The closed form Q^T - (T-1)Q^2 - (T-2)Q as reported; disagrees with the
/// summation form (which the rank oracle confirms). Informational only.
long long moment_count_closed_form(int Q, int T);

/// One-line diagnostic rendering of an index.
std::string format_index(const MomentIndex& idx);

}  // namespace dopl
