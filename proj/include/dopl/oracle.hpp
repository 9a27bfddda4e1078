#pragma once

#include <functional>

#include "dopl/moments.hpp"

namespace dopl {

/// Evaluation grid for the fixed effect, optionally with exact +-inf points.
struct AlphaGrid {
    std::vector<double> values;

    /// n_finite Chebyshev-spaced points on [lo, hi], plus exact +-inf.
    static AlphaGrid chebyshev(int n_finite, double lo = -20.0, double hi = 20.0,
                               bool with_infinities = true);
};

/// All Q^T outcome paths in odometer order (last period fastest).
std::vector<std::vector<int>> all_paths(int Q, int T);

/// E[fn(Y) | y0, x, alpha] by exact enumeration over all Q^T paths with
/// compensated summation. Guard: Q^T <= 1e7.
double conditional_expectation(const std::function<double(const std::vector<int>&)>& fn, int y0,
                               const Eigen::MatrixXd& x, double alpha, const Params& params,
                               const IndexSpec& spec = {});

/// Vector of path probabilities p_{y0}(y, x, theta, alpha) over all_paths(Q, T).
Eigen::VectorXd path_probability_vector(int y0, const Eigen::MatrixXd& x, double alpha,
                                        const Params& params, const IndexSpec& spec = {});

struct RankDiagnostics {
    int rank = 0;
    double max_singular = 0.0;
    double smallest_kept = 0.0;
    double largest_dropped = 0.0;
};

/// Dimension of the space of valid moment functions at (y0, x, theta):
/// Q^T minus the numerical rank of the grid-of-alphas probability matrix.
/// Singular values below rel_tol * max are treated as zero.
int valid_space_dimension(int Q, int T, int y0, const Eigen::MatrixXd& x, const Params& params,
                          const AlphaGrid& grid, double rel_tol = 1e-9,
                          RankDiagnostics* diag = nullptr);

/// Joint model of the first auxiliary lemma: a three-valued middle outcome
/// with ordered-logit links and otherwise unrestricted kernels.
struct Lemma1Kernel {
    int Q = 2;
    double pi1 = 0.0;
    double pi3 = 0.0;
    Eigen::VectorXd pi21;  // length Q, pi21(w) >= pi22(w)
    Eigen::VectorXd pi22;
    Eigen::MatrixXd f;      // 2 x Q rows: f(w | ytilde1), row-stochastic
    Eigen::MatrixXd p3_lo;  // Q x 2: p3(ytilde3 | ytilde2 = 1, w), rows sum to 1
    Eigen::MatrixXd p3_hi;  // Q x 2: p3(ytilde3 | ytilde2 = 3, w)

    void validate() const;
};

/// Joint model of the second auxiliary lemma: all-binary outcomes with two
/// latent mediator variables; g(v | ytilde2 = 1, w) must not depend on w.
struct Lemma2Kernel {
    int Q = 2;
    double pi1 = 0.0;
    Eigen::VectorXd pi2;    // length Q
    Eigen::VectorXd pi3;    // length Q
    Eigen::MatrixXd f;      // 2 x Q
    Eigen::VectorXd g1;     // length Q: g(v | ytilde2 = 1)
    Eigen::MatrixXd g0;     // Q x Q: row w is g(v | ytilde2 = 0, w)

    /// When true, g(v | 1, w) is replaced by a w-dependent table (negative
    /// control violating the lemma's assumption).
    bool violate_independence = false;
    Eigen::MatrixXd g1_violating;  // Q x Q, used only in the negative control

    void validate() const;
};

/// Exact E[m] for the given kernel by summation over the full joint support.
double lemma1_expectation(const Lemma1Kernel& k);
double lemma2_expectation(const Lemma2Kernel& k);

enum class WhichLemma { Lemma1, Lemma2 };

/// Draws `trials` random admissible kernels and returns max |E[m]|.
/// With negative_control (Lemma 2 only), the independence assumption is
/// deliberately violated; also reports how many draws exceeded 1e-6.
struct LemmaCheckResult {
    double max_abs_expectation = 0.0;
    int violations_detected = 0;  // draws with |E[m]| > 1e-6
};
LemmaCheckResult lemma_kernel_check(WhichLemma which, int Q, int trials, std::uint64_t seed,
                                    bool negative_control = false);

Lemma1Kernel random_lemma1_kernel(int Q, std::mt19937_64& rng);
Lemma2Kernel random_lemma2_kernel(int Q, std::mt19937_64& rng, bool violate_independence);

}  // namespace dopl
