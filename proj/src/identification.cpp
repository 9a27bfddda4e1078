#include "dopl/identification.hpp"

#include <Eigen/SVD>

#include "dopl/optim.hpp"
#include "dopl/oracle.hpp"

namespace dopl {

namespace {

bool cell_is_constant(const Eigen::MatrixXd& x) {
    for (int t = 1; t < x.rows(); ++t)
        if ((x.row(t) - x.row(0)).lpNorm<Eigen::Infinity>() > 1e-12) return false;
    return true;
}

/// Membership in the coordinate-k monotone set: + means the period pattern
/// x_{k,1} <= x_{k,3} < x_{k,2} (or < then <=), - means the reverse.
bool in_sign_set(const Eigen::MatrixXd& x, int k, bool plus) {
    double x1 = x(0, k), x2 = x(1, k), x3 = x(2, k);
    if (plus) return (x1 <= x3 && x3 < x2) || (x1 < x3 && x3 <= x2);
    return (x1 >= x3 && x3 > x2) || (x1 > x3 && x3 >= x2);
}

/// Strictly increasing threshold vector with lambda_1 = 0 and
/// lambda_{q1} - lambda_1 = d; the remaining entries are fill-in (the
/// moment with q2 = q3 = 1 does not depend on them).
Eigen::VectorXd lambda_with_gap(int Q, int q1, double d) {
    Eigen::VectorXd lam(Q - 1);
    for (int j = 1; j <= Q - 1; ++j) {
        if (j <= q1)
            lam(j - 1) = d * (j - 1) / (q1 - 1);
        else
            lam(j - 1) = d + (j - q1);
    }
    return lam;
}

}  // namespace

void CondLaw::validate() const {
    if (Q < 2 || T < 1 || K < 1) throw invalid_input("CondLaw: bad dimensions");
    const int C = static_cast<int>(x_cells.size());
    if (C == 0) throw invalid_input("CondLaw: no covariate cells");
    if (cell_weights.rows() != C || cell_weights.cols() != Q)
        throw invalid_input("CondLaw: cell_weights must be n_cells x Q");
    if (static_cast<int>(probs.size()) != C) throw invalid_input("CondLaw: probs size mismatch");
    long long npaths = 1;
    for (int t = 0; t < T; ++t) npaths *= Q;
    for (int c = 0; c < C; ++c) {
        if (x_cells[c].rows() != T || x_cells[c].cols() != K)
            throw invalid_input("CondLaw: cell covariate block must be T x K");
        if (static_cast<int>(probs[c].size()) != Q)
            throw invalid_input("CondLaw: probs per cell must cover every y0");
        for (int q = 0; q < Q; ++q) {
            if (probs[c][q].size() != npaths)
                throw invalid_input("CondLaw: path probability vector has wrong length");
            if (probs[c][q].minCoeff() < -1e-12 ||
                std::abs(probs[c][q].sum() - 1.0) > 1e-8)
                throw invalid_input("CondLaw: path probabilities must be a distribution");
        }
    }
    for (int q = 0; q < Q; ++q)
        if (std::abs(cell_weights.col(q).sum() - 1.0) > 1e-8)
            throw invalid_input("CondLaw: cell weights must sum to 1 per y0");
}

CondLaw population_law(const Params& params, const std::vector<Eigen::MatrixXd>& x_cells,
                       const Eigen::MatrixXd& cell_weights,
                       const std::vector<double>& alpha_support,
                       const std::vector<double>& alpha_weights) {
    if (alpha_support.empty() || alpha_support.size() != alpha_weights.size())
        throw invalid_input("population_law: alpha support/weights mismatch");
    double wsum = 0;
    for (double w : alpha_weights) {
        if (w < 0) throw invalid_input("population_law: negative alpha weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw invalid_input("population_law: alpha weights must sum to 1");

    CondLaw law;
    law.Q = params.Q();
    law.K = params.K();
    law.T = static_cast<int>(x_cells.empty() ? 0 : x_cells[0].rows());
    law.x_cells = x_cells;
    law.cell_weights = cell_weights;
    law.probs.resize(x_cells.size());
    for (size_t c = 0; c < x_cells.size(); ++c) {
        law.probs[c].resize(law.Q);
        for (int y0 = 1; y0 <= law.Q; ++y0) {
            Eigen::VectorXd p;
            for (size_t a = 0; a < alpha_support.size(); ++a) {
                Eigen::VectorXd pa =
                    path_probability_vector(y0, x_cells[c], alpha_support[a], params);
                if (p.size() == 0)
                    p = alpha_weights[a] * pa;
                else
                    p += alpha_weights[a] * pa;
            }
            law.probs[c][y0 - 1] = p;
        }
    }
    law.validate();
    return law;
}

std::vector<Eigen::MatrixXd> demo_cells(int K) {
    if (K < 1) throw invalid_input("demo_cells: K must be positive");
    std::vector<Eigen::MatrixXd> cells;
    Eigen::MatrixXd constant(3, K);
    for (int k = 0; k < K; ++k) constant.col(k).setConstant(0.2 + 0.1 * k);
    cells.push_back(constant);
    // One cell per sign pattern over the first K-1 coordinates; the last
    // coordinate always carries the increasing pattern.
    for (int mask = 0; mask < (1 << (K - 1)); ++mask) {
        Eigen::MatrixXd x(3, K);
        for (int k = 0; k < K; ++k) {
            bool plus = k == K - 1 || ((mask >> k) & 1);
            double a = 1.0 + 0.2 * k;
            if (plus) {
                x(0, k) = -0.6 * a;  // x_1 < x_3 < x_2
                x(2, k) = 0.1 * a;
                x(1, k) = 0.7 * a;
            } else {
                x(0, k) = 0.6 * a;
                x(2, k) = -0.1 * a;
                x(1, k) = -0.7 * a;
            }
        }
        cells.push_back(x);
    }
    return cells;
}

Eigen::VectorXd recover_gamma(const CondLaw& law, int cell) {
    law.validate();
    if (law.T != 3) throw invalid_input("recover_gamma: needs a three-period law");
    if (cell < 0 || cell >= static_cast<int>(law.x_cells.size()))
        throw invalid_input("recover_gamma: cell index out of range");
    if (!cell_is_constant(law.x_cells[cell]))
        throw invalid_input("recover_gamma: cell covariates must be constant across periods");

    const int Q = law.Q;
    auto paths = all_paths(Q, 3);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(Q, Q);
    for (int y0 = 1; y0 <= Q; ++y0) {
        const Eigen::VectorXd& p = law.probs[cell][y0 - 1];
        double p_enter = 0;   // y1 > 1, y2 = 1, y3 = 1
        double p_leave = 0;   // y1 = 1, y2 > 1
        Eigen::VectorXd p_stay = Eigen::VectorXd::Zero(Q);  // y1 = q, y2 = 1, y3 > 1
        for (size_t j = 0; j < paths.size(); ++j) {
            int y1 = paths[j][0], y2 = paths[j][1], y3 = paths[j][2];
            if (y1 > 1 && y2 == 1 && y3 == 1) p_enter += p(j);
            if (y1 == 1 && y2 > 1) p_leave += p(j);
            if (y2 == 1 && y3 > 1) p_stay(y1 - 1) += p(j);
        }
        for (int q = 1; q <= Q; ++q) {
            B(y0 - 1, q - 1) = q == 1 ? p_enter : p_stay(q - 1);
            if (q == y0) B(y0 - 1, q - 1) -= p_leave;
        }
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv(Q - 2) < 1e-6 * sv(0) || sv(Q - 1) > 1e-8 * sv(0))
        throw numerical_error("recover_gamma: null space of the probability matrix is not "
                              "one-dimensional (degenerate law)");
    Eigen::VectorXd g = svd.matrixV().col(Q - 1);
    if (g.sum() < 0) g = -g;
    if (g.minCoeff() <= 0)
        throw numerical_error("recover_gamma: null vector not strictly positive");
    Eigen::VectorXd gamma(Q);
    for (int q = 0; q < Q; ++q) gamma(q) = std::log(g(q)) - std::log(g(0));
    return gamma;
}

namespace {

/// E[m_{y0,q1,1,1} | y0, X in the given cells] under the law, with the cell
/// weights renormalized to the conditioning set.
double conditional_moment(const CondLaw& law, int y0, const std::vector<int>& cells,
                          int q1, const Params& params) {
    auto paths = all_paths(law.Q, 3);
    MomentIndex idx;
    idx.y0 = y0;
    idx.q1 = q1;
    idx.q2 = 1;
    idx.q3 = 1;
    idx.t = 1;
    idx.s = 2;
    idx.r = 3;
    double wsum = 0;
    for (int c : cells) wsum += law.cell_weights(c, y0 - 1);
    if (!(wsum > 0)) throw invalid_input("conditional_moment: conditioning set has zero mass");
    KahanSum acc;
    for (int c : cells) {
        double w = law.cell_weights(c, y0 - 1) / wsum;
        const Eigen::VectorXd& p = law.probs[c][y0 - 1];
        for (size_t j = 0; j < paths.size(); ++j) {
            if (p(j) == 0) continue;
            acc.add(w * p(j) * moment_general(idx, y0, paths[j], law.x_cells[c], params));
        }
    }
    return acc.value();
}

}  // namespace

Eigen::VectorXd recover_beta(const CondLaw& law, int y0, const Eigen::VectorXd& gamma) {
    law.validate();
    if (law.T != 3) throw invalid_input("recover_beta: needs a three-period law");
    const int K = law.K;

    // Cells grouped by sign pattern (last coordinate must be increasing).
    const int npat = 1 << (K - 1);
    std::vector<std::vector<int>> pattern_cells(npat);
    for (int c = 0; c < static_cast<int>(law.x_cells.size()); ++c) {
        if (!in_sign_set(law.x_cells[c], K - 1, true)) continue;
        int mask = 0;
        bool ok = true;
        for (int k = 0; k < K - 1 && ok; ++k) {
            if (in_sign_set(law.x_cells[c], k, true))
                mask |= 1 << k;
            else if (!in_sign_set(law.x_cells[c], k, false))
                ok = false;  // neither monotone pattern: cell unusable
        }
        if (ok) pattern_cells[mask].push_back(c);
    }
    for (int m = 0; m < npat; ++m)
        if (pattern_cells[m].empty())
            throw invalid_input("recover_beta: a sign-pattern set has no covariate cells "
                                "(insufficient covariate variation)");

    Eigen::VectorXd lam_fill(law.Q - 1);
    for (int j = 0; j < law.Q - 1; ++j) lam_fill(j) = j;  // moment ignores thresholds here

    auto system = [&](const Eigen::VectorXd& beta) {
        Params th(beta, gamma, lam_fill);
        Eigen::VectorXd f(npat);
        for (int m = 0; m < npat; ++m)
            f(m) = conditional_moment(law, y0, pattern_cells[m], 1, th);
        return f;
    };

    // Damped Gauss-Newton; the monotone structure guarantees a unique root.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd f = system(beta);
    for (int it = 0; it < 200; ++it) {
        if (f.lpNorm<Eigen::Infinity>() < 1e-12) break;
        Eigen::MatrixXd J = numeric_jacobian(system, beta, 1e-6);
        Eigen::VectorXd step = J.colPivHouseholderQr().solve(-f);
        double damp = 1.0;
        for (int ls = 0; ls < 40; ++ls) {
            Eigen::VectorXd cand = beta + damp * step;
            Eigen::VectorXd fc = system(cand);
            if (fc.norm() < f.norm()) {
                beta = cand;
                f = fc;
                break;
            }
            damp *= 0.5;
        }
        if (damp * step.lpNorm<Eigen::Infinity>() < 1e-14) break;
    }
    if (f.lpNorm<Eigen::Infinity>() > 1e-8)
        throw numerical_error("recover_beta: monotone system residual did not vanish");
    return beta;
}

Eigen::VectorXd recover_lambda(const CondLaw& law, int y0, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& gamma) {
    law.validate();
    if (law.T != 3) throw invalid_input("recover_lambda: needs a three-period law");
    const int Q = law.Q;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(Q - 1);
    if (Q == 2) return lambda;  // only the normalized entry: nothing to recover

    std::vector<int> all_cells(law.x_cells.size());
    for (size_t c = 0; c < all_cells.size(); ++c) all_cells[c] = static_cast<int>(c);

    for (int q1 = 2; q1 <= Q - 1; ++q1) {
        auto h = [&](double d) {
            Params th(beta, gamma, lambda_with_gap(Q, q1, d));
            return conditional_moment(law, y0, all_cells, q1, th);
        };
        // h is strictly increasing in d = lambda_{q1} - lambda_1 > 0.
        double lo = 1e-9, hi = 1.0;
        while (h(hi) < 0 && hi < 1e3) hi *= 2;
        if (h(lo) > 0 || h(hi) < 0)
            throw numerical_error("recover_lambda: no sign change in the bisection bracket");
        for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
            double mid = 0.5 * (lo + hi);
            (h(mid) < 0 ? lo : hi) = mid;
        }
        lambda(q1 - 1) = 0.5 * (lo + hi);
    }
    return lambda;
}

RecoveredParams identify_pipeline(const CondLaw& law, int y0) {
    law.validate();
    int constant_cell = -1;
    for (size_t c = 0; c < law.x_cells.size(); ++c)
        if (cell_is_constant(law.x_cells[c])) {
            constant_cell = static_cast<int>(c);
            break;
        }
    if (constant_cell < 0)
        throw invalid_input("identify_pipeline: no constant-covariate cell in the law");
    RecoveredParams out;
    out.gamma = recover_gamma(law, constant_cell);
    out.beta = recover_beta(law, y0, out.gamma);
    out.lambda = recover_lambda(law, y0, out.beta, out.gamma);
    return out;
}

}  // namespace dopl
