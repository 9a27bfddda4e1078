#include "dopl/oracle.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace dopl {

AlphaGrid AlphaGrid::chebyshev(int n_finite, double lo, double hi, bool with_infinities) {
    AlphaGrid g;
    if (with_infinities) g.values.push_back(-kInf);
    for (int j = 0; j < n_finite; ++j) {
        // Chebyshev nodes mapped to [lo, hi], in increasing order.
        double c = std::cos(M_PI * (2.0 * (n_finite - j) - 1.0) / (2.0 * n_finite));
        g.values.push_back(0.5 * (lo + hi) + 0.5 * (hi - lo) * c);
    }
    if (with_infinities) g.values.push_back(kInf);
    return g;
}

std::vector<std::vector<int>> all_paths(int Q, int T) {
    std::vector<std::vector<int>> paths;
    std::vector<int> y(T, 1);
    while (true) {
        paths.push_back(y);
        int pos = T - 1;
        while (pos >= 0 && y[pos] == Q) y[pos--] = 1;
        if (pos < 0) break;
        ++y[pos];
    }
    return paths;
}

namespace {

// trans[t][prev-1][q-1] = Pr(Y_t = q | Y_{t-1} = prev), t in 0..T-1.
std::vector<Eigen::MatrixXd> transition_tables(const Eigen::MatrixXd& x, double alpha,
                                               const Params& params, const IndexSpec& spec) {
    const int T = static_cast<int>(x.rows());
    const int Q = params.Q();
    std::vector<Eigen::MatrixXd> tables(T, Eigen::MatrixXd(Q, Q));
    for (int t = 0; t < T; ++t)
        for (int prev = 1; prev <= Q; ++prev)
            tables[t].row(prev - 1) =
                transition_probs(prev, x.row(t).transpose(), alpha, params, spec).transpose();
    return tables;
}

void check_enumeration_guard(int Q, int T, double limit) {
    double total = std::pow(static_cast<double>(Q), T);
    if (total > limit)
        throw invalid_input("enumeration guard exceeded: Q^T = " + std::to_string(total));
}

}  // namespace

double conditional_expectation(const std::function<double(const std::vector<int>&)>& fn, int y0,
                               const Eigen::MatrixXd& x, double alpha, const Params& params,
                               const IndexSpec& spec) {
    const int T = static_cast<int>(x.rows());
    const int Q = params.Q();
    check_enumeration_guard(Q, T, 1e7);
    auto tables = transition_tables(x, alpha, params, spec);

    KahanSum sum;
    std::vector<int> y(T, 1);
    while (true) {
        double p = 1.0;
        int prev = y0;
        for (int t = 0; t < T; ++t) {
            p *= tables[t](prev - 1, y[t] - 1);
            prev = y[t];
        }
        if (p != 0.0) sum.add(p * fn(y));
        int pos = T - 1;
        while (pos >= 0 && y[pos] == Q) y[pos--] = 1;
        if (pos < 0) break;
        ++y[pos];
    }
    return sum.value();
}

Eigen::VectorXd path_probability_vector(int y0, const Eigen::MatrixXd& x, double alpha,
                                        const Params& params, const IndexSpec& spec) {
    const int T = static_cast<int>(x.rows());
    const int Q = params.Q();
    check_enumeration_guard(Q, T, 1e7);
    auto tables = transition_tables(x, alpha, params, spec);

    Eigen::VectorXd out(static_cast<long>(std::llround(std::pow(Q, T))));
    std::vector<int> y(T, 1);
    long row = 0;
    while (true) {
        double p = 1.0;
        int prev = y0;
        for (int t = 0; t < T; ++t) {
            p *= tables[t](prev - 1, y[t] - 1);
            prev = y[t];
        }
        out(row++) = p;
        int pos = T - 1;
        while (pos >= 0 && y[pos] == Q) y[pos--] = 1;
        if (pos < 0) break;
        ++y[pos];
    }
    return out;
}

int valid_space_dimension(int Q, int T, int y0, const Eigen::MatrixXd& x, const Params& params,
                          const AlphaGrid& grid, double rel_tol, RankDiagnostics* diag) {
    check_enumeration_guard(Q, T, 1e4);
    if (grid.values.empty()) throw invalid_input("valid_space_dimension: empty alpha grid");
    const int npaths = static_cast<int>(std::llround(std::pow(Q, T)));
    auto paths = all_paths(Q, T);

    // Each transition factor Pr(Y_t = q | prev), viewed as a function of
    // w = e^alpha, is h_{q-1}(w) - h_q(w) with h_j(w) = w / (w + a),
    // a = exp(lambda_j - z_t(prev)), h_0 = 1, h_Q = 0. A path probability is
    // therefore rational in w with simple poles at w = -a, so the span of
    // {p(alpha)} equals the row space of the residue matrix below. The raw
    // grid-of-probabilities matrix has the same row space in exact
    // arithmetic, but its tail singular values underflow double precision;
    // the residue matrix is well scaled, and the reconstruction check at the
    // end ties it back to directly computed probabilities on the grid.
    struct Pole {
        int t, prev, j;
        double a;
    };
    std::vector<Pole> poles;
    std::vector<std::vector<std::vector<double>>> amat(T);
    for (int t = 0; t < T; ++t) {
        amat[t].assign(Q, {});
        const int plo = (t == 0) ? y0 : 1, phi = (t == 0) ? y0 : Q;
        for (int prev = plo; prev <= phi; ++prev) {
            double z = single_index(prev, x.row(t).transpose(), params);
            auto& row = amat[t][prev - 1];
            row.resize(Q - 1);
            for (int j = 1; j <= Q - 1; ++j) {
                row[j - 1] = std::exp(params.lambda()(j - 1) - z);
                poles.push_back({t, prev, j, row[j - 1]});
            }
        }
    }
    auto hval = [&](int t, int prev, int j, double w) -> double {
        if (j == 0) return 1.0;
        if (j == Q) return 0.0;
        return w / (w + amat[t][prev - 1][j - 1]);
    };
    auto gval = [&](int t, int prev, int q, double w) {
        return hval(t, prev, q - 1, w) - hval(t, prev, q, w);
    };

    const int nb = 1 + static_cast<int>(poles.size());
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nb, npaths);
    for (int col = 0; col < npaths; ++col) {
        const auto& y = paths[col];
        bool all_top = true;
        for (int t = 0; t < T; ++t) all_top = all_top && y[t] == Q;
        C(0, col) = all_top ? 1.0 : 0.0;  // value of the path probability at alpha = +inf
        for (size_t pid = 0; pid < poles.size(); ++pid) {
            const Pole& pl = poles[pid];
            const int prev = (pl.t == 0) ? y0 : y[pl.t - 1];
            if (prev != pl.prev) continue;
            const int q = y[pl.t];
            double res;
            if (q == pl.j + 1)
                res = -pl.a;  // pole contributed by h_{q-1}
            else if (q == pl.j)
                res = pl.a;  // pole contributed by -h_q
            else
                continue;
            const double w = -pl.a;
            for (int t2 = 0; t2 < T; ++t2) {
                if (t2 == pl.t) continue;
                const int pr2 = (t2 == 0) ? y0 : y[t2 - 1];
                res *= gval(t2, pr2, y[t2], w);
            }
            C(1 + pid, col) = res;
        }
    }

    // Coincident pole locations (e.g. all gamma_q equal, collapsing the
    // predecessor dependence) share one basis function; their residues add.
    std::vector<size_t> order(poles.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return poles[i].a < poles[j].a; });
    std::vector<std::vector<size_t>> clusters;
    for (size_t oi = 0; oi < order.size(); ++oi) {
        if (clusters.empty() ||
            poles[order[oi]].a - poles[clusters.back().front()].a >
                1e-9 * poles[order[oi]].a)
            clusters.emplace_back();
        clusters.back().push_back(order[oi]);
    }
    const int nm = 1 + static_cast<int>(clusters.size());
    Eigen::MatrixXd merged = Eigen::MatrixXd::Zero(nm, npaths);
    merged.row(0) = C.row(0);
    std::vector<double> cluster_loc(clusters.size());
    for (size_t c = 0; c < clusters.size(); ++c) {
        cluster_loc[c] = poles[clusters[c].front()].a;
        for (size_t pid : clusters[c]) merged.row(1 + c) += C.row(1 + pid);
    }

    // The decomposition must reproduce the directly computed probabilities on
    // the whole grid (including the exact +-inf points).
    double worst = 0.0;
    Eigen::RowVectorXd basis(nm);
    for (double alpha : grid.values) {
        basis(0) = 1.0;
        for (size_t c = 0; c < clusters.size(); ++c) {
            if (alpha == kInf)
                basis(1 + c) = 0.0;
            else if (alpha == -kInf)
                basis(1 + c) = 1.0 / cluster_loc[c];
            else
                basis(1 + c) = 1.0 / (std::exp(alpha) + cluster_loc[c]);
        }
        Eigen::VectorXd direct = path_probability_vector(y0, x, alpha, params);
        worst = std::max(worst, ((basis * merged).transpose() - direct).cwiseAbs().maxCoeff());
    }
    if (worst > 1e-8)
        throw numerical_error("valid_space_dimension: residue reconstruction error " +
                              std::to_string(worst) + " (near-degenerate x or params)");

    // Row scaling preserves rank and equalizes the residue magnitudes.
    Eigen::MatrixXd scaled = merged;
    for (int r = 0; r < nm; ++r) {
        double m = scaled.row(r).cwiseAbs().maxCoeff();
        if (m > 0) scaled.row(r) /= m;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    double tol = rel_tol * smax;
    int rank = 0;
    RankDiagnostics d;
    d.max_singular = smax;
    for (int j = 0; j < sv.size(); ++j) {
        if (sv(j) > tol) {
            ++rank;
            d.smallest_kept = sv(j);
        } else {
            d.largest_dropped = std::max(d.largest_dropped, sv(j));
        }
    }
    d.rank = rank;
    if (diag) *diag = d;
    return npaths - rank;
}

void Lemma1Kernel::validate() const {
    if (Q < 1) throw invalid_input("Lemma1Kernel: Q must be >= 1");
    if (pi21.size() != Q || pi22.size() != Q) throw invalid_input("Lemma1Kernel: pi21/pi22 need length Q");
    for (int w = 0; w < Q; ++w)
        if (!(pi21(w) >= pi22(w))) throw invalid_input("Lemma1Kernel: need pi21(w) >= pi22(w)");
    auto row_stochastic = [](const Eigen::MatrixXd& m) {
        for (int i = 0; i < m.rows(); ++i) {
            if ((m.row(i).array() < 0).any()) return false;
            if (std::abs(m.row(i).sum() - 1.0) > 1e-12) return false;
        }
        return true;
    };
    if (f.rows() != 2 || f.cols() != Q || !row_stochastic(f))
        throw invalid_input("Lemma1Kernel: f must be 2 x Q row-stochastic");
    if (p3_lo.rows() != Q || p3_lo.cols() != 2 || !row_stochastic(p3_lo))
        throw invalid_input("Lemma1Kernel: p3_lo must be Q x 2 row-stochastic");
    if (p3_hi.rows() != Q || p3_hi.cols() != 2 || !row_stochastic(p3_hi))
        throw invalid_input("Lemma1Kernel: p3_hi must be Q x 2 row-stochastic");
}

double lemma1_expectation(const Lemma1Kernel& k) {
    k.validate();
    KahanSum sum;
    for (int y1 = 0; y1 <= 1; ++y1) {
        double p1 = y1 ? logistic_cdf(k.pi1) : logistic_cdf(-k.pi1);
        for (int w = 0; w < k.Q; ++w) {
            double pw = k.f(y1, w);
            double a = k.pi21(w), b = k.pi22(w);
            double p2[3] = {logistic_cdf(-a), logistic_cdf_diff(a, b), logistic_cdf(b)};
            for (int y2 = 1; y2 <= 3; ++y2) {
                for (int y3 = 0; y3 <= 1; ++y3) {
                    double p3;
                    if (y2 == 1)
                        p3 = k.p3_lo(w, y3);
                    else if (y2 == 3)
                        p3 = k.p3_hi(w, y3);
                    else
                        p3 = y3 ? logistic_cdf(k.pi3) : logistic_cdf(-k.pi3);

                    double m = 0.0;
                    if (y1 == 0 && y2 == 2 && y3 == 0)
                        m = std::exp(k.pi1 - k.pi3) * std::expm1(k.pi3 - b) / std::expm1(a - b);
                    else if (y1 == 0 && y2 == 2 && y3 == 1)
                        m = std::exp(k.pi1 - k.pi3) * -std::expm1(b - k.pi3) / -std::expm1(b - a);
                    else if (y1 == 0 && y2 == 3)
                        m = std::exp(k.pi1 - k.pi3);
                    else if (y1 == 1 && y2 == 1)
                        m = -1.0;
                    else if (y1 == 1 && y2 == 2 && y3 == 0)
                        m = std::expm1(k.pi3 - a) / -std::expm1(b - a);
                    else if (y1 == 1 && y2 == 2 && y3 == 1)
                        m = -std::expm1(a - k.pi3) / std::expm1(a - b);

                    double p = p1 * pw * p2[y2 - 1] * p3;
                    if (p != 0.0 && m != 0.0) sum.add(p * m);
                }
            }
        }
    }
    return sum.value();
}

void Lemma2Kernel::validate() const {
    if (pi2.size() != Q || pi3.size() != Q) throw invalid_input("Lemma2Kernel: pi2/pi3 need length Q");
    if (f.rows() != 2 || f.cols() != Q) throw invalid_input("Lemma2Kernel: f must be 2 x Q");
    if (g1.size() != Q) throw invalid_input("Lemma2Kernel: g1 needs length Q");
    if (g0.rows() != Q || g0.cols() != Q) throw invalid_input("Lemma2Kernel: g0 must be Q x Q");
    if (violate_independence && (g1_violating.rows() != Q || g1_violating.cols() != Q))
        throw invalid_input("Lemma2Kernel: g1_violating must be Q x Q");
}

double lemma2_expectation(const Lemma2Kernel& k) {
    k.validate();
    KahanSum sum;
    for (int y1 = 0; y1 <= 1; ++y1) {
        double p1 = logistic_cdf((2 * y1 - 1) * k.pi1);
        for (int w = 0; w < k.Q; ++w) {
            double pw = k.f(y1, w);
            for (int y2 = 0; y2 <= 1; ++y2) {
                double p2 = logistic_cdf((2 * y2 - 1) * k.pi2(w));
                for (int v = 0; v < k.Q; ++v) {
                    double gv = y2 ? (k.violate_independence ? k.g1_violating(w, v) : k.g1(v))
                                   : k.g0(w, v);
                    for (int y3 = 0; y3 <= 1; ++y3) {
                        double p3 = logistic_cdf((2 * y3 - 1) * k.pi3(v));

                        double m = 0.0;
                        if (y1 == 0 && y2 == 1 && y3 == 0)
                            m = std::exp(k.pi1 - k.pi2(w));
                        else if (y1 == 0 && y2 == 1 && y3 == 1)
                            m = std::exp(k.pi1 - k.pi3(v));
                        else if (y1 == 1 && y2 == 0)
                            m = -1.0;
                        else if (y1 == 1 && y2 == 1 && y3 == 0)
                            m = std::expm1(k.pi3(v) - k.pi2(w));

                        double p = p1 * pw * p2 * gv * p3;
                        if (p != 0.0 && m != 0.0) sum.add(p * m);
                    }
                }
            }
        }
    }
    return sum.value();
}

namespace {

Eigen::VectorXd random_simplex(int n, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = expo(rng);
    return v / v.sum();
}

}  // namespace

Lemma1Kernel random_lemma1_kernel(int Q, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> gap(0.3, 2.0);
    Lemma1Kernel k;
    k.Q = Q;
    k.pi1 = u(rng);
    k.pi3 = u(rng);
    k.pi22.resize(Q);
    k.pi21.resize(Q);
    for (int w = 0; w < Q; ++w) {
        k.pi22(w) = u(rng);
        k.pi21(w) = k.pi22(w) + gap(rng);
    }
    k.f.resize(2, Q);
    k.f.row(0) = random_simplex(Q, rng).transpose();
    k.f.row(1) = random_simplex(Q, rng).transpose();
    k.p3_lo.resize(Q, 2);
    k.p3_hi.resize(Q, 2);
    for (int w = 0; w < Q; ++w) {
        k.p3_lo.row(w) = random_simplex(2, rng).transpose();
        k.p3_hi.row(w) = random_simplex(2, rng).transpose();
    }
    return k;
}

Lemma2Kernel random_lemma2_kernel(int Q, std::mt19937_64& rng, bool violate_independence) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Lemma2Kernel k;
    k.Q = Q;
    k.pi1 = u(rng);
    k.pi2.resize(Q);
    k.pi3.resize(Q);
    for (int w = 0; w < Q; ++w) {
        k.pi2(w) = u(rng);
        k.pi3(w) = u(rng);
    }
    k.f.resize(2, Q);
    k.f.row(0) = random_simplex(Q, rng).transpose();
    k.f.row(1) = random_simplex(Q, rng).transpose();
    k.g1 = random_simplex(Q, rng);
    k.g0.resize(Q, Q);
    for (int w = 0; w < Q; ++w) k.g0.row(w) = random_simplex(Q, rng).transpose();
    k.violate_independence = violate_independence;
    if (violate_independence) {
        k.g1_violating.resize(Q, Q);
        for (int w = 0; w < Q; ++w) k.g1_violating.row(w) = random_simplex(Q, rng).transpose();
    }
    return k;
}

LemmaCheckResult lemma_kernel_check(WhichLemma which, int Q, int trials, std::uint64_t seed,
                                    bool negative_control) {
    if (negative_control && which != WhichLemma::Lemma2)
        throw invalid_input("lemma_kernel_check: negative control only defined for lemma 2");
    auto rng = make_stream(seed, 0);
    LemmaCheckResult res;
    for (int trial = 0; trial < trials; ++trial) {
        double e;
        if (which == WhichLemma::Lemma1)
            e = lemma1_expectation(random_lemma1_kernel(Q, rng));
        else
            e = lemma2_expectation(random_lemma2_kernel(Q, rng, negative_control));
        res.max_abs_expectation = std::max(res.max_abs_expectation, std::abs(e));
        if (std::abs(e) > 1e-6) ++res.violations_detected;
    }
    return res;
}

}  // namespace dopl
