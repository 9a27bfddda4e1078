#include "dopl/reduced_form.hpp"

#include <Eigen/Cholesky>

#include "dopl/model.hpp"
#include "dopl/optim.hpp"
#include "dopl/oracle.hpp"

namespace dopl {

namespace {

/// One ordered-logit estimation slice: rows of the design matrix plus the
/// observed 1-based outcome levels.
struct OlSlice {
    Eigen::MatrixXd w;  // n_obs x D (D may be 0)
    std::vector<int> y;
    int Q = 0;
};

/// Mean negative log-likelihood and gradient in the parametrization
/// (b, lambda); the 1/n scaling keeps gradient tolerances sample-size
/// independent. Non-increasing thresholds are rejected with +inf.
double ol_negloglik(const OlSlice& sl, const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    const int D = static_cast<int>(sl.w.cols());
    const int Q = sl.Q;
    Eigen::VectorXd b = theta.head(D);
    Eigen::VectorXd lam = theta.tail(Q - 1);
    for (int j = 1; j < Q - 1; ++j)
        if (!(lam(j) > lam(j - 1))) return kInf;

    auto lam_ext = [&](int j) {
        if (j <= 0) return -kInf;
        if (j >= Q) return kInf;
        return lam(j - 1);
    };
    auto dens = [](double a) {
        if (std::isinf(a)) return 0.0;
        double p = logistic_cdf(a);
        return p * (1.0 - p);
    };

    double nll = 0.0;
    if (grad) grad->setZero(theta.size());
    for (size_t i = 0; i < sl.y.size(); ++i) {
        int q = sl.y[i];
        double xb = D ? sl.w.row(i).dot(b) : 0.0;
        double a_hi = lam_ext(q) - xb;
        double a_lo = lam_ext(q - 1) - xb;
        double p = logistic_cdf_diff(a_hi, a_lo);
        if (!(p > 0)) return kInf;
        nll -= std::log(p);
        if (grad) {
            double d_hi = dens(a_hi) / p;
            double d_lo = dens(a_lo) / p;
            if (D) grad->head(D) += (d_hi - d_lo) * sl.w.row(i).transpose();
            if (q <= Q - 1) (*grad)(D + q - 1) -= d_hi;
            if (q >= 2) (*grad)(D + q - 2) += d_lo;
        }
    }
    const double n = static_cast<double>(sl.y.size());
    if (grad) *grad /= n;
    return nll / n;
}

/// Thresholds from empirical cumulative shares; levels are guaranteed present.
Eigen::VectorXd start_thresholds(const std::vector<int>& y, int Q) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(Q);
    for (int q : y) counts(q - 1) += 1.0;
    Eigen::VectorXd lam(Q - 1);
    double cum = 0.0, n = static_cast<double>(y.size());
    for (int q = 1; q <= Q - 1; ++q) {
        cum += counts(q - 1);
        double share = cum / n;
        lam(q - 1) = std::log(share) - std::log1p(-share);
    }
    return lam;
}

void check_levels(const std::vector<int>& y, int Q, const std::string& where) {
    std::vector<int> seen(Q + 1, 0);
    for (int q : y) seen[q] = 1;
    for (int q = 1; q <= Q; ++q)
        if (!seen[q])
            throw invalid_input("ordered_logit_mle: outcome level " + std::to_string(q) +
                                " never observed in " + where);
}

Eigen::VectorXd fit_slice(const OlSlice& sl, const Eigen::VectorXd& start, double* loglik,
                          double* gnorm) {
    Objective obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
        return ol_negloglik(sl, th, g);
    };
    OptimOptions opts;
    opts.grad_tol = 1e-8;
    opts.max_iter = 1000;
    OptimResult res = minimize_bfgs(obj, start, opts);
    if (res.grad.lpNorm<Eigen::Infinity>() > 1e-6)
        throw numerical_error("ordered_logit_mle: gradient norm " +
                              std::to_string(res.grad.lpNorm<Eigen::Infinity>()) +
                              " above 1e-6 (possible separation)");
    *loglik = -res.f * static_cast<double>(sl.y.size());
    *gnorm = res.grad.lpNorm<Eigen::Infinity>();
    return res.x;
}

/// Per-period design row: lagged-level dummies (2..Q), x_t, time-averaged x.
Eigen::VectorXd design_row(int Q, int K, int y_prev, const Eigen::VectorXd& x_t,
                           const Eigen::VectorXd& x_avg) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(Q - 1 + 2 * K);
    if (y_prev >= 2) w(y_prev - 2) = 1.0;
    w.segment(Q - 1, K) = x_t;
    w.tail(K) = x_avg;
    return w;
}

}  // namespace

Eigen::VectorXd ReducedFormModel::outcome_probs(int t, int y_prev, const Eigen::VectorXd& x_t,
                                                const Eigen::VectorXd& x_avg) const {
    const Eigen::VectorXd& lam =
        design == RfDesign::PooledThresholdsOnly ? lambda[0] : lambda[t - 1];
    double xb = 0.0;
    if (design == RfDesign::PerPeriodFull)
        xb = design_row(Q, K, y_prev, x_t, x_avg).dot(coef[t - 1]);
    Eigen::VectorXd p(Q);
    for (int q = 1; q <= Q; ++q) {
        double hi = q >= Q ? kInf : lam(q - 1) - xb;
        double lo = q <= 1 ? -kInf : lam(q - 2) - xb;
        p(q - 1) = logistic_cdf_diff(hi, lo);
    }
    return p;
}

ReducedFormModel ordered_logit_mle(const PanelDataset& data, RfDesign design) {
    data.validate();
    ReducedFormModel rf;
    rf.Q = data.Q;
    rf.T = data.T;
    rf.K = data.K;
    rf.design = design;
    rf.loglik = 0.0;
    rf.grad_norm = 0.0;

    if (design == RfDesign::PooledThresholdsOnly) {
        OlSlice sl;
        sl.Q = data.Q;
        sl.w.resize(data.n * data.T, 0);
        sl.y.reserve(data.n * data.T);
        for (int i = 0; i < data.n; ++i)
            for (int t = 0; t < data.T; ++t) sl.y.push_back(data.y(i, t));
        check_levels(sl.y, data.Q, "the pooled sample");
        double ll, gn;
        Eigen::VectorXd sol = fit_slice(sl, start_thresholds(sl.y, data.Q), &ll, &gn);
        rf.lambda.push_back(sol);
        rf.coef.emplace_back();
        rf.loglik = ll;
        rf.grad_norm = gn;
        return rf;
    }

    const int D = data.Q - 1 + 2 * data.K;
    for (int t = 1; t <= data.T; ++t) {
        OlSlice sl;
        sl.Q = data.Q;
        sl.w.resize(data.n, D);
        sl.y.resize(data.n);
        for (int i = 0; i < data.n; ++i) {
            int y_prev = t == 1 ? data.y0[i] : data.y(i, t - 2);
            Eigen::VectorXd x_avg = data.x[i].colwise().mean().transpose();
            sl.w.row(i) =
                design_row(data.Q, data.K, y_prev, data.x[i].row(t - 1).transpose(), x_avg)
                    .transpose();
            sl.y[i] = data.y(i, t - 1);
        }
        check_levels(sl.y, data.Q, "period " + std::to_string(t));
        Eigen::VectorXd start(D + data.Q - 1);
        start.head(D).setZero();
        start.tail(data.Q - 1) = start_thresholds(sl.y, data.Q);
        double ll, gn;
        Eigen::VectorXd sol = fit_slice(sl, start, &ll, &gn);
        rf.coef.push_back(sol.head(D));
        rf.lambda.push_back(sol.tail(data.Q - 1));
        rf.loglik += ll;
        rf.grad_norm = std::max(rf.grad_norm, gn);
    }
    return rf;
}

Eigen::VectorXd rf_path_probabilities(const ReducedFormModel& rf, int y0,
                                      const Eigen::MatrixXd& x) {
    auto paths = all_paths(rf.Q, rf.T);
    Eigen::VectorXd x_avg = x.colwise().mean().transpose();
    // Transition tables per (period, previous level), reused across paths.
    std::vector<std::vector<Eigen::VectorXd>> table(rf.T);
    for (int t = 1; t <= rf.T; ++t) {
        table[t - 1].resize(rf.Q);
        for (int q = 1; q <= rf.Q; ++q)
            table[t - 1][q - 1] = rf.outcome_probs(t, q, x.row(t - 1).transpose(), x_avg);
    }
    Eigen::VectorXd probs(paths.size());
    for (size_t j = 0; j < paths.size(); ++j) {
        double p = 1.0;
        int prev = y0;
        for (int t = 1; t <= rf.T; ++t) {
            p *= table[t - 1][prev - 1](paths[j][t - 1] - 1);
            prev = paths[j][t - 1];
        }
        probs(j) = p;
    }
    return probs;
}

std::vector<Eigen::MatrixXd> efficient_instruments(const PanelDataset& data,
                                                   const ReducedFormModel& rf,
                                                   const Params& params,
                                                   const std::vector<MomentIndex>& family,
                                                   bool studentize) {
    if (rf.design != RfDesign::PerPeriodFull)
        throw invalid_input("efficient_instruments: need a per-period reduced form");
    const int p = params.K() + 2 * params.Q() - 1;
    const Eigen::VectorXd theta0 = pack_theta(params);
    auto paths = all_paths(data.Q, data.T);

    // Family entries grouped by initial condition; moments outside a unit's
    // block are identically zero and carry no information.
    std::vector<std::vector<int>> by_y0(data.Q);
    for (size_t j = 0; j < family.size(); ++j) by_y0[family[j].y0 - 1].push_back(j);

    std::vector<Eigen::MatrixXd> out(data.n);
    for (int i = 0; i < data.n; ++i) {
        const auto& block = by_y0[data.y0[i] - 1];
        const int M = static_cast<int>(block.size());
        if (M == 0) {
            out[i] = Eigen::MatrixXd::Zero(p, 0);
            continue;
        }
        Eigen::VectorXd w = rf_path_probabilities(rf, data.y0[i], data.x[i]);

        // Moment values per path at theta0 and at the FD perturbations.
        auto moment_matrix = [&](const Params& th) {
            Eigen::MatrixXd m(paths.size(), M);
            for (size_t pj = 0; pj < paths.size(); ++pj)
                for (int j = 0; j < M; ++j)
                    m(pj, j) =
                        moment_general(family[block[j]], data.y0[i], paths[pj], data.x[i], th);
            return m;
        };
        Eigen::MatrixXd m0 = moment_matrix(params);

        // Studentizing divisor: model-implied conditional standard deviation of
        // each family entry at `params` (alpha = 0). A function of the
        // conditioning variables only, so it leaves conditional means at zero,
        // and it removes the exponential scale that makes the raw family
        // numerically rank-deficient.
        Eigen::VectorXd div = Eigen::VectorXd::Ones(M);
        if (studentize) {
            Eigen::VectorXd pm = path_probability_vector(data.y0[i], data.x[i], 0.0, params);
            for (int j = 0; j < M; ++j) {
                double sd = std::sqrt(pm.dot(m0.col(j).cwiseAbs2()));
                div(j) = sd > 1e-150 ? sd : kInf;  // dead entries map to zero
            }
            m0.array().rowwise() /= div.transpose().array();
        }
        Eigen::VectorXd em = m0.transpose() * w;
        Eigen::MatrixXd v = m0.transpose() * w.asDiagonal() * m0 - em * em.transpose();

        Eigen::MatrixXd grad(p, M);  // rows: theta coordinates of E[dm/dtheta | X]
        for (int k = 0; k < p; ++k) {
            double h = std::max(1e-5, 1e-5 * std::abs(theta0(k)));
            Eigen::VectorXd tp = theta0, tm = theta0;
            tp(k) += h;
            tm(k) -= h;
            Eigen::VectorXd ep =
                moment_matrix(unpack_theta(tp, params.K(), params.Q())).transpose() * w;
            Eigen::VectorXd en =
                moment_matrix(unpack_theta(tm, params.K(), params.Q())).transpose() * w;
            grad.row(k) = (div.cwiseInverse().cwiseProduct((ep - en) / (2 * h))).transpose();
        }

        double ridge = 1e-8 * v.trace() / M;
        v.diagonal().array() += std::max(ridge, 1e-300);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
        if (ldlt.info() != Eigen::Success)
            throw numerical_error("efficient_instruments: conditional covariance singular");
        out[i] = ldlt.solve(grad.transpose()).transpose();  // p x M
    }
    return out;
}

}  // namespace dopl
