#include "dopl/gmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "dopl/optim.hpp"

namespace dopl {

namespace {

// Regularized incomplete gamma Q(a, x) by series (x < a+1) or continued
// fraction (otherwise).
double gammq(double a, double x) {
    if (x < 0 || a <= 0) throw invalid_input("gammq: bad arguments");
    if (x == 0) return 1.0;
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

Eigen::VectorXd instrument_vector(const PanelDataset& data, int i, InstrumentKind kind) {
    if (kind == InstrumentKind::InitialConditionIndicators) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(data.Q);
        g(data.y0[i] - 1) = 1.0;
        return g;
    }
    const int npairs = data.T * (data.T - 1) / 2;
    Eigen::VectorXd g(1 + data.K * npairs);
    g(0) = 1.0;
    int pos = 1;
    for (int t = 0; t < data.T; ++t)
        for (int s = t + 1; s < data.T; ++s) {
            g.segment(pos, data.K) = (data.x[i].row(t) - data.x[i].row(s)).transpose();
            pos += data.K;
        }
    return g;
}

struct StackLayout {
    std::vector<std::vector<int>> blocks;  // family positions per y0, position-aligned
    int F = 0;                             // moment functions per initial condition
    int L = 0;                             // instrument vector length (non-efficient)
    int M = 0;
};

// Each unit evaluates the family slice for its own initial condition; the
// stack row is the Kronecker product g(y0, x) (x) m_{y0}(y, x, theta). The
// per-y0 slices must therefore be position-aligned and of equal size.
StackLayout make_layout(const PanelDataset& data, const InstrumentSpec& inst,
                        const std::vector<MomentIndex>& family) {
    StackLayout lay;
    lay.blocks.assign(data.Q, {});
    for (size_t j = 0; j < family.size(); ++j) {
        if (family[j].y0 < 1 || family[j].y0 > data.Q)
            throw invalid_input("build_moment_stack: family y0 outside 1..Q");
        lay.blocks[family[j].y0 - 1].push_back(static_cast<int>(j));
    }
    lay.F = static_cast<int>(lay.blocks[0].size());
    for (int q = 1; q < data.Q; ++q)
        if (static_cast<int>(lay.blocks[q].size()) != lay.F)
            throw invalid_input("build_moment_stack: family slices differ across y0");
    if (inst.kind == InstrumentKind::Efficient) {
        lay.L = 0;
        lay.M = data.K + 2 * data.Q - 1;
        return lay;
    }
    lay.L = inst.kind == InstrumentKind::InitialConditionIndicators
                ? data.Q
                : 1 + data.K * data.T * (data.T - 1) / 2;
    lay.M = lay.L * lay.F;
    return lay;
}

std::vector<int> path_of_unit(const PanelDataset& data, int i) {
    std::vector<int> y(data.T);
    for (int t = 0; t < data.T; ++t) y[t] = data.y(i, t);
    return y;
}

// Per-unit exponential tables: every family branch is a product of ratios of
// exp(single index) and exp(threshold) values, so with these precomputed a
// moment evaluation is a handful of multiplications. trans[a](prev-1, q-1) is
// the zero-heterogeneity transition probability for period a+1.
struct UnitTables {
    Eigen::MatrixXd E;   // T x Q, exp(x_a' beta + gamma_l)
    Eigen::VectorXd eL;  // exp(lambda_q), entries 1..Q-1 (0 unused)
    std::vector<Eigen::MatrixXd> trans;
};

UnitTables make_tables(const Eigen::MatrixXd& x, const Params& p) {
    const int T = static_cast<int>(x.rows()), Q = p.Q();
    UnitTables t;
    t.E.resize(T, Q);
    for (int a = 0; a < T; ++a)
        for (int l = 1; l <= Q; ++l)
            t.E(a, l - 1) = std::exp(single_index(l, x.row(a).transpose(), p));
    t.eL.resize(Q);
    for (int q = 1; q <= Q - 1; ++q) t.eL(q) = std::exp(p.lambda_ext(q));
    t.trans.resize(T);
    for (int a = 0; a < T; ++a) {
        t.trans[a].resize(Q, Q);
        for (int prev = 1; prev <= Q; ++prev)
            t.trans[a].row(prev - 1) =
                transition_probs(prev, x.row(a).transpose(), 0.0, p).transpose();
    }
    return t;
}

// Table-based moment evaluation; agrees with moment_general to rounding.
double table_moment(const MomentIndex& ix, int y0, const int* y, const UnitTables& tb, int Q) {
    for (int a = 0; a < ix.t - 1; ++a)
        if (y[a] != ix.history[a]) return 0.0;
    const int t = ix.t, s = ix.s, r = ix.r;
    const int yt = y[t - 1], ys = y[s - 1], yr = y[r - 1];
    const int pt = (t == 1) ? y0 : y[t - 2];
    const double Et = tb.E(t - 1, pt - 1);
    const double Es = tb.E(s - 1, y[s - 2] - 1);
    const double Er = tb.E(r - 1, y[r - 2] - 1);
    const auto& eL = tb.eL;
    const int q1 = ix.q1, q2 = ix.q2, q3 = ix.q3;
    if (q2 == 1) {
        if (yt <= q1) {
            if (ys > 1) return -1.0;
            if (yr > q3) return (Es / Er) * (eL(q3) / eL(1)) - 1.0;
            return 0.0;
        }
        if (ys != 1) return 0.0;
        if (yr <= q3) return (Er / Et) * (eL(q1) / eL(q3));
        return (Es / Et) * (eL(q1) / eL(1));
    }
    if (q2 == Q) {
        if (yt > q1) {
            if (ys < Q) return -1.0;
            if (yr <= q3) return (Er / Es) * (eL(Q - 1) / eL(q3)) - 1.0;
            return 0.0;
        }
        if (ys != Q) return 0.0;
        if (yr <= q3) return (Et / Es) * (eL(Q - 1) / eL(q1));
        return (Et / Er) * (eL(q3) / eL(q1));
    }
    const double rlam = eL(q2) / eL(q2 - 1);  // exp of the middle gap, > 1
    if (yt <= q1) {
        if (ys > q2) return (Et / tb.E(r - 1, q2 - 1)) * (eL(q3) / eL(q1));
        if (ys < q2) return 0.0;
        const double front = (Et / Er) * (eL(q3) / eL(q1));
        if (yr <= q3) return front * ((Er / Es) * (eL(q2) / eL(q3)) - 1.0) / (rlam - 1.0);
        return front * (1.0 - (Es / Er) * (eL(q3) / eL(q2))) / (1.0 - 1.0 / rlam);
    }
    if (ys < q2) return -1.0;
    if (ys > q2) return 0.0;
    if (yr <= q3) return ((Er / Es) * (eL(q2 - 1) / eL(q3)) - 1.0) / (1.0 - 1.0 / rlam);
    return (1.0 - (Es / Er) * (eL(q3) / eL(q2 - 1))) / (rlam - 1.0);
}

// Family slice for unit i divided entrywise by the model-implied conditional
// standard deviation at the same parameters (sum of p(path) m(path)^2 over
// all Q^T outcome paths; the conditional mean is zero). Entries whose scale
// underflows are set to zero.
Eigen::VectorXd studentized_family(const PanelDataset& data, int i, const Params& params,
                                   const std::vector<int>& block,
                                   const std::vector<MomentIndex>& family) {
    const int T = data.T, Q = data.Q, F = static_cast<int>(block.size());
    const UnitTables tb = make_tables(data.x[i], params);
    std::vector<int> y = path_of_unit(data, i);
    Eigen::VectorXd m(F);
    for (int j = 0; j < F; ++j) m(j) = table_moment(family[block[j]], data.y0[i], y.data(), tb, Q);

    Eigen::VectorXd var = Eigen::VectorXd::Zero(F);
    std::vector<int> yy(T, 1);
    while (true) {
        double pr = tb.trans[0](data.y0[i] - 1, yy[0] - 1);
        for (int a = 1; a < T; ++a) pr *= tb.trans[a](yy[a - 1] - 1, yy[a] - 1);
        if (pr > 0.0)
            for (int j = 0; j < F; ++j) {
                double v = table_moment(family[block[j]], data.y0[i], yy.data(), tb, Q);
                if (v != 0.0) var(j) += pr * v * v;
            }
        int pos = T - 1;
        while (pos >= 0 && yy[pos] == Q) yy[pos--] = 1;
        if (pos < 0) break;
        ++yy[pos];
    }
    for (int j = 0; j < F; ++j) {
        double sd = std::sqrt(var(j));
        m(j) = sd > 1e-150 ? m(j) / sd : 0.0;
    }
    return m;
}

}  // namespace

double chisq_sf(double x, int k) {
    if (k < 1) throw invalid_input("chisq_sf: need k >= 1");
    if (x <= 0) return 1.0;
    return gammq(0.5 * k, 0.5 * x);
}

Eigen::MatrixXd build_moment_stack(const PanelDataset& data, const Params& params,
                                   const InstrumentSpec& inst,
                                   const std::vector<MomentIndex>& family) {
    data.validate();
    if (params.Q() != data.Q || params.K() != data.K)
        throw invalid_input("build_moment_stack: params dimensions do not match data");
    StackLayout lay = make_layout(data, inst, family);

    std::vector<Eigen::MatrixXd> eff;
    if (inst.kind == InstrumentKind::Efficient) {
        if (!inst.rf || !inst.prelim)
            throw invalid_input("build_moment_stack: efficient instruments need rf and prelim");
        eff = efficient_instruments(data, *inst.rf, *inst.prelim, family, inst.studentize);
    }

    const bool stud = inst.studentize;
    Eigen::MatrixXd stack = Eigen::MatrixXd::Zero(data.n, lay.M);
    for (int i = 0; i < data.n; ++i) {
        const auto& block = lay.blocks[data.y0[i] - 1];
        Eigen::VectorXd m(lay.F);
        if (stud) {
            m = studentized_family(data, i, params, block, family);
        } else {
            std::vector<int> y = path_of_unit(data, i);
            for (int j = 0; j < lay.F; ++j)
                m(j) = moment_general(family[block[j]], data.y0[i], y, data.x[i], params);
        }
        if (inst.kind == InstrumentKind::Efficient) {
            stack.row(i) = (eff[i] * m).transpose();
        } else {
            Eigen::VectorXd g = instrument_vector(data, i, inst.kind);
            for (int j = 0; j < lay.F; ++j)
                stack.row(i).segment(j * lay.L, lay.L) = (g * m(j)).transpose();
        }
    }
    return stack;
}

namespace {

/// Free-coordinate parametrization: beta unrestricted, gamma with one pinned
/// zero, thresholds as a pinned zero plus log-gaps (always monotone).
struct FreeMap {
    int K, Q, gpin, lpin;

    int dim() const { return K + (Q - 1) + (Q - 2); }

    Params to_params(const Eigen::VectorXd& u) const {
        Eigen::VectorXd beta = u.head(K);
        Eigen::VectorXd gamma(Q);
        int pos = K;
        for (int q = 0; q < Q; ++q) gamma(q) = q == gpin ? 0.0 : u(pos++);
        Eigen::VectorXd lam = Q == 2 ? Eigen::VectorXd::Zero(1)
                                     : lambda_from_free(u.segment(pos, Q - 2), lpin, 0.0);
        return Params(beta, gamma, lam, std::nullopt, gpin, lpin);
    }

    Eigen::VectorXd to_free(const Params& p) const {
        Eigen::VectorXd u(dim());
        u.head(K) = p.beta();
        int pos = K;
        for (int q = 0; q < Q; ++q)
            if (q != gpin) u(pos++) = p.gamma()(q) - p.gamma()(gpin);
        if (Q > 2) {
            Eigen::VectorXd lam = p.lambda().array() - p.lambda()(lpin);
            u.segment(pos, Q - 2) = free_from_lambda(lam, lpin);
        }
        return u;
    }
};

/// Mean unconditional moments without materializing the full stack.
Eigen::VectorXd moment_means(const PanelDataset& data, const Params& params,
                             const InstrumentSpec& inst, const std::vector<MomentIndex>& family,
                             const StackLayout& lay,
                             const std::vector<Eigen::MatrixXd>* eff) {
    const bool stud = inst.studentize;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(lay.M);
    for (int i = 0; i < data.n; ++i) {
        const auto& block = lay.blocks[data.y0[i] - 1];
        Eigen::VectorXd m(lay.F);
        if (stud) {
            m = studentized_family(data, i, params, block, family);
        } else {
            std::vector<int> y = path_of_unit(data, i);
            for (int j = 0; j < lay.F; ++j)
                m(j) = moment_general(family[block[j]], data.y0[i], y, data.x[i], params);
        }
        if (inst.kind == InstrumentKind::Efficient) {
            acc += (*eff)[i] * m;
        } else {
            Eigen::VectorXd g = instrument_vector(data, i, inst.kind);
            for (int j = 0; j < lay.F; ++j) acc.segment(j * lay.L, lay.L) += g * m(j);
        }
    }
    return acc / data.n;
}

/// Embed a kept-column weight matrix into full moment coordinates; dropped
/// (zero-variance) columns carry zero weight.
Eigen::MatrixXd expand_weight(const Eigen::MatrixXd& wk, const std::vector<int>& keep, int M) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(M, M);
    for (size_t a = 0; a < keep.size(); ++a)
        for (size_t b = 0; b < keep.size(); ++b) w(keep[a], keep[b]) = wk(a, b);
    return w;
}

}  // namespace

GmmEstimate gmm_estimate(const PanelDataset& data, const std::vector<MomentIndex>& family,
                         const InstrumentSpec& inst, const GmmOptions& opts) {
    data.validate();
    if (family.empty()) throw invalid_input("gmm_estimate: empty moment family");
    if (opts.gamma_norm_index < 0 || opts.gamma_norm_index >= data.Q ||
        opts.lambda_norm_index < 0 || opts.lambda_norm_index >= data.Q - 1)
        throw invalid_input("gmm_estimate: normalization index out of range");

    StackLayout lay = make_layout(data, inst, family);
    FreeMap fm{data.K, data.Q, opts.gamma_norm_index, opts.lambda_norm_index};

    std::vector<Eigen::MatrixXd> eff;
    InstrumentSpec inst_fixed = inst;
    if (inst.kind == InstrumentKind::Efficient) {
        if (!inst.rf || !inst.prelim)
            throw invalid_input("gmm_estimate: efficient instruments need rf and prelim");
        eff = efficient_instruments(data, *inst.rf, *inst.prelim, family, inst.studentize);
    }

    GmmEstimate est;
    est.moment_dim = lay.M;

    // Stage 0: beta = gamma = 0, thresholds from the pooled auxiliary MLE,
    // shifted so the pinned threshold is exactly zero.
    Params theta0(Eigen::VectorXd::Zero(data.K), Eigen::VectorXd::Zero(data.Q),
                  Eigen::VectorXd::LinSpaced(data.Q - 1, 0.0, data.Q - 2.0), std::nullopt,
                  opts.gamma_norm_index, opts.lambda_norm_index);
    if (opts.start) {
        theta0 = unpack_theta(*opts.start, data.K, data.Q);
    } else {
        ReducedFormModel rf0 = ordered_logit_mle(data, RfDesign::PooledThresholdsOnly);
        Eigen::VectorXd lam0 = rf0.lambda[0].array() - rf0.lambda[0](opts.lambda_norm_index);
        theta0 = Params(Eigen::VectorXd::Zero(data.K), Eigen::VectorXd::Zero(data.Q), lam0,
                        std::nullopt, opts.gamma_norm_index, opts.lambda_norm_index);
    }
    est.stages.push_back({"stage0", pack_theta(theta0), 0.0});

    auto stack_at = [&](const Params& th) { return build_moment_stack(data, th, inst_fixed, family); };

    // Zero-variance columns get weight 0 in every stage (kept out entirely).
    Eigen::MatrixXd stack0 = stack_at(theta0);
    Eigen::VectorXd mean0 = stack0.colwise().mean();
    Eigen::VectorXd var0(lay.M);
    for (int j = 0; j < lay.M; ++j)
        var0(j) = (stack0.col(j).array() - mean0(j)).square().sum() / data.n;
    std::vector<int> keep;
    for (int j = 0; j < lay.M; ++j)
        if (var0(j) > 1e-20) keep.push_back(j);
    est.dropped_columns = lay.M - static_cast<int>(keep.size());
    const int Mk = static_cast<int>(keep.size());
    if (Mk < fm.dim()) throw numerical_error("gmm_estimate: fewer usable moments than parameters");

    auto select = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd v(Mk);
        for (int j = 0; j < Mk; ++j) v(j) = full(keep[j]);
        return v;
    };

    // Weight is either a diagonal (stored as a vector) or a dense matrix.
    Eigen::VectorXd wdiag;
    Eigen::MatrixXd wfull;
    bool diagonal_stage = true;

    // n-scaled so stage objectives live on the chi-square scale of the J
    // statistic regardless of sample size; gradient tolerances below assume it.
    auto objective_value = [&](const Params& th) {
        Eigen::VectorXd g = select(moment_means(data, th, inst_fixed, family, lay,
                                                eff.empty() ? nullptr : &eff));
        if (diagonal_stage) return data.n * g.dot(wdiag.cwiseProduct(g));
        return data.n * g.dot(wfull * g);
    };
    // Points the line search probes can be arbitrarily bad (non-finite
    // coordinates, threshold gaps overflowing exp); report +inf so the
    // optimizer backs off instead of propagating a constructor failure.
    auto eval_free = [&](const Eigen::VectorXd& u) -> double {
        if (!u.allFinite()) return kInf;
        try {
            return objective_value(fm.to_params(u));
        } catch (const invalid_input&) {
            return kInf;
        }
    };
    Objective obj = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
        double f = eval_free(u);
        if (grad) *grad = numeric_gradient_forward(eval_free, u, f);
        return f;
    };

    auto variances_at = [&](const Params& th) {
        Eigen::MatrixXd s = stack_at(th);
        Eigen::VectorXd mu = s.colwise().mean();
        Eigen::VectorXd v(lay.M);
        for (int j = 0; j < lay.M; ++j)
            v(j) = (s.col(j).array() - mu(j)).square().sum() / data.n;
        return v;
    };

    OptimOptions oopts;
    oopts.max_iter = opts.max_iter;
    oopts.grad_tol = 1e-6;

    // Stage 1: inverse-variance diagonal weights at the stage-0 point,
    // minimized from the stage-0 start plus perturbed restarts.
    wdiag = select(var0).cwiseInverse();
    Eigen::VectorXd u0 = fm.to_free(theta0);
    OptimResult best;
    best.f = kInf;
    auto rng = make_stream(opts.seed, 0x6d6d67ULL);
    std::normal_distribution<double> gauss(0.0, opts.start_spread);
    for (int s = 0; s < std::max(1, opts.multistart); ++s) {
        Eigen::VectorXd u = u0;
        if (s > 0)
            for (int k = 0; k < u.size(); ++k) u(k) += gauss(rng);
        if (s > 0 && !std::isfinite(eval_free(u))) continue;  // skip unusable restart
        OptimResult r = minimize_bfgs(obj, u, oopts);
        if (r.f < best.f) best = r;
    }
    est.stages.push_back({"stage1", pack_theta(fm.to_params(best.x)), best.f});

    // Stage 2: refreshed diagonal weights at the stage-1 estimate.
    wdiag = select(variances_at(fm.to_params(best.x)))
                .cwiseMax(1e-300)
                .cwiseInverse();
    OptimResult r2 = minimize_bfgs(obj, best.x, oopts);
    est.stages.push_back({"stage2", pack_theta(fm.to_params(r2.x)), r2.f});

    // Stages 3 and 4: full moment covariance at the previous stage's
    // estimate, diagonal inflated by 10%, inverted. The repeat corrects the
    // remaining pull of weights computed at a biased point.
    auto full_weight_at = [&](const Params& th) {
        Eigen::MatrixXd s = stack_at(th);
        Eigen::MatrixXd sk(data.n, Mk);
        for (int j = 0; j < Mk; ++j) sk.col(j) = s.col(keep[j]);
        Eigen::VectorXd mu = sk.colwise().mean();
        sk.rowwise() -= mu.transpose();
        Eigen::MatrixXd S = sk.transpose() * sk / data.n;
        S.diagonal() *= 1.1;
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success)
            throw numerical_error("gmm_estimate: weight matrix singular after diagonal inflation");
        return Eigen::MatrixXd(llt.solve(Eigen::MatrixXd::Identity(Mk, Mk)));
    };
    diagonal_stage = false;
    oopts.grad_tol = 1e-6;
    wfull = full_weight_at(fm.to_params(r2.x));
    OptimResult r3 = minimize_bfgs(obj, r2.x, oopts);
    est.stages.push_back({"stage3", pack_theta(fm.to_params(r3.x)), r3.f});

    wfull = full_weight_at(fm.to_params(r3.x));
    OptimResult r4 = minimize_bfgs(obj, r3.x, oopts);
    est.stages.push_back({"stage4", pack_theta(fm.to_params(r4.x)), r4.f});
    est.converged = r4.converged;

    est.theta_hat = fm.to_params(r4.x);
    est.vcov = sandwich_variance(stack_at, est.theta_hat, expand_weight(wfull, keep, lay.M),
                                 opts.gamma_norm_index, opts.lambda_norm_index);
    est.std_errors = est.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    est.j = j_statistic(stack_at(est.theta_hat), fm.dim());
    return est;
}

Eigen::MatrixXd sandwich_variance(const std::function<Eigen::MatrixXd(const Params&)>& stack,
                                  const Params& theta_hat, const Eigen::MatrixXd& W,
                                  int gamma_norm_index, int lambda_norm_index) {
    const int K = theta_hat.K(), Q = theta_hat.Q();
    const int p = K + 2 * Q - 1;
    std::vector<int> free_idx;
    std::vector<std::string> names;
    for (int k = 0; k < K; ++k) {
        free_idx.push_back(k);
        names.push_back("beta" + std::to_string(k + 1));
    }
    for (int q = 0; q < Q; ++q)
        if (q != gamma_norm_index) {
            free_idx.push_back(K + q);
            names.push_back("gamma" + std::to_string(q + 1));
        }
    for (int j = 0; j < Q - 1; ++j)
        if (j != lambda_norm_index) {
            free_idx.push_back(K + Q + j);
            names.push_back("lambda" + std::to_string(j + 1));
        }
    const int pf = static_cast<int>(free_idx.size());

    Eigen::MatrixXd s0 = stack(theta_hat);
    const int n = static_cast<int>(s0.rows());
    const int M = static_cast<int>(s0.cols());
    if (W.rows() != M || W.cols() != M)
        throw invalid_input("sandwich_variance: weight dimension mismatch");
    Eigen::VectorXd mu = s0.colwise().mean();
    Eigen::MatrixXd cen = s0.rowwise() - mu.transpose();
    Eigen::MatrixXd S = cen.transpose() * cen / n;

    Eigen::VectorXd theta0 = pack_theta(theta_hat);
    Eigen::MatrixXd Gamma(M, pf);
    for (int k = 0; k < pf; ++k) {
        int idx = free_idx[k];
        double h = std::max(1e-5, 1e-5 * std::abs(theta0(idx)));
        Eigen::VectorXd tp = theta0, tm = theta0;
        tp(idx) += h;
        tm(idx) -= h;
        Eigen::VectorXd gp = stack(unpack_theta(tp, K, Q)).colwise().mean();
        Eigen::VectorXd gm = stack(unpack_theta(tm, K, Q)).colwise().mean();
        Gamma.col(k) = (gp - gm) / (2 * h);
    }

    Eigen::MatrixXd G = Gamma.transpose() * W * Gamma;
    // Equilibrate before the rank check so columns on very different scales
    // (the moment Jacobian spans orders of magnitude) are judged relative to
    // their own size, not the largest pivot.
    Eigen::VectorXd d = G.diagonal();
    if ((d.array() <= 0.0).any())
        throw numerical_error("sandwich_variance: non-positive curvature diagonal");
    Eigen::VectorXd dinv = d.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd Gn = dinv.asDiagonal() * G * dinv.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Gn);
    lu.setThreshold(1e-10);
    if (lu.rank() < pf) {
        Eigen::MatrixXd ker = lu.kernel();
        std::string msg = "sandwich_variance: deficient directions:";
        for (int c = 0; c < ker.cols(); ++c) {
            int amax;
            ker.col(c).cwiseAbs().maxCoeff(&amax);
            msg += " " + names[amax];
        }
        throw numerical_error(msg);
    }
    Eigen::MatrixXd Ginv = dinv.asDiagonal() * lu.inverse() * dinv.asDiagonal();
    Eigen::MatrixXd mid = Gamma.transpose() * W * S * W * Gamma;
    Eigen::MatrixXd vfree = Ginv * mid * Ginv / n;

    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(p, p);
    for (int a = 0; a < pf; ++a)
        for (int b = 0; b < pf; ++b) v(free_idx[a], free_idx[b]) = vfree(a, b);
    return v;
}

JTest j_statistic(const Eigen::MatrixXd& stack_at_thetahat, int n_free_params) {
    const int n = static_cast<int>(stack_at_thetahat.rows());
    const int M = static_cast<int>(stack_at_thetahat.cols());
    Eigen::VectorXd mu = stack_at_thetahat.colwise().mean();
    Eigen::MatrixXd cen = stack_at_thetahat.rowwise() - mu.transpose();
    Eigen::MatrixXd S = cen.transpose() * cen / n;

    JTest out;
    out.dof = M - n_free_params;
    if (out.dof <= 0) {
        out.available = false;
        return out;
    }
    double ridge = 1e-12 * S.trace() / M;
    S.diagonal().array() += std::max(ridge, 1e-300);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("j_statistic: moment covariance singular beyond regularization");
    out.J = n * mu.dot(ldlt.solve(mu));
    out.available = true;
    out.p_value = chisq_sf(out.J, out.dof);
    return out;
}

}  // namespace dopl
