#include "dopl/montecarlo.hpp"

#include <algorithm>

namespace dopl {

double sample_quantile(Eigen::VectorXd v, double p) {
    if (v.size() == 0) throw invalid_input("sample_quantile: empty sample");
    std::sort(v.data(), v.data() + v.size());
    double idx = p * (v.size() - 1);
    int lo = static_cast<int>(std::floor(idx));
    int hi = static_cast<int>(std::ceil(idx));
    double w = idx - lo;
    return (1.0 - w) * v(lo) + w * v(hi);
}

std::vector<std::string> parameter_names(int K, int Q) {
    std::vector<std::string> names;
    for (int k = 1; k <= K; ++k) names.push_back("beta" + std::to_string(k));
    for (int q = 1; q <= Q; ++q) names.push_back("gamma" + std::to_string(q));
    for (int j = 1; j <= Q - 1; ++j) names.push_back("lambda" + std::to_string(j));
    return names;
}

McResult run_montecarlo(const DgpConfig& base, const McOptions& opts) {
    base.validate();
    if (opts.replications < 1) throw invalid_input("run_montecarlo: need replications >= 1");

    const int p = base.K + 2 * base.Q - 1;
    McResult res;
    res.names = parameter_names(base.K, base.Q);
    res.truth = pack_theta(base.params);
    res.replications = opts.replications;

    GmmOptions gopts = opts.gmm;
    if (base.params.gamma_norm_index() >= 0) gopts.gamma_norm_index = base.params.gamma_norm_index();
    if (base.params.lambda_norm_index() >= 0)
        gopts.lambda_norm_index = base.params.lambda_norm_index();

    std::vector<MomentIndex> family = enumerate_indices(base.Q, base.T);
    InstrumentSpec inst;
    inst.kind = opts.instruments;

    std::vector<Eigen::VectorXd> rows;
    for (int r = 0; r < opts.replications; ++r) {
        DgpConfig cfg = base;
        cfg.seed = splitmix64(base.seed ^ (0x52455053ULL + static_cast<std::uint64_t>(r)));
        PanelDataset data = gen_panel(cfg);
        GmmOptions gr = gopts;
        gr.seed = cfg.seed;
        try {
            GmmEstimate est = gmm_estimate(data, family, inst, gr);
            rows.push_back(pack_theta(est.theta_hat));
        } catch (const std::runtime_error&) {
            ++res.failed;
        }
    }
    if (rows.empty()) throw numerical_error("run_montecarlo: every replication failed");

    res.estimates.resize(rows.size(), p);
    for (size_t r = 0; r < rows.size(); ++r) res.estimates.row(r) = rows[r].transpose();

    res.median.resize(p);
    res.mae.resize(p);
    res.iqr.resize(p);
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd col = res.estimates.col(j);
        res.median(j) = sample_quantile(col, 0.5);
        Eigen::VectorXd abserr = (col.array() - res.truth(j)).abs();
        res.mae(j) = opts.mean_abs_error ? abserr.mean() : sample_quantile(abserr, 0.5);
        res.iqr(j) = sample_quantile(col, 0.75) - sample_quantile(col, 0.25);
    }
    return res;
}

}  // namespace dopl
