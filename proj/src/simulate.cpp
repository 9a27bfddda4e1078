#include "dopl/simulate.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "dopl/model.hpp"

namespace dopl {

void DgpConfig::validate() const {
    if (n < 1 || T < 1 || K < 1) throw invalid_input("DgpConfig: dimensions must be positive");
    if (Q < 2) throw invalid_input("DgpConfig: Q must be >= 2");
    if (params.Q() != Q || params.K() != K)
        throw invalid_input("DgpConfig: params dimensions do not match Q/K");
    if (heterogeneity.kind == HeterogeneityKind::Discrete) {
        if (heterogeneity.support.empty() ||
            heterogeneity.support.size() != heterogeneity.weights.size())
            throw invalid_input("DgpConfig: discrete heterogeneity needs matching support/weights");
        double s = 0;
        for (double w : heterogeneity.weights) {
            if (w < 0) throw invalid_input("DgpConfig: negative heterogeneity weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw invalid_input("DgpConfig: weights must sum to 1");
    }
    if (y_init_rule == InitRule::FixedLevel && (y_init_level < 1 || y_init_level > Q))
        throw invalid_input("DgpConfig: fixed initial level out of 1..Q");
}

DgpConfig paper_design(int n, bool with_heterogeneity, std::uint64_t seed) {
    Eigen::VectorXd beta(3), gamma(4), lambda(3);
    beta << 1, 0, 0;
    gamma << -1, 0, 0, 1;
    lambda << -2, 0, 2;
    DgpConfig cfg;
    cfg.n = n;
    cfg.T = 3;
    cfg.Q = 4;
    cfg.K = 3;
    cfg.params = Params(beta, gamma, lambda, std::nullopt, /*gamma_norm_index=*/1,
                        /*lambda_norm_index=*/1);
    cfg.heterogeneity.kind =
        with_heterogeneity ? HeterogeneityKind::Paper : HeterogeneityKind::None;
    cfg.y_init_rule = InitRule::ZeroStateDraw;
    cfg.seed = seed;
    return cfg;
}

double sample_logistic(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double p;
    do {
        p = u(rng);
    } while (p <= 0.0 || p >= 1.0);
    return std::log(p) - std::log1p(-p);
}

CovariateDraw gen_covariates(const DgpConfig& cfg) {
    cfg.validate();
    const double scale = std::sqrt(3.0) / std::sqrt(2.0);
    CovariateDraw out;
    out.x.resize(cfg.n);
    out.z_unit.resize(cfg.n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < cfg.n; ++i) {
        auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(i));
        double z_i = gauss(rng);
        out.z_unit(i) = z_i;
        Eigen::MatrixXd xb(cfg.T + 1, cfg.K);
        for (int t = 0; t <= cfg.T; ++t) {
            double z_common = gauss(rng);  // Z_{i1t}, shared within the period
            xb(t, 0) = scale * (z_i + z_common);
            for (int j = 1; j < cfg.K; ++j) xb(t, j) = scale * (gauss(rng) + z_common);
        }
        out.x[i] = std::move(xb);
    }
    return out;
}

PanelDataset gen_panel(const DgpConfig& cfg) {
    cfg.validate();
    CovariateDraw cov = gen_covariates(cfg);

    PanelDataset data;
    data.n = cfg.n;
    data.T = cfg.T;
    data.Q = cfg.Q;
    data.K = cfg.K;
    data.y0.resize(cfg.n);
    data.y.resize(cfg.n, cfg.T);
    data.x.resize(cfg.n);

    const auto& lam = cfg.params.lambda();
    auto outcome_from_latent = [&](double ystar) {
        int q = 1;
        while (q <= cfg.Q - 1 && ystar > lam(q - 1)) ++q;
        return q;
    };

    for (int i = 0; i < cfg.n; ++i) {
        // Separate stream per unit, offset so covariate draws are untouched.
        auto rng = make_stream(cfg.seed ^ 0x9d2c5680ULL, static_cast<std::uint64_t>(i));

        double alpha = 0.0;
        switch (cfg.heterogeneity.kind) {
            case HeterogeneityKind::None:
                break;
            case HeterogeneityKind::Paper:
                alpha = std::sqrt(3.0) * cov.z_unit(i);
                break;
            case HeterogeneityKind::Discrete: {
                std::discrete_distribution<int> pick(cfg.heterogeneity.weights.begin(),
                                                     cfg.heterogeneity.weights.end());
                alpha = cfg.heterogeneity.support[pick(rng)];
                break;
            }
        }

        int y_prev;
        if (cfg.y_init_rule == InitRule::FixedLevel) {
            y_prev = cfg.y_init_level;
        } else {
            // One model step with no lagged-dummy contribution.
            double z0 = cov.x[i].row(0) * cfg.params.beta();
            if (alpha == -kInf)
                y_prev = 1;
            else if (alpha == kInf)
                y_prev = cfg.Q;
            else
                y_prev = outcome_from_latent(z0 + alpha + sample_logistic(rng));
        }
        data.y0[i] = y_prev;

        Eigen::MatrixXd xb = cov.x[i].bottomRows(cfg.T);
        for (int t = 0; t < cfg.T; ++t) {
            double eps = sample_logistic(rng);
            int yt;
            if (alpha == -kInf)
                yt = 1;
            else if (alpha == kInf)
                yt = cfg.Q;
            else {
                double z = single_index(y_prev, xb.row(t).transpose(), cfg.params);
                yt = outcome_from_latent(z + alpha + eps);
            }
            data.y(i, t) = yt;
            y_prev = yt;
        }
        data.x[i] = std::move(xb);
    }
    data.validate();
    return data;
}

namespace {

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw invalid_input("config line " + std::to_string(lineno) + ": expected key = value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

std::vector<double> parse_vector(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "inf" || tok == "+inf")
            v.push_back(kInf);
        else if (tok == "-inf")
            v.push_back(-kInf);
        else
            v.push_back(std::stod(tok));
    }
    return v;
}

std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream os;
    for (int i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v(i);
    }
    return os.str();
}

}  // namespace

DgpConfig read_dgp_config(const std::string& path) {
    auto kv = read_kv_file(path);
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw invalid_input("config: missing key '" + key + "'");
        return it->second;
    };
    DgpConfig cfg;
    cfg.n = std::stoi(need("n"));
    cfg.T = std::stoi(need("T"));
    cfg.Q = std::stoi(need("Q"));
    cfg.K = std::stoi(need("K"));
    cfg.seed = std::stoull(need("seed"));

    auto to_eigen = [](const std::vector<double>& v) {
        Eigen::VectorXd e(v.size());
        for (size_t i = 0; i < v.size(); ++i) e(i) = v[i];
        return e;
    };
    Eigen::VectorXd beta = to_eigen(parse_vector(need("beta")));
    Eigen::VectorXd gamma = to_eigen(parse_vector(need("gamma")));
    Eigen::VectorXd lambda = to_eigen(parse_vector(need("lambda")));
    int gni = kv.count("gamma_norm_index") ? std::stoi(kv["gamma_norm_index"]) - 1 : -1;
    int lni = kv.count("lambda_norm_index") ? std::stoi(kv["lambda_norm_index"]) - 1 : -1;
    cfg.params = Params(beta, gamma, lambda, std::nullopt, gni, lni);

    std::string het = kv.count("heterogeneity") ? kv["heterogeneity"] : "none";
    if (het == "none")
        cfg.heterogeneity.kind = HeterogeneityKind::None;
    else if (het == "paper")
        cfg.heterogeneity.kind = HeterogeneityKind::Paper;
    else if (het == "discrete") {
        cfg.heterogeneity.kind = HeterogeneityKind::Discrete;
        cfg.heterogeneity.support = parse_vector(need("het_support"));
        cfg.heterogeneity.weights = parse_vector(need("het_weights"));
    } else
        throw invalid_input("config: unknown heterogeneity '" + het + "'");

    std::string init = kv.count("y_init_rule") ? kv["y_init_rule"] : "zero-state";
    if (init == "zero-state")
        cfg.y_init_rule = InitRule::ZeroStateDraw;
    else if (init == "fixed") {
        cfg.y_init_rule = InitRule::FixedLevel;
        cfg.y_init_level = std::stoi(need("y_init_level"));
    } else
        throw invalid_input("config: unknown y_init_rule '" + init + "'");

    cfg.validate();
    return cfg;
}

void write_dgp_config(const DgpConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot write '" + path + "'");
    out << "n = " << cfg.n << "\nT = " << cfg.T << "\nQ = " << cfg.Q << "\nK = " << cfg.K
        << "\nseed = " << cfg.seed << "\n";
    out << "beta = " << format_vector(cfg.params.beta()) << "\n";
    out << "gamma = " << format_vector(cfg.params.gamma()) << "\n";
    out << "lambda = " << format_vector(cfg.params.lambda()) << "\n";
    if (cfg.params.gamma_norm_index() >= 0)
        out << "gamma_norm_index = " << cfg.params.gamma_norm_index() + 1 << "\n";
    if (cfg.params.lambda_norm_index() >= 0)
        out << "lambda_norm_index = " << cfg.params.lambda_norm_index() + 1 << "\n";
    switch (cfg.heterogeneity.kind) {
        case HeterogeneityKind::None:
            out << "heterogeneity = none\n";
            break;
        case HeterogeneityKind::Paper:
            out << "heterogeneity = paper\n";
            break;
        case HeterogeneityKind::Discrete: {
            out << "heterogeneity = discrete\nhet_support = ";
            for (size_t i = 0; i < cfg.heterogeneity.support.size(); ++i)
                out << (i ? "," : "") << cfg.heterogeneity.support[i];
            out << "\nhet_weights = ";
            for (size_t i = 0; i < cfg.heterogeneity.weights.size(); ++i)
                out << (i ? "," : "") << cfg.heterogeneity.weights[i];
            out << "\n";
            break;
        }
    }
    if (cfg.y_init_rule == InitRule::ZeroStateDraw)
        out << "y_init_rule = zero-state\n";
    else
        out << "y_init_rule = fixed\ny_init_level = " << cfg.y_init_level << "\n";
}

}  // namespace dopl
