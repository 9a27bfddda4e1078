#include "dopl/model.hpp"

namespace dopl {

double single_index(int y_prev, const Eigen::VectorXd& x_t, const Params& params,
                    const IndexSpec& spec) {
    if (y_prev < 1 || y_prev > params.Q())
        throw invalid_input("single_index: level out of range");
    double z = x_t.dot(params.beta()) + params.gamma_at(y_prev);
    if (spec.kind == IndexKind::Interacted) {
        if (!params.has_delta())
            throw invalid_input("single_index: interacted spec requires delta");
        z += params.gamma_at(y_prev) * x_t.dot(params.delta()[y_prev - 1]);
    }
    return z;
}

Eigen::VectorXd transition_probs(int y_prev, const Eigen::VectorXd& x_t, double alpha,
                                 const Params& params, const IndexSpec& spec) {
    const int Q = params.Q();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(Q);
    if (alpha == -kInf) {
        p(0) = 1.0;
        return p;
    }
    if (alpha == kInf) {
        p(Q - 1) = 1.0;
        return p;
    }
    double u = single_index(y_prev, x_t, params, spec) + alpha;
    for (int q = 1; q <= Q; ++q)
        p(q - 1) = logistic_cdf_diff(u - params.lambda_ext(q - 1), u - params.lambda_ext(q));
    return p;
}

double path_probability(int y0, const std::vector<int>& y, const Eigen::MatrixXd& x,
                        double alpha, const Params& params, const IndexSpec& spec) {
    const int T = static_cast<int>(y.size());
    if (x.rows() != T || x.cols() != params.K())
        throw invalid_input("path_probability: covariate matrix must be T x K");
    double prob = 1.0;
    int prev = y0;
    for (int t = 0; t < T; ++t) {
        Eigen::VectorXd p = transition_probs(prev, x.row(t).transpose(), alpha, params, spec);
        prob *= p(y[t] - 1);
        prev = y[t];
    }
    return prob;
}

}  // namespace dopl
