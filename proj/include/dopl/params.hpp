#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dopl/common.hpp"

namespace dopl {

enum class IndexKind { Linear, Interacted };

struct IndexSpec {
    IndexKind kind = IndexKind::Linear;
};

/// Common model parameters theta = (beta, gamma, lambda), with optional
/// per-level interaction coefficients delta and normalization bookkeeping.
///
/// Levels are 1-based everywhere in the public interface. Thresholds are
/// validated to be strictly increasing at construction.
class Params {
public:
    Params(Eigen::VectorXd beta, Eigen::VectorXd gamma, Eigen::VectorXd lambda,
           std::optional<std::vector<Eigen::VectorXd>> delta = std::nullopt,
           int gamma_norm_index = -1, int lambda_norm_index = -1)
        : beta_(std::move(beta)),
          gamma_(std::move(gamma)),
          lambda_(std::move(lambda)),
          delta_(std::move(delta)),
          gamma_norm_index_(gamma_norm_index),
          lambda_norm_index_(lambda_norm_index) {
        validate();
    }

    int K() const { return static_cast<int>(beta_.size()); }
    int Q() const { return static_cast<int>(gamma_.size()); }

    const Eigen::VectorXd& beta() const { return beta_; }
    const Eigen::VectorXd& gamma() const { return gamma_; }
    const Eigen::VectorXd& lambda() const { return lambda_; }
    bool has_delta() const { return delta_.has_value(); }
    const std::vector<Eigen::VectorXd>& delta() const { return *delta_; }

    /// gamma_q for a 1-based level q.
    double gamma_at(int q) const { return gamma_(q - 1); }

    /// lambda_j for 1-based j, with lambda_0 = -inf and lambda_Q = +inf.
    double lambda_ext(int j) const {
        if (j <= 0) return -kInf;
        if (j >= Q()) return kInf;
        return lambda_(j - 1);
    }

    int gamma_norm_index() const { return gamma_norm_index_; }
    int lambda_norm_index() const { return lambda_norm_index_; }

    /// True if the normalization indices are pinned to zero (1-based indices
    /// stored 0-based internally; negative index disables the normalization).
    bool normalized() const {
        bool g_ok = gamma_norm_index_ < 0 || gamma_(gamma_norm_index_) == 0.0;
        bool l_ok = lambda_norm_index_ < 0 || lambda_(lambda_norm_index_) == 0.0;
        return g_ok && l_ok;
    }

private:
    void validate() const {
        if (gamma_.size() < 2) throw invalid_input("Params: need Q >= 2 gamma entries");
        if (lambda_.size() != gamma_.size() - 1)
            throw invalid_input("Params: lambda must have Q-1 entries");
        for (int j = 1; j < lambda_.size(); ++j)
            if (!(lambda_(j) > lambda_(j - 1)))
                throw invalid_input("Params: lambda must be strictly increasing");
        auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
        if (!finite(beta_) || !finite(gamma_) || !finite(lambda_))
            throw invalid_input("Params: all entries must be finite");
        if (delta_) {
            if (static_cast<int>(delta_->size()) != Q())
                throw invalid_input("Params: delta must have Q vectors");
            for (const auto& d : *delta_) {
                if (d.size() != beta_.size()) throw invalid_input("Params: delta vectors must have length K");
                if (!finite(d)) throw invalid_input("Params: delta entries must be finite");
            }
        }
    }

    Eigen::VectorXd beta_;
    Eigen::VectorXd gamma_;
    Eigen::VectorXd lambda_;
    std::optional<std::vector<Eigen::VectorXd>> delta_;
    int gamma_norm_index_;
    int lambda_norm_index_;
};

/// Flat coordinate order used for differentiation: beta, gamma, lambda.
inline Eigen::VectorXd pack_theta(const Params& p) {
    Eigen::VectorXd v(p.K() + 2 * p.Q() - 1);
    v << p.beta(), p.gamma(), p.lambda();
    return v;
}

inline Params unpack_theta(const Eigen::VectorXd& v, int K, int Q, int gamma_norm_index = -1,
                           int lambda_norm_index = -1) {
    if (v.size() != K + 2 * Q - 1) throw invalid_input("unpack_theta: wrong length");
    return Params(v.head(K), v.segment(K, Q), v.tail(Q - 1), std::nullopt, gamma_norm_index,
                  lambda_norm_index);
}

}  // namespace dopl
