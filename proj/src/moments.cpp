#include "dopl/moments.hpp"

#include <cmath>
#include <sstream>

namespace dopl {

void MomentIndex::validate(int Q, int T) const {
    if (y0 < 1 || y0 > Q) throw invalid_input("MomentIndex: y0 out of 1..Q");
    if (q1 < 1 || q1 > Q - 1) throw invalid_input("MomentIndex: q1 out of 1..Q-1");
    if (q3 < 1 || q3 > Q - 1) throw invalid_input("MomentIndex: q3 out of 1..Q-1");
    if (q2 < 1 || q2 > Q) throw invalid_input("MomentIndex: q2 out of 1..Q");
    if (!(t >= 1 && t < s && s < r && r <= T))
        throw invalid_input("MomentIndex: need 1 <= t < s < r <= T");
    if (q2 >= 2 && q2 <= Q - 1 && r != s + 1)
        throw invalid_input("MomentIndex: interior q2 requires r = s+1");
    if (static_cast<int>(history.size()) != t - 1)
        throw invalid_input("MomentIndex: history must have length t-1");
}

namespace {

// z for period a (1-based): predecessor is y0 for a = 1, else y_{a-1}.
double z_at(int a, int y0, const std::vector<int>& y, const Eigen::MatrixXd& x,
            const Params& params, const IndexSpec& spec) {
    int prev = (a == 1) ? y0 : y[a - 2];
    return single_index(prev, x.row(a - 1).transpose(), params, spec);
}

// z for period a with the predecessor level overridden.
double z_forced(int a, int level, const Eigen::MatrixXd& x, const Params& params,
                const IndexSpec& spec) {
    return single_index(level, x.row(a - 1).transpose(), params, spec);
}

double boundary_low(const MomentIndex& idx, int y0, const std::vector<int>& y,
                    const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec) {
    const int yt = y[idx.t - 1], ys = y[idx.s - 1], yr = y[idx.r - 1];
    const double l1 = params.lambda_ext(1);
    if (yt <= idx.q1) {
        if (ys > 1) return -1.0;
        // ys == 1
        double zs = z_at(idx.s, y0, y, x, params, spec);
        double zr = z_at(idx.r, y0, y, x, params, spec);
        if (yr > idx.q3) return std::expm1(zs - zr + params.lambda_ext(idx.q3) - l1);
        return 0.0;
    }
    // yt > q1
    if (ys != 1) return 0.0;
    double zt = z_at(idx.t, y0, y, x, params, spec);
    if (yr <= idx.q3) {
        double zr = z_at(idx.r, y0, y, x, params, spec);
        return std::exp(zr - zt + params.lambda_ext(idx.q1) - params.lambda_ext(idx.q3));
    }
    double zs = z_at(idx.s, y0, y, x, params, spec);
    return std::exp(zs - zt + params.lambda_ext(idx.q1) - l1);
}

double boundary_high(const MomentIndex& idx, int y0, const std::vector<int>& y,
                     const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec) {
    const int Q = params.Q();
    const int yt = y[idx.t - 1], ys = y[idx.s - 1], yr = y[idx.r - 1];
    const double lQ1 = params.lambda_ext(Q - 1);
    if (yt > idx.q1) {
        if (ys < Q) return -1.0;
        if (yr <= idx.q3) {
            double zr = z_at(idx.r, y0, y, x, params, spec);
            double zs = z_at(idx.s, y0, y, x, params, spec);
            return std::expm1(zr - zs + lQ1 - params.lambda_ext(idx.q3));
        }
        return 0.0;
    }
    // yt <= q1
    if (ys != Q) return 0.0;
    double zt = z_at(idx.t, y0, y, x, params, spec);
    if (yr <= idx.q3) {
        double zs = z_at(idx.s, y0, y, x, params, spec);
        return std::exp(zt - zs + lQ1 - params.lambda_ext(idx.q1));
    }
    double zr = z_at(idx.r, y0, y, x, params, spec);
    return std::exp(zt - zr + params.lambda_ext(idx.q3) - params.lambda_ext(idx.q1));
}

}  // namespace

double moment_interior_raw(const MomentIndex& idx, int y0, const std::vector<int>& y,
                           const Eigen::MatrixXd& x, const Params& params,
                           double lambda_lo, double lambda_hi, const IndexSpec& spec) {
    const int yt = y[idx.t - 1], ys = y[idx.s - 1], yr = y[idx.r - 1];
    const int q1 = idx.q1, q2 = idx.q2, q3 = idx.q3;
    const double lq1 = params.lambda_ext(q1);
    const double lq3 = params.lambda_ext(q3);
    const double gap = lambda_hi - lambda_lo;
    if (gap == 0.0)
        throw numerical_error("moment: adjacent thresholds equal, denominator vanishes");
    // denom = exp(lambda_hi - lambda_lo) - 1 > 0
    const double denom = std::expm1(gap);

    if (yt <= q1) {
        if (ys > q2) {
            double zt = z_at(idx.t, y0, y, x, params, spec);
            double zr_q2 = z_forced(idx.r, q2, x, params, spec);
            return std::exp(zt - zr_q2 + lq3 - lq1);
        }
        if (ys == q2) {
            double zt = z_at(idx.t, y0, y, x, params, spec);
            double zs = z_at(idx.s, y0, y, x, params, spec);
            double zr = z_at(idx.r, y0, y, x, params, spec);
            double front = std::exp(zt - zr + lq3 - lq1);
            if (yr <= q3)
                return front * std::expm1(zr - zs + lambda_hi - lq3) / denom;
            // 1 - exp(zs - zr + lq3 - lambda_hi) over 1 - exp(-gap)
            return front * -std::expm1(zs - zr + lq3 - lambda_hi) / -std::expm1(-gap);
        }
        return 0.0;  // ys < q2
    }
    // yt > q1
    if (ys < q2) return -1.0;
    if (ys > q2) return 0.0;
    double zs = z_at(idx.s, y0, y, x, params, spec);
    double zr = z_at(idx.r, y0, y, x, params, spec);
    if (yr <= q3)
        return std::expm1(zr - zs + lambda_lo - lq3) / -std::expm1(-gap);
    return -std::expm1(zs - zr + lq3 - lambda_lo) / denom;
}

double moment_general(const MomentIndex& idx, int y0, const std::vector<int>& y,
                      const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec) {
    const int Q = params.Q();
    const int T = static_cast<int>(y.size());
    idx.validate(Q, T);
    if (idx.y0 != y0) throw invalid_input("moment: index y0 does not match data y0");
    if (x.rows() != T) throw invalid_input("moment: x must have T rows");

    // History indicator annihilates mismatching paths.
    for (int a = 0; a < idx.t - 1; ++a)
        if (y[a] != idx.history[a]) return 0.0;

    if (idx.q2 == 1) return boundary_low(idx, y0, y, x, params, spec);
    if (idx.q2 == Q) return boundary_high(idx, y0, y, x, params, spec);
    return moment_interior_raw(idx, y0, y, x, params, params.lambda_ext(idx.q2 - 1),
                               params.lambda_ext(idx.q2), spec);
}

double moment_t3(const MomentIndex& idx, int y0, const std::vector<int>& y,
                 const Eigen::MatrixXd& x, const Params& params, const IndexSpec& spec) {
    if (idx.t != 1 || idx.s != 2 || idx.r != 3)
        throw invalid_input("moment_t3: requires (t,s,r) = (1,2,3)");
    return moment_general(idx, y0, y, x, params, spec);
}

double rescale_tilde(double value, const MomentIndex& idx, int y0, const Eigen::MatrixXd& x,
                     const Params& params, const IndexSpec& spec) {
    if (idx.t != 1)
        throw invalid_input("rescale_tilde: only defined for t = 1 indices");
    double zt = z_forced(idx.t, y0, x, params, spec);
    double zr_q2 = z_forced(idx.r, idx.q2, x, params, spec);
    double factor = std::exp(zt - zr_q2 + params.lambda_ext(idx.q3) - params.lambda_ext(idx.q1));
    return -value / factor;
}

std::vector<MomentIndex> enumerate_indices_y0(int Q, int T, int y0) {
    if (Q < 2) throw invalid_input("enumerate_indices: Q must be >= 2");
    if (T < 3) throw invalid_input("enumerate_indices: T must be >= 3");
    std::vector<MomentIndex> out;
    out.reserve(static_cast<size_t>(moment_count(Q, T)));
    for (int t = 1; t <= T - 2; ++t) {
        // All Q^{t-1} histories, odometer order.
        std::vector<int> h(t - 1, 1);
        while (true) {
            for (int s = t + 1; s <= T - 1; ++s)
                for (int q1 = 1; q1 <= Q - 1; ++q1)
                    for (int q2 = 1; q2 <= Q; ++q2)
                        for (int q3 = 1; q3 <= Q - 1; ++q3)
                            out.push_back(MomentIndex{y0, q1, q2, q3, t, s, s + 1, h});
            int pos = t - 2;
            while (pos >= 0 && h[pos] == Q) h[pos--] = 1;
            if (pos < 0) break;
            ++h[pos];
        }
    }
    return out;
}

std::vector<MomentIndex> enumerate_indices(int Q, int T) {
    std::vector<MomentIndex> out;
    for (int y0 = 1; y0 <= Q; ++y0) {
        auto part = enumerate_indices_y0(Q, T, y0);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

long long moment_count(int Q, int T, bool static_model) {
    if (Q < 2) throw invalid_input("moment_count: Q must be >= 2");
    if (T < 3) throw invalid_input("moment_count: T must be >= 3");
    auto ipow = [](long long b, int e) {
        long long r = 1;
        while (e-- > 0) r *= b;
        return r;
    };
    if (static_model) return ipow(Q, T) - static_cast<long long>(T) * (Q - 1) - 1;
    long long sum = 0;
    for (int t = 1; t <= T - 2; ++t) sum += static_cast<long long>(T - t - 1) * ipow(Q, t - 1);
    return static_cast<long long>(Q - 1) * Q * (Q - 1) * sum;
}

long long moment_count_closed_form(int Q, int T) {
    auto ipow = [](long long b, int e) {
        long long r = 1;
        while (e-- > 0) r *= b;
        return r;
    };
    return ipow(Q, T) - static_cast<long long>(T - 1) * Q * Q - static_cast<long long>(T - 2) * Q;
}

std::string format_index(const MomentIndex& idx) {
    std::ostringstream os;
    os << "y0=" << idx.y0 << " q=(" << idx.q1 << "," << idx.q2 << "," << idx.q3 << ")"
       << " tsr=(" << idx.t << "," << idx.s << "," << idx.r << ")";
    if (!idx.history.empty()) {
        os << " h=(";
        for (size_t a = 0; a < idx.history.size(); ++a)
            os << (a ? "," : "") << idx.history[a];
        os << ")";
    }
    return os.str();
}

}  // namespace dopl
