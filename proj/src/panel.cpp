#include "dopl/panel.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dopl {

void PanelDataset::validate() const {
    if (n < 1) throw invalid_input("PanelDataset: n must be >= 1");
    if (T < 1) throw invalid_input("PanelDataset: T must be >= 1");
    if (Q < 2) throw invalid_input("PanelDataset: Q must be >= 2");
    if (static_cast<int>(y0.size()) != n || y.rows() != n || y.cols() != T ||
        static_cast<int>(x.size()) != n)
        throw invalid_input("PanelDataset: inconsistent dimensions");
    for (int i = 0; i < n; ++i) {
        if (y0[i] < 1 || y0[i] > Q) throw invalid_input("PanelDataset: y0 out of 1..Q");
        for (int t = 0; t < T; ++t)
            if (y(i, t) < 1 || y(i, t) > Q) throw invalid_input("PanelDataset: y out of 1..Q");
        if (x[i].rows() != T || x[i].cols() != K)
            throw invalid_input("PanelDataset: covariate block must be T x K");
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

long parse_int(const std::string& s, int line) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw csv_error(line, "expected integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& s, int line) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw csv_error(line, "expected number, got '" + s + "'");
    }
}

}  // namespace

PanelDataset read_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open '" + path + "'");

    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) throw csv_error(1, "empty file");
    ++lineno;
    auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "unit" || header[1] != "period" || header[2] != "y")
        throw csv_error(1, "header must be unit,period,y,x1..xK");
    const int K = static_cast<int>(header.size()) - 3;
    for (int k = 0; k < K; ++k)
        if (header[3 + k] != "x" + std::to_string(k + 1))
            throw csv_error(1, "covariate columns must be named x1..xK");

    struct UnitRows {
        int y0 = -1;
        std::map<int, std::pair<int, Eigen::VectorXd>> rows;  // period -> (y, x)
    };
    std::map<long, UnitRows> units;

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (static_cast<int>(f.size()) != 3 + K)
            throw csv_error(lineno, "expected " + std::to_string(3 + K) + " fields");
        long unit = parse_int(f[0], lineno);
        long period = parse_int(f[1], lineno);
        long yv = parse_int(f[2], lineno);
        if (period < 0) throw csv_error(lineno, "period must be >= 0");
        if (yv < 1) throw csv_error(lineno, "y must be a positive level");
        auto& u = units[unit];
        if (period == 0) {
            if (u.y0 != -1) throw csv_error(lineno, "duplicate period-0 row for unit");
            u.y0 = static_cast<int>(yv);
        } else {
            Eigen::VectorXd xv(K);
            for (int k = 0; k < K; ++k) xv(k) = parse_double(f[3 + k], lineno);
            if (!u.rows.emplace(static_cast<int>(period), std::make_pair(static_cast<int>(yv), xv)).second)
                throw csv_error(lineno, "duplicate row for unit/period");
        }
    }
    if (units.empty()) throw csv_error(lineno, "no data rows");

    const int T = static_cast<int>(units.begin()->second.rows.size());
    PanelDataset data;
    data.n = static_cast<int>(units.size());
    data.T = T;
    data.K = K;
    data.y0.reserve(data.n);
    data.y.resize(data.n, T);
    data.x.reserve(data.n);

    int Q = 2;
    int i = 0;
    for (auto& [unit, u] : units) {
        if (u.y0 == -1)
            throw invalid_input("unit " + std::to_string(unit) + ": missing period-0 row");
        if (static_cast<int>(u.rows.size()) != T)
            throw invalid_input("unit " + std::to_string(unit) + ": unbalanced panel (expected " +
                                std::to_string(T) + " periods)");
        int expect = 1;
        for (auto& [period, row] : u.rows) {
            if (period != expect)
                throw invalid_input("unit " + std::to_string(unit) + ": missing period " +
                                    std::to_string(expect));
            ++expect;
        }
        data.y0.push_back(u.y0);
        Q = std::max(Q, u.y0);
        Eigen::MatrixXd xb(T, K);
        int t = 0;
        for (auto& [period, row] : u.rows) {
            data.y(i, t) = row.first;
            Q = std::max(Q, row.first);
            xb.row(t) = row.second.transpose();
            ++t;
        }
        data.x.push_back(std::move(xb));
        ++i;
    }
    data.Q = Q;
    data.validate();
    return data;
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot write '" + path + "'");
    out << "unit,period,y";
    for (int k = 1; k <= data.K; ++k) out << ",x" << k;
    out << "\n";
    char buf[32];
    for (int i = 0; i < data.n; ++i) {
        out << (i + 1) << ",0," << data.y0[i];
        for (int k = 0; k < data.K; ++k) out << ",0";
        out << "\n";
        for (int t = 0; t < data.T; ++t) {
            out << (i + 1) << "," << (t + 1) << "," << data.y(i, t);
            for (int k = 0; k < data.K; ++k) {
                snprintf(buf, sizeof(buf), "%.17g", data.x[i](t, k));
                out << "," << buf;
            }
            out << "\n";
        }
    }
}

}  // namespace dopl
