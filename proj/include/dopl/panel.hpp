#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "dopl/common.hpp"

namespace dopl {

/// Balanced panel: initial conditions y0, outcomes y (periods 1..T), and
/// covariates x (periods 1..T). Outcomes are 1-based levels in 1..Q.
struct PanelDataset {
    int n = 0;
    int T = 0;
    int Q = 0;
    int K = 0;
    std::vector<int> y0;              // length n
    Eigen::MatrixXi y;                // n x T
    std::vector<Eigen::MatrixXd> x;   // n matrices, each T x K

    void validate() const;

    const Eigen::MatrixXd& unit_x(int i) const { return x[i]; }
};

/// Error from CSV ingestion, carrying the offending 1-based line number.
class csv_error : public invalid_input {
public:
    csv_error(int line, const std::string& msg)
        : invalid_input("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Long-format CSV: header `unit,period,y,x1..xK`; the period-0 row carries
/// the initial condition (x columns ignored on that row).
PanelDataset read_panel_csv(const std::string& path);
void write_panel_csv(const PanelDataset& data, const std::string& path);

}  // namespace dopl
