#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "dopl/common.hpp"

namespace dopl {

enum class ReportFormat { Text, Csv, JsonLines };

ReportFormat parse_report_format(const std::string& name);

/// Rectangular report: named rows and columns over a numeric body.
struct Table {
    std::string title;
    std::vector<std::string> col_names;
    std::vector<std::string> row_names;
    Eigen::MatrixXd values;
};

/// Renders a table as aligned text, CSV (title as a comment line), or one
/// JSON object per row.
std::string render_table(const Table& t, ReportFormat fmt);

/// Key-value preamble (echoed configuration, scalar diagnostics).
std::string render_preamble(const std::vector<std::pair<std::string, std::string>>& kv,
                            ReportFormat fmt);

std::string format_double(double v);

}  // namespace dopl
