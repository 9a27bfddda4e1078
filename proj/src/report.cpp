#include "dopl/report.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace dopl {

ReportFormat parse_report_format(const std::string& name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json-lines") return ReportFormat::JsonLines;
    throw invalid_input("unknown report format '" + name + "'");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string render_table(const Table& t, ReportFormat fmt) {
    std::ostringstream os;
    const int R = static_cast<int>(t.row_names.size());
    const int C = static_cast<int>(t.col_names.size());
    if (t.values.rows() != R || t.values.cols() != C)
        throw invalid_input("render_table: shape mismatch");

    if (fmt == ReportFormat::JsonLines) {
        for (int r = 0; r < R; ++r) {
            nlohmann::json j;
            j["table"] = t.title;
            j["row"] = t.row_names[r];
            for (int c = 0; c < C; ++c) j[t.col_names[c]] = t.values(r, c);
            os << j.dump() << "\n";
        }
        return os.str();
    }
    if (fmt == ReportFormat::Csv) {
        os << "# " << t.title << "\n";
        os << "name";
        for (const auto& c : t.col_names) os << "," << c;
        os << "\n";
        for (int r = 0; r < R; ++r) {
            os << t.row_names[r];
            for (int c = 0; c < C; ++c) os << "," << format_double(t.values(r, c));
            os << "\n";
        }
        return os.str();
    }

    size_t name_w = 4;
    for (const auto& r : t.row_names) name_w = std::max(name_w, r.size());
    size_t col_w = 14;
    for (const auto& c : t.col_names) col_w = std::max(col_w, c.size() + 2);
    os << t.title << "\n";
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "name";
    for (const auto& c : t.col_names) os << std::right << std::setw(static_cast<int>(col_w)) << c;
    os << "\n";
    for (int r = 0; r < R; ++r) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << t.row_names[r];
        for (int c = 0; c < C; ++c)
            os << std::right << std::setw(static_cast<int>(col_w))
               << format_double(t.values(r, c));
        os << "\n";
    }
    return os.str();
}

std::string render_preamble(const std::vector<std::pair<std::string, std::string>>& kv,
                            ReportFormat fmt) {
    std::ostringstream os;
    if (fmt == ReportFormat::JsonLines) {
        nlohmann::json j;
        j["table"] = "config";
        for (const auto& [k, v] : kv) j[k] = v;
        os << j.dump() << "\n";
    } else {
        for (const auto& [k, v] : kv)
            os << (fmt == ReportFormat::Csv ? "# " : "") << k << " = " << v << "\n";
    }
    return os.str();
}

}  // namespace dopl
