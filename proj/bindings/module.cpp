#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dopl/identification.hpp"
#include "dopl/montecarlo.hpp"
#include "dopl/oracle.hpp"
#include "dopl/panel.hpp"

namespace py = pybind11;
using namespace dopl;

namespace {

PanelDataset panel_from_arrays(const std::vector<int>& y0, const Eigen::MatrixXi& y,
                               const std::vector<Eigen::MatrixXd>& x, int Q) {
    PanelDataset d;
    d.n = static_cast<int>(y0.size());
    d.T = static_cast<int>(y.cols());
    d.Q = Q;
    d.K = x.empty() ? 0 : static_cast<int>(x[0].cols());
    d.y0 = y0;
    d.y = y;
    d.x = x;
    d.validate();
    return d;
}

py::dict panel_to_dict(const PanelDataset& d) {
    py::dict out;
    out["y0"] = d.y0;
    out["y"] = d.y;
    out["x"] = d.x;
    out["Q"] = d.Q;
    return out;
}

InstrumentKind parse_instruments(const std::string& s) {
    if (s == "paper-differences") return InstrumentKind::PaperDifferences;
    if (s == "indicators") return InstrumentKind::InitialConditionIndicators;
    throw invalid_input("unknown instrument kind: " + s);
}

}  // namespace

PYBIND11_MODULE(_dopl, m) {
    m.doc() = "dynamic ordered panel logit with fixed effects";

    py::register_exception<invalid_input>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<numerical_error>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<Params>(m, "Params")
        .def(py::init([](const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma,
                         const Eigen::VectorXd& lam, int gni, int lni) {
                 return Params(beta, gamma, lam, std::nullopt, gni, lni);
             }),
             py::arg("beta"), py::arg("gamma"), py::arg("lam"),
             py::arg("gamma_norm_index") = -1, py::arg("lambda_norm_index") = -1)
        .def_property_readonly("beta", &Params::beta)
        .def_property_readonly("gamma", &Params::gamma)
        .def_property_readonly("lam", &Params::lambda)
        .def_property_readonly("Q", &Params::Q)
        .def_property_readonly("K", &Params::K);

    m.def("moment_count", &moment_count, py::arg("Q"), py::arg("T"),
          py::arg("static_model") = false);
    m.def("moment_count_closed_form", &moment_count_closed_form, py::arg("Q"), py::arg("T"));

    m.def(
        "moment",
        [](int y0, int q1, int q2, int q3, const std::vector<int>& y, const Eigen::MatrixXd& x,
           const Params& p) {
            MomentIndex idx;
            idx.y0 = y0;
            idx.q1 = q1;
            idx.q2 = q2;
            idx.q3 = q3;
            return moment_t3(idx, y0, y, x, p);
        },
        py::arg("y0"), py::arg("q1"), py::arg("q2"), py::arg("q3"), py::arg("y"), py::arg("x"),
        py::arg("params"), "Three-period moment function at one outcome path.");

    m.def(
        "conditional_moment_expectation",
        [](int y0, int q1, int q2, int q3, const Eigen::MatrixXd& x, double alpha,
           const Params& p) {
            MomentIndex idx;
            idx.y0 = y0;
            idx.q1 = q1;
            idx.q2 = q2;
            idx.q3 = q3;
            return conditional_expectation(
                [&](const std::vector<int>& y) { return moment_t3(idx, y0, y, x, p); }, y0, x,
                alpha, p);
        },
        py::arg("y0"), py::arg("q1"), py::arg("q2"), py::arg("q3"), py::arg("x"),
        py::arg("alpha"), py::arg("params"),
        "Exact E[m | y0, x, alpha] by path enumeration; ~0 for valid indices.");

    m.def(
        "valid_space_dimension",
        [](int Q, int T, int y0, const Eigen::MatrixXd& x, const Params& p, int n_grid) {
            AlphaGrid grid = AlphaGrid::chebyshev(n_grid);
            return valid_space_dimension(Q, T, y0, x, p, grid);
        },
        py::arg("Q"), py::arg("T"), py::arg("y0"), py::arg("x"), py::arg("params"),
        py::arg("n_grid") = 41);

    m.def(
        "paper_design_config",
        [](int n, bool with_heterogeneity, std::uint64_t seed) {
            DgpConfig cfg = paper_design(n, with_heterogeneity, seed);
            py::dict out;
            out["n"] = cfg.n;
            out["T"] = cfg.T;
            out["Q"] = cfg.Q;
            out["K"] = cfg.K;
            out["seed"] = cfg.seed;
            out["params"] = cfg.params;
            return out;
        },
        py::arg("n"), py::arg("with_heterogeneity") = true, py::arg("seed") = 1);

    m.def(
        "simulate",
        [](int n, bool with_heterogeneity, std::uint64_t seed) {
            return panel_to_dict(gen_panel(paper_design(n, with_heterogeneity, seed)));
        },
        py::arg("n"), py::arg("with_heterogeneity") = true, py::arg("seed") = 1,
        "Simulate the built-in four-level design; returns y0, y, x arrays.");

    m.def(
        "simulate_custom",
        [](const Params& p, int n, int T, std::uint64_t seed) {
            DgpConfig cfg;
            cfg.n = n;
            cfg.T = T;
            cfg.Q = p.Q();
            cfg.K = p.K();
            cfg.params = p;
            cfg.seed = seed;
            return panel_to_dict(gen_panel(cfg));
        },
        py::arg("params"), py::arg("n"), py::arg("T") = 3, py::arg("seed") = 1,
        "Simulate without unobserved heterogeneity at the given parameters.");

    m.def("read_panel_csv",
          [](const std::string& path) { return panel_to_dict(read_panel_csv(path)); },
          py::arg("path"));
    m.def(
        "write_panel_csv",
        [](const std::vector<int>& y0, const Eigen::MatrixXi& y,
           const std::vector<Eigen::MatrixXd>& x, int Q, const std::string& path) {
            write_panel_csv(panel_from_arrays(y0, y, x, Q), path);
        },
        py::arg("y0"), py::arg("y"), py::arg("x"), py::arg("Q"), py::arg("path"));

    m.def(
        "estimate",
        [](const std::vector<int>& y0, const Eigen::MatrixXi& y,
           const std::vector<Eigen::MatrixXd>& x, int Q, const std::string& instruments,
           std::uint64_t seed, int gamma_norm_index, int lambda_norm_index) {
            PanelDataset d = panel_from_arrays(y0, y, x, Q);
            auto family = enumerate_indices(d.Q, d.T);
            InstrumentSpec inst;
            inst.kind = parse_instruments(instruments);
            GmmOptions opts;
            opts.seed = seed;
            opts.gamma_norm_index = gamma_norm_index;
            opts.lambda_norm_index = lambda_norm_index;
            GmmEstimate est = gmm_estimate(d, family, inst, opts);
            py::dict out;
            out["beta"] = est.theta_hat.beta();
            out["gamma"] = est.theta_hat.gamma();
            out["lam"] = est.theta_hat.lambda();
            out["std_errors"] = est.std_errors;
            out["vcov"] = est.vcov;
            out["converged"] = est.converged;
            out["moment_dim"] = est.moment_dim;
            out["dropped_columns"] = est.dropped_columns;
            py::dict j;
            j["available"] = est.j.available;
            j["J"] = est.j.J;
            j["dof"] = est.j.dof;
            j["p_value"] = est.j.p_value;
            out["j_test"] = j;
            return out;
        },
        py::arg("y0"), py::arg("y"), py::arg("x"), py::arg("Q"),
        py::arg("instruments") = "paper-differences", py::arg("seed") = 0,
        py::arg("gamma_norm_index") = 0, py::arg("lambda_norm_index") = 0,
        "Staged weighted GMM estimate from panel arrays.");

    m.def(
        "identify_demo",
        [](const Params& p, int y0) {
            auto cells = demo_cells(p.K());
            Eigen::MatrixXd w =
                Eigen::MatrixXd::Constant(cells.size(), p.Q(), 1.0 / double(cells.size()));
            CondLaw law = population_law(p, cells, w, {-1.0, 0.3, 1.1}, {0.3, 0.4, 0.3});
            RecoveredParams rec = identify_pipeline(law, y0);
            py::dict out;
            out["gamma"] = rec.gamma;
            out["beta"] = rec.beta;
            out["lam"] = rec.lambda;
            return out;
        },
        py::arg("params"), py::arg("y0") = 1,
        "Recover parameters from an exact population law on demonstration cells.");
}
