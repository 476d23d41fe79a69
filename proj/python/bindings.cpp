#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <set>

#include "fairaug/experiments.hpp"
#include "fairaug/metrics.hpp"

namespace py = pybind11;
using namespace fairaug;

namespace {

const ModelConfig& first_augmentable(const ExperimentConfig& c) {
  for (const auto& m : c.models) {
    if (is_augmentable(m.kind)) return m;
  }
  throw ConfigError("no augmentable model (lightgcn or svdgcn) in the config");
}

// Shared prologue for the per-model runners. The GIL is released for the C++ work.
template <class F>
std::string with_model(const std::string& config_json, F&& body) {
  py::gil_scoped_release release;
  auto c = parse_config(config_json);
  const auto data = prepare_data(c);
  const auto run = train_and_label(data, first_augmentable(c));
  return render_json(body(c, data, run));
}

}  // namespace

PYBIND11_MODULE(_fairaug, m) {
  m.doc() = "Native core of the fairaug package";
  m.attr("__version__") = FAIRAUG_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.def(
      "ndcg_at_k",
      [](const std::vector<std::vector<int>>& topk, const std::vector<std::vector<int>>& relevant, int k) {
        Judgements j = relevant;
        for (auto& row : j) std::sort(row.begin(), row.end());
        std::vector<std::optional<double>> out;
        for (double v : ndcg_at_k(topk, j, k).values) {
          out.push_back(std::isnan(v) ? std::nullopt : std::optional<double>(v));
        }
        return out;
      },
      py::arg("topk"), py::arg("relevant"), py::arg("k") = 10,
      "Per-user NDCG@k; None for users with no relevant items.");

  m.def(
      "smooth_ndcg",
      [](const std::vector<double>& scores, const std::vector<int>& relevant, int k, double tau) {
        std::vector<double> grad(scores.size());
        const double v = smooth_ndcg(scores, relevant, k, tau, grad);
        return py::make_tuple(v, grad);
      },
      py::arg("scores"), py::arg("relevant"), py::arg("k") = 10, py::arg("tau") = 0.1,
      "Smooth NDCG@k and its gradient with respect to the scores.");

  m.def(
      "wilcoxon_signed_rank",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = wilcoxon_signed_rank(a, b);
        py::dict d;
        d["statistic"] = r.statistic;
        d["p_value"] = r.p_value;
        d["n"] = r.n;
        d["exact"] = r.exact;
        return d;
      },
      py::arg("a"), py::arg("b"));

  m.def("jaccard", [](const std::set<int>& a, const std::set<int>& b) { return jaccard(a, b); });

  m.def(
      "split_sizes",
      [](int n, double train, double valid, double test) {
        const auto s = split_sizes(n, SplitRatios{train, valid, test});
        return py::make_tuple(s[0], s[1], s[2]);
      },
      py::arg("n"), py::arg("train") = 0.7, py::arg("valid") = 0.1, py::arg("test") = 0.2);

  m.def(
      "config_hash", [](const std::string& json) { return config_hash(parse_config(json)); },
      py::arg("config_json"));

  m.def(
      "canonical_config", [](const std::string& json) { return config_to_json(parse_config(json)).dump(2); },
      py::arg("config_json"), "The config with every default filled in.");

  m.def(
      "run_benchmark",
      [](const std::string& config_json) {
        py::gil_scoped_release release;
        return render_json(run_benchmark(parse_config(config_json)).report);
      },
      py::arg("config_json"));

  m.def(
      "run_policy_grid",
      [](const std::string& config_json) {
        return with_model(config_json, [](const auto& c, const auto& d, const auto& r) {
          return run_policy_grid(c, d, r);
        });
      },
      py::arg("config_json"));

  m.def(
      "run_psi_sweep",
      [](const std::string& config_json, const std::string& cell) {
        return with_model(config_json, [&](auto c, const auto& d, const auto& r) {
          if (!cell.empty()) c.sweep.cell = cell;
          return run_psi_sweep(c, d, r).report;
        });
      },
      py::arg("config_json"), py::arg("cell") = "");

  m.def(
      "run_overlap",
      [](const std::string& config_json) {
        return with_model(config_json, [](const auto& c, const auto& d, const auto& r) {
          return run_overlap(c, d, r);
        });
      },
      py::arg("config_json"));
}
