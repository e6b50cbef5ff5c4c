#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "branchlim/cb.hpp"
#include "branchlim/continuum.hpp"
#include "branchlim/discrete_lab.hpp"
#include "branchlim/exact_law.hpp"
#include "branchlim/runner.hpp"
#include "branchlim/samplers.hpp"

namespace py = pybind11;
using namespace branchlim;

namespace {

std::map<std::string, double> law_dict(const PrefixLaw& law) {
  std::map<std::string, double> out;
  for (const auto& [t, q] : law.prob) out[t.to_string()] = q;
  return out;
}

py::dict table_dict(const TailTable& t) {
  py::dict d;
  d["tail"] = t.tail;
  d["point"] = t.point;
  d["forest_tail"] = t.forest_tail;
  d["forest_point"] = t.forest_point;
  d["truncation_mass"] = t.truncation_mass;
  return d;
}

nlohmann::json to_json(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(branchlim, m) {
  m.doc() = "Conditioned Galton-Watson trees, CB processes and height-process experiments";
  m.attr("__version__") = runner::version();

  py::class_<OffspringDist>(m, "OffspringDist")
      .def_static("explicit", &OffspringDist::explicit_pmf, py::arg("pmf"))
      .def_static("geometric", &OffspringDist::geometric, py::arg("a"), py::arg("cap") = 200)
      .def_static("poisson", &OffspringDist::poisson, py::arg("lam"), py::arg("cap") = 200)
      .def_static("heavy_tail", &OffspringDist::heavy_tail, py::arg("gamma"), py::arg("mean"),
                  py::arg("cap") = 1000000)
      .def_static("from_json", [](const py::object& o) { return OffspringDist::from_json(to_json(o)); })
      .def_property_readonly("pmf", &OffspringDist::pmf)
      .def_property_readonly("mean", &OffspringDist::mean)
      .def_property_readonly("truncation_mass", &OffspringDist::truncation_mass)
      .def("pgf", &OffspringDist::pgf)
      .def("size_biased", &OffspringDist::size_biased)
      .def("classify", [](const OffspringDist& p) { return to_string(p.classify()); })
      .def("__repr__", &OffspringDist::describe);

  m.def("functional", [](const std::string& tree, const std::string& f) {
    return functional(PlaneTree::parse(tree), FunctionalTag::parse(f));
  }, py::arg("tree"), py::arg("functional"), "Functional of a tree given as a preorder degree string.");
  m.def("restrict", [](const std::string& tree, std::size_t h) {
    return restrict_height(PlaneTree::parse(tree), h).to_string();
  });
  m.def("subtrees_above", [](const std::string& tree, std::size_t b) {
    std::vector<std::string> out;
    for (const auto& t : subtrees_above(PlaneTree::parse(tree), b).trees) out.push_back(t.to_string());
    return out;
  });
  m.def("ultrametric_distance", [](const std::string& a, const std::string& b) {
    return ultrametric_distance(PlaneTree::parse(a), PlaneTree::parse(b));
  });

  m.def("tail_table", [](const OffspringDist& p, const std::string& f, std::size_t N, std::vector<std::size_t> ks) {
    return table_dict(tail_table(p, FunctionalTag::parse(f), N, ks));
  }, py::arg("p"), py::arg("functional"), py::arg("N"), py::arg("ks") = std::vector<std::size_t>{});
  m.def("prefix_prob", [](const OffspringDist& p, const std::string& t, std::size_t b) {
    return prefix_prob(p, PlaneTree::parse(t), b);
  });
  m.def("immortal_prefix_law", [](const OffspringDist& p, std::size_t b) {
    return law_dict(immortal_prefix_law(p, b));
  });
  m.def("conditioned_prefix_law", [](const OffspringDist& p, const std::string& f, const std::string& cond,
                                     std::size_t b) {
    return law_dict(conditioned_prefix_law(p, FunctionalTag::parse(f), Conditioning::parse(cond), b));
  }, py::arg("p"), py::arg("functional"), py::arg("conditioning"), py::arg("b"));

  m.def("sample_gw", [](const OffspringDist& p, std::uint64_t seed, std::size_t node_cap) -> std::optional<std::string> {
    Rng rng(seed);
    auto t = sample_gw(p, rng, node_cap);
    if (!t) return std::nullopt;
    return t->to_string();
  }, py::arg("p"), py::arg("seed"), py::arg("node_cap") = kDefaultNodeCap);
  m.def("sample_immortal_prefix", [](const OffspringDist& p, std::uint64_t seed, std::size_t b) {
    Rng rng(seed);
    return sample_immortal_prefix(p, rng, b).to_string();
  });

  m.def("tail_convergence", [](const OffspringDist& p, const std::string& f, std::size_t b,
                               const std::vector<std::size_t>& grid) {
    std::vector<std::pair<std::size_t, double>> out;
    const auto rep = run_tail_convergence(p, FunctionalTag::parse(f), b, grid);
    for (const auto* r : rep.evaluated()) out.emplace_back(r->n, r->tv);
    return out;
  }, "Exact (n, TV) pairs under tail conditioning.");

  m.def("cb_v", [](double alpha, double beta, double lam, double t) {
    return cb_v(BranchingMechanism::feller(alpha, beta), lam, t);
  }, py::arg("alpha"), py::arg("beta"), py::arg("lam"), py::arg("t"));
  m.def("scale_function", [](double alpha, double beta, double r) {
    return scale_function(BranchingMechanism::feller(alpha, beta), r);
  });
  m.def("sigma_tail_N", &sigma_tail_N);
  m.def("excursion_sup_measure", &excursion_sup_measure);

  m.def("run", [](const std::string& command, const py::object& config, std::optional<std::uint64_t> seed,
                  std::optional<std::size_t> workers, std::optional<std::string> out) {
    runner::Invocation inv;
    inv.command = command;
    inv.config = to_json(config);
    inv.seed = seed;
    inv.workers = workers;
    inv.out = out;
    std::ostringstream log;
    int rc;
    {
      py::gil_scoped_release release;
      rc = runner::run(inv, log);
    }
    return py::make_tuple(rc, log.str());
  }, py::arg("command"), py::arg("config"), py::arg("seed") = py::none(), py::arg("workers") = py::none(),
     py::arg("out") = py::none(), "Runs a CLI command in process; returns (exit_code, log).");
}
