#include <pybind11/eigen.h>
#include <pybind11/iostream.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <memory>

#include "volfilter/cli.hpp"
#include "volfilter/config.hpp"
#include "volfilter/errors.hpp"
#include "volfilter/filter.hpp"
#include "volfilter/io.hpp"
#include "volfilter/oracle.hpp"
#include "volfilter/simulator.hpp"
#include "volfilter/structure_table.hpp"

namespace py = pybind11;
using namespace volfilter;

namespace {

using Ticks = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Tick> to_ticks(const Ticks& a) {
  if (a.ndim() != 2 || (a.shape(0) > 0 && a.shape(1) != 2)) {
    throw InvalidInput("ticks must be an (n, 2) array of (time, log price)");
  }
  std::vector<Tick> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t k = 0; k < a.shape(0); ++k) out[static_cast<std::size_t>(k)] = {r(k, 0), r(k, 1)};
  return out;
}

py::array_t<double> from_ticks(const std::vector<Tick>& ticks) {
  py::array_t<double> out({static_cast<py::ssize_t>(ticks.size()), py::ssize_t{2}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    w(static_cast<py::ssize_t>(k), 0) = ticks[k].time;
    w(static_cast<py::ssize_t>(k), 1) = ticks[k].logprice;
  }
  return out;
}

// {"time": (n,), "probe": (n,) bool, "pi": (n, M)}
py::dict from_trajectory(const Trajectory& traj) {
  const auto n = static_cast<py::ssize_t>(traj.size());
  const py::ssize_t m = traj.empty() ? 0 : traj[0].pi.size();
  py::array_t<double> time(n);
  py::array_t<bool> probe(n);
  py::array_t<double> pi({n, m});
  auto t = time.mutable_unchecked<1>();
  auto p = probe.mutable_unchecked<1>();
  auto w = pi.mutable_unchecked<2>();
  for (py::ssize_t k = 0; k < n; ++k) {
    const auto& row = traj[static_cast<std::size_t>(k)];
    t(k) = row.time;
    p(k) = row.kind == PointKind::kProbe;
    for (py::ssize_t i = 0; i < m; ++i) w(k, i) = row.pi[i];
  }
  py::dict out;
  out["time"] = time;
  out["probe"] = probe;
  out["pi"] = pi;
  return out;
}

}  // namespace

PYBIND11_MODULE(_volfilter, m) {
  m.doc() = "Regime filter for tick data with volatility-dependent arrivals";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", error.ptr());
  py::register_exception<FileError>(m, "FileError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());

  py::class_<VolatilityChain>(m, "VolatilityChain")
      .def(py::init<Vector, Matrix, Vector>(), py::arg("states"), py::arg("intensity"), py::arg("prior"))
      .def_property_readonly("size", &VolatilityChain::size)
      .def_property_readonly("states", &VolatilityChain::states)
      .def_property_readonly("intensity", &VolatilityChain::intensity)
      .def_property_readonly("prior", &VolatilityChain::initial_law)
      .def("transition", [](const VolatilityChain& c, double t) { return transition_matrix(c, t); });

  py::class_<MarketModel>(m, "MarketModel")
      .def(py::init<Vector, Vector, double, double>(), py::arg("drift"), py::arg("vol"), py::arg("x0") = 0.0,
           py::arg("vol_floor") = MarketModel::kDefaultVolFloor)
      .def_property_readonly("drift", &MarketModel::drift)
      .def_property_readonly("vol", &MarketModel::vol)
      .def_property_readonly("x0", &MarketModel::x0);

  py::class_<ObservationPolicy>(m, "ObservationPolicy")
      .def_static("cox", &ObservationPolicy::cox, py::arg("intensity"))
      .def_static("poisson", &ObservationPolicy::poisson, py::arg("rate"))
      .def_static("fixed_grid", &ObservationPolicy::fixed_grid, py::arg("step"))
      .def_property_readonly("name", [](const ObservationPolicy& p) { return std::string(p.name()); });

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](double t_max, std::size_t n_t, double z_min, double z_max, std::size_t n_z,
                       std::size_t n_paths, std::uint64_t seed) {
             return GridSpec{t_max, n_t, z_min, z_max, n_z, n_paths, seed};
           }),
           py::arg("t_max"), py::arg("n_t"), py::arg("z_min"), py::arg("z_max"), py::arg("n_z"),
           py::arg("n_paths"), py::arg("seed") = 1)
      .def_readwrite("t_max", &GridSpec::t_max)
      .def_readwrite("n_t", &GridSpec::n_t)
      .def_readwrite("z_min", &GridSpec::z_min)
      .def_readwrite("z_max", &GridSpec::z_max)
      .def_readwrite("n_z", &GridSpec::n_z)
      .def_readwrite("n_paths", &GridSpec::n_paths)
      .def_readwrite("seed", &GridSpec::seed);

  py::class_<StructureTable, std::shared_ptr<StructureTable>>(m, "StructureTable")
      .def_property_readonly("size", &StructureTable::size)
      .def_property_readonly("grid", &StructureTable::grid)
      .def_property_readonly("model_hash", &StructureTable::model_hash)
      .def("q", &eval_q_matrix, py::arg("dt"), py::arg("dz"))
      .def("qbar", &eval_qbar_matrix, py::arg("dt"))
      .def("qbar_node", [](const StructureTable& t, std::size_t j, std::size_t i, std::size_t k) {
        return t.qbar(j, i, k);
      })
      .def("save", [](const StructureTable& t, const std::filesystem::path& p) { save_table(t, p); });

  m.def(
      "build_table",
      [](const VolatilityChain& chain, const MarketModel& model, const ObservationPolicy& policy,
         const GridSpec& grid, int threads) {
        BuildOptions o;
        o.threads = threads;
        py::gil_scoped_release release;
        return std::make_shared<StructureTable>(build_table(chain, model, policy, grid, o));
      },
      py::arg("chain"), py::arg("model"), py::arg("policy"), py::arg("grid"), py::arg("threads") = 1);
  m.def("load_table", [](const std::filesystem::path& p) { return std::make_shared<StructureTable>(load_table(p)); });
  m.def("default_z_range", &default_z_range, py::arg("model"), py::arg("t_max"));

  m.def(
      "simulate",
      [](const VolatilityChain& chain, const MarketModel& model, const ObservationPolicy& policy, double horizon,
         std::uint64_t seed) {
        const SimOutput s = simulate(chain, model, policy, horizon, seed);
        return py::make_tuple(from_ticks(s.ticks), py::array_t<int>(static_cast<py::ssize_t>(s.true_states_at_ticks.size()),
                                                                    s.true_states_at_ticks.data()));
      },
      py::arg("chain"), py::arg("model"), py::arg("policy"), py::arg("horizon"), py::arg("seed"),
      "Returns (ticks, states): an (n, 2) array of (time, log price) and the 0-based state at each tick.");

  m.def(
      "run_filter",
      [](const VolatilityChain& chain, const MarketModel& model, const ObservationPolicy& policy,
         std::shared_ptr<StructureTable> table, const Ticks& ticks, std::vector<double> probes, double rk4_step) {
        const std::vector<Tick> t = to_ticks(ticks);
        FilterOptions o;
        o.rk4_step = rk4_step;
        FilterState state = FilterState::init(chain, model, policy, std::move(table), o);
        return from_trajectory(run(state, t, probes));
      },
      py::arg("chain"), py::arg("model"), py::arg("policy"), py::arg("table"), py::arg("ticks"),
      py::arg("probes") = std::vector<double>{}, py::arg("rk4_step") = 0.0);

  m.def(
      "run_oracle",
      [](const VolatilityChain& chain, const MarketModel& model, const ObservationPolicy& policy,
         const Ticks& ticks, std::vector<double> probes, std::size_t particles, std::uint64_t seed, int threads) {
        const std::vector<Tick> t = to_ticks(ticks);
        OracleOptions o;
        o.particles = particles;
        o.seed = seed;
        o.threads = threads;
        OracleResult r;
        {
          py::gil_scoped_release release;
          r = pf_run(chain, model, policy, t, probes, o);
        }
        py::dict out = from_trajectory(r.trajectory);
        out["resamples"] = r.diagnostics.resamples;
        return out;
      },
      py::arg("chain"), py::arg("model"), py::arg("policy"), py::arg("ticks"),
      py::arg("probes") = std::vector<double>{}, py::arg("particles") = 10000, py::arg("seed") = 1,
      py::arg("threads") = 1);

  py::class_<RunConfig>(m, "RunConfig")
      .def_readonly("seed", &RunConfig::seed)
      .def_property_readonly("horizon", [](const RunConfig& c) { return c.simulate.horizon; })
      .def_property_readonly("particles", [](const RunConfig& c) { return c.oracle.particles; })
      .def("chain", &RunConfig::chain)
      .def("market", &RunConfig::market)
      .def("policy", &RunConfig::observation_policy)
      .def("grid", &RunConfig::grid_spec)
      .def("dump", &dump_config);
  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("read_config", [](const std::filesystem::path& p) { return parse_config(read_text_file(p)); });

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "volfilter");
        py::scoped_ostream_redirect out(std::cout, py::module_::import("sys").attr("stdout"));
        py::scoped_ostream_redirect err(std::cerr, py::module_::import("sys").attr("stderr"));
        return cli(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs the command line tool in-process and returns its exit code.");
}
