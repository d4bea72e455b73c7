#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "declab/dynamics.hpp"
#include "declab/einselection.hpp"
#include "declab/envariance.hpp"
#include "declab/errors.hpp"
#include "declab/histories.hpp"
#include "declab/scenario.hpp"
#include "declab/spinbath.hpp"

namespace py = pybind11;
using namespace declab;

namespace {

py::tuple as_fraction(const Rational& r) { return py::make_tuple(r.numerator(), r.denominator()); }

py::object json_to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Json py_to_json(const py::handle& obj) {
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

SpinBathParams make_bath(Complex a, Complex b, std::vector<double> couplings, std::vector<Complex> alpha, std::vector<Complex> beta) {
  SpinBathParams p;
  p.a = a;
  p.b = b;
  p.couplings = std::move(couplings);
  if (alpha.size() != beta.size()) throw Error(ErrorCode::InvalidArgument, "alpha and beta lengths differ");
  for (std::size_t k = 0; k < alpha.size(); ++k) p.env_amps.emplace_back(alpha[k], beta[k]);
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Decoherence laboratory engines";

  py::register_exception<Error>(m, "DeclabError", PyExc_RuntimeError);

  // spin bath
  py::class_<SpinBathParams>(m, "SpinBathParams")
      .def(py::init(&make_bath), py::arg("a"), py::arg("b"), py::arg("couplings"), py::arg("alpha"), py::arg("beta"))
      .def_static("homogeneous", &SpinBathParams::homogeneous, py::arg("n"), py::arg("g"), py::arg("alpha_sq"),
                  py::arg("a") = Complex(1 / std::sqrt(2.0)), py::arg("b") = Complex(1 / std::sqrt(2.0)))
      .def_static(
          "random",
          [](std::size_t n, std::uint64_t seed, Complex a, Complex b) {
            RandomStream rng(seed, 0);
            return SpinBathParams::random(n, rng, a, b);
          },
          py::arg("n"), py::arg("seed"), py::arg("a") = Complex(1 / std::sqrt(2.0)), py::arg("b") = Complex(1 / std::sqrt(2.0)))
      .def_readonly("a", &SpinBathParams::a)
      .def_readonly("b", &SpinBathParams::b)
      .def_readonly("couplings", &SpinBathParams::couplings)
      .def_property_readonly("n_env", &SpinBathParams::n_env)
      .def_property_readonly("alpha", [](const SpinBathParams& p) {
        std::vector<Complex> v;
        for (const auto& ab : p.env_amps) v.push_back(ab.first);
        return v;
      })
      .def_property_readonly("beta", [](const SpinBathParams& p) {
        std::vector<Complex> v;
        for (const auto& ab : p.env_amps) v.push_back(ab.second);
        return v;
      });

  m.def("z_analytic", &z_analytic, py::arg("params"), py::arg("t"));
  m.def("z_mod_sq", &z_mod_sq, py::arg("params"), py::arg("t"));
  m.def(
      "z_trace", [](const SpinBathParams& p, const std::vector<double>& ts, std::size_t workers) { return z_trace(p, ts, workers).z_values; },
      py::arg("params"), py::arg("times"), py::arg("workers") = 1);
  m.def("long_time_average", &long_time_average, py::arg("params"));
  m.def("z_binomial", &z_binomial, py::arg("params"), py::arg("t"));
  m.def(
      "gaussian_envelope",
      [](const SpinBathParams& p, bool homogeneous) {
        const auto e = homogeneous ? gaussian_limit(p) : gaussian_envelope(p);
        py::dict d;
        d["A"] = e.A;
        d["B_moment"] = e.B_moment;
        d["B_fit"] = e.B_fit;
        d["window"] = e.window;
        d["max_deviation"] = e.max_deviation;
        return d;
      },
      py::arg("params"), py::arg("homogeneous") = false);
  m.def("reduced_density", [](const SpinBathParams& p, double t) -> CMatrix { return reduced_density(p, t).matrix(); },
        py::arg("params"), py::arg("t"));
  m.def(
      "environment_overlap",
      [](const SpinBathParams& p, double t) {
        const auto [up, dn] = environment_branches(p, t);
        return Complex(up.dot(dn));
      },
      py::arg("params"), py::arg("t"), "<E_up(t)|E_dn(t)> from the brute-force state.");

  // einselection
  m.def(
      "near_degenerate_eigenvectors",
      [](double delta, Complex omega) {
        const auto e = near_degenerate_eigenvectors(delta, omega);
        return py::make_tuple(std::vector<double>{e.eigenvalues[0], e.eigenvalues[1]}, std::vector<CVector>{e.eigenvectors[0], e.eigenvectors[1]});
      },
      py::arg("delta"), py::arg("omega"));
  m.def("angular_distance", &angular_distance, py::arg("u"), py::arg("v"));
  m.def(
      "pointer_sieve",
      [](const SpinBathParams& p, const std::vector<CVector>& candidates, const std::vector<double>& times) {
        const SpaceLayout s{{"S", 2}};
        std::vector<PureState> states;
        for (const auto& c : candidates) states.push_back(PureState::normalized(s, c));
        py::list out;
        for (const auto& rep : predictability_sieve(spin_bath_spec(p), DensityOperator::from_pure(spin_bath_environment(p)), states, times)) {
          py::list entries;
          for (const auto& e : rep.entries) entries.append(py::make_tuple(e.index, e.purity, e.entropy));
          out.append(entries);
        }
        return out;
      },
      py::arg("params"), py::arg("candidates"), py::arg("times"),
      "Per time, (candidate index, purity, entropy) best first, for qubit candidates in the spin-bath model.");

  // envariance
  m.def(
      "derive_equal_probabilities",
      [](std::size_t k, const std::vector<double>& phases) {
        const auto d = derive_equal_probabilities(SchmidtState::equal(k, phases));
        py::list probs, trace;
        for (const auto& r : d.probabilities) probs.append(as_fraction(r));
        for (const auto& e : d.trace) trace.append(py::make_tuple(to_string(e.step), e.assumptions, e.residual));
        return py::make_tuple(probs, trace);
      },
      py::arg("k"), py::arg("phases") = std::vector<double>{});
  m.def(
      "fine_grain",
      [](const std::vector<std::string>& squared) {
        std::vector<Rational> sq;
        for (const auto& s : squared) sq.push_back(parse_rational(s));
        const auto fg = fine_grain(sq);
        py::list probs;
        for (const auto& r : fg.probabilities) probs.append(as_fraction(r));
        return py::make_tuple(probs, fg.multiplicities, fg.denominator, fg.derivation.max_residual);
      },
      py::arg("squared"), "Squared amplitudes as 'm/M' strings; returns (probabilities, multiplicities, M, max residual).");

  // histories
  m.def(
      "decoherence_functional",
      [](const CMatrix& rho0, const CMatrix& h, const std::vector<double>& times, const std::vector<std::vector<CMatrix>>& families,
         bool heisenberg) {
        if (times.size() != families.size()) throw Error(ErrorCode::InvalidArgument, "one family per time");
        const SpaceLayout l{{"A", static_cast<std::size_t>(rho0.rows())}};
        std::vector<ProjectorFamily> fams;
        for (std::size_t i = 0; i < times.size(); ++i) fams.push_back({times[i], l, families[i]});
        const auto set = fine_grained_histories(fams);
        const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(Observable(l, h)), 0.0, times);
        const auto d = decoherence_functional(set, DensityOperator(l, rho0), prop, heisenberg ? Picture::Heisenberg : Picture::Schroedinger);
        std::vector<std::string> labels;
        for (const auto& hist : d.histories) labels.push_back(hist.label());
        return py::make_tuple(labels, d.values);
      },
      py::arg("rho0"), py::arg("hamiltonian"), py::arg("times"), py::arg("families"), py::arg("heisenberg") = false,
      "Fine-grained histories over the given projector families, preparation at t = 0.");

  // dynamics
  m.def(
      "gaussian_packet",
      [](double x_min, double dx, std::size_t n, double x0, double sigma, double k0) {
        return GridWavefunction::gaussian(x_min, dx, n, x0, sigma, k0).values;
      },
      py::arg("x_min"), py::arg("dx"), py::arg("n"), py::arg("x0"), py::arg("sigma"), py::arg("k0") = 0.0);
  m.def(
      "grw_hit_centers",
      [](const CVector& psi, double x_min, double dx, double delta, std::size_t samples, std::uint64_t seed) {
        const HitSampler sampler(GridWavefunction{x_min, dx, psi, 1.0}, delta);
        RandomStream rng(seed, 0);
        std::vector<double> out(samples);
        for (auto& x : out) x = sampler.sample(rng);
        return out;
      },
      py::arg("psi"), py::arg("x_min"), py::arg("dx"), py::arg("delta"), py::arg("samples"), py::arg("seed"));
  m.def(
      "grw_preset",
      [](const std::string& name) {
        const auto p = grw_preset(name);
        py::dict d;
        d["name"] = p.name;
        d["n_particles"] = p.n_particles.to_string();
        d["nu_per_second"] = p.nu_per_second.to_string();
        d["total_rate_per_second"] = p.total_rate_per_second.to_string();
        d["mean_interhit_seconds"] = p.mean_interhit_seconds.to_string();
        d["rescale_factor"] = p.rescale_factor;
        d["desk_nu"] = p.desk.nu;
        d["desk_delta"] = p.desk.delta;
        return d;
      },
      py::arg("name"));
  m.def(
      "dephasing_run",
      [](const CVector& psi, double x_min, double dx, double lambda, double dt, std::size_t steps, bool kinetic) -> CMatrix {
        auto rho = GridDensity::from_pure(GridWavefunction{x_min, dx, psi, 1.0});
        for (std::size_t s = 0; s < steps; ++s) rho = master_step(rho, MasterParams{1.0, lambda}, dt, kinetic);
        return rho.matrix;
      },
      py::arg("psi"), py::arg("x_min"), py::arg("dx"), py::arg("lambda_"), py::arg("dt"), py::arg("steps"), py::arg("kinetic") = true,
      "Returns rho(x_i, x_j) dx after the given master-equation steps (unit mass).");
  m.def(
      "bohm_free_run",
      [](const CVector& psi, double x_min, double dx, std::size_t n, double dt, double t_end, std::uint64_t seed, std::size_t workers) {
        const GridWavefunction g{x_min, dx, psi, 1.0};
        const FreeEvolution src(g);
        const auto run = bohm_run(src, sample_ensemble(g, n, seed), dt, t_end, workers);
        return py::make_tuple(run.times, run.trajectories, count_crossings(run));
      },
      py::arg("psi"), py::arg("x_min"), py::arg("dx"), py::arg("n"), py::arg("dt"), py::arg("t_end"), py::arg("seed"), py::arg("workers") = 1,
      "Returns (times, trajectories[particle][step], crossings).");

  // scenarios
  m.def("scenario_names", &scenario_names);
  m.def(
      "validate_config",
      [](const py::object& config, const std::filesystem::path& base_dir) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& v : validate_config(py_to_json(config), base_dir)) out.emplace_back(v.path, v.message);
        return out;
      },
      py::arg("config"), py::arg("base_dir") = std::filesystem::path("."));
  m.def(
      "run_scenario",
      [](const py::object& config, const std::filesystem::path& base_dir) {
        const auto manifest = run(ScenarioConfig::from_json(py_to_json(config), base_dir));
        return json_to_py(manifest.to_json());
      },
      py::arg("config"), py::arg("base_dir") = std::filesystem::path("."), "Runs a config given as a dict; returns the manifest.");
  m.def(
      "load_config",
      [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
        const auto src = load_config(path, overrides);
        return py::make_tuple(json_to_py(src.document), src.base_dir);
      },
      py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
}
