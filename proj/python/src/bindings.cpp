#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mdsbl/experiment.hpp"
#include "mdsbl/metrics.hpp"
#include "mdsbl/nomp.hpp"
#include "mdsbl/sbl_engine.hpp"
#include "mdsbl/scenario.hpp"

namespace py = pybind11;
using namespace mdsbl;

namespace {

Rect make_rect(const Vec2& lower, const Vec2& upper) { return {lower, upper}; }

MultiSensorObservation make_observation(const std::vector<CVector>& snapshots, const std::vector<RadarGeometry>& sensors,
                                        const std::optional<std::vector<CMatrix>>& envelopes) {
  if (snapshots.size() != sensors.size()) throw InvalidInputError("one snapshot per sensor is required");
  if (envelopes && envelopes->size() != sensors.size()) throw InvalidInputError("one envelope per sensor is required");
  MultiSensorObservation obs;
  for (std::size_t l = 0; l < sensors.size(); ++l) {
    const auto n = sensors[l].num_samples();
    obs.sensors.push_back({std::make_shared<RadarDictionary>(sensors[l]), snapshots[l],
                           envelopes ? NoiseEnvelope((*envelopes)[l]) : NoiseEnvelope::identity(n)});
  }
  return obs;
}

std::vector<Vec2> default_grid(const std::vector<RadarGeometry>& sensors, const Rect& region) {
  return polar_grid(sensors.front(), region, 3.75, 8.0 * kPi / 180.0, 88.0 * kPi / 180.0);
}

py::dict sbl_estimate(const std::vector<CVector>& snapshots, const std::vector<RadarGeometry>& sensors,
                      double threshold_db, const Rect& region, std::optional<std::vector<Vec2>> grid,
                      std::optional<std::vector<CMatrix>> envelopes, int max_outer_iters) {
  const auto obs = make_observation(snapshots, sensors, envelopes);
  EngineConfig cfg;
  cfg.threshold_chi = db_to_linear(threshold_db);
  cfg.region = region;
  cfg.grid = grid ? *grid : default_grid(sensors, region);
  cfg.max_outer_iters = max_outer_iters;
  SblEstimate est;
  {
    py::gil_scoped_release release;
    est = run(obs, cfg);
  }
  std::vector<Vec2> locations;
  std::vector<double> gammas;
  for (const auto& c : est.components) {
    locations.push_back(c.location);
    gammas.push_back(c.gamma);
  }
  py::dict out;
  out["locations"] = locations;
  out["gammas"] = gammas;
  out["noise_precisions"] = est.noise_precisions;
  out["amplitudes"] = est.amp_mean;
  out["objective_trace"] = est.objective_trace;
  out["converged"] = est.converged;
  out["iterations"] = est.iterations;
  return out;
}

py::dict nomp_estimate(const CVector& snapshot, const RadarGeometry& sensor, double threshold_db, const Rect& region,
                       double noise_precision, std::optional<std::vector<Vec2>> grid) {
  NompConfig cfg;
  cfg.tau = db_to_linear(threshold_db);
  cfg.region = region;
  cfg.grid = grid ? *grid : default_grid({sensor}, region);
  const RadarDictionary dict(sensor);
  NompEstimate est;
  {
    py::gil_scoped_release release;
    est = nomp_run(snapshot, dict, cfg, noise_precision, NoiseEnvelope::identity(sensor.num_samples()));
  }
  py::dict out;
  out["locations"] = est.locations;
  out["amplitudes"] = est.amplitudes;
  out["residual_power"] = est.residual_power;
  return out;
}

py::dict experiment(const std::string& config_json, std::optional<int> workers) {
  const auto cfg = config_from_json(nlohmann::json::parse(config_json));
  ExperimentResult res;
  {
    py::gil_scoped_release release;
    res = run_experiment(cfg, resolve_workers(workers));
  }
  py::dict out;
  out["rows_csv"] = rows_csv(res.rows);
  out["aggregate_csv"] = aggregate_csv(res.aggregates);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-sensor gridless sparse Bayesian learning for MIMO radar";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<InvalidInputError>(m, "InvalidInputError", PyExc_ValueError);

  py::class_<Rect>(m, "Rect")
      .def(py::init(&make_rect), py::arg("lower"), py::arg("upper"))
      .def_readwrite("lower", &Rect::lower)
      .def_readwrite("upper", &Rect::upper)
      .def("contains", &Rect::contains);

  py::class_<RadarGeometry>(m, "RadarGeometry")
      .def_static("mimo3x3", &RadarGeometry::mimo3x3, py::arg("position"), py::arg("broadside"),
                  py::arg("path_loss") = false, py::arg("carrier_wavelength") = 0.3)
      .def_static("mimo3x3_aimed", &RadarGeometry::mimo3x3_aimed, py::arg("position"), py::arg("target"),
                  py::arg("path_loss") = false, py::arg("carrier_wavelength") = 0.3)
      .def_readonly("sensor_position", &RadarGeometry::sensor_position)
      .def_readonly("broadside", &RadarGeometry::broadside)
      .def_readonly("path_loss_enabled", &RadarGeometry::path_loss_enabled)
      .def_property_readonly("num_samples", &RadarGeometry::num_samples);

  m.def("atom", py::overload_cast<const Vec2&, const RadarGeometry&>(&atom), py::arg("position"), py::arg("geometry"),
        "Unit-amplitude sensor response to a point object.");

  py::class_<ObjectSpec>(m, "ObjectSpec")
      .def(py::init([](const Vec2& p, double snr_db, std::optional<double> ref) { return ObjectSpec{p, snr_db, ref}; }),
           py::arg("position"), py::arg("snr_db") = 30.0, py::arg("reference_distance") = py::none())
      .def_readwrite("position", &ObjectSpec::position)
      .def_readwrite("snr_db", &ObjectSpec::snr_db)
      .def_readwrite("reference_distance", &ObjectSpec::reference_distance);

  py::class_<Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("sensors", &Scenario::sensors)
      .def_readwrite("objects", &Scenario::objects)
      .def_readwrite("noise_precision", &Scenario::noise_precision)
      .def_readwrite("seed", &Scenario::seed)
      .def_readwrite("noiseless", &Scenario::noiseless)
      .def("truth", &Scenario::truth);

  m.def(
      "crossing_scenario", [](int t, double snr_db) { return crossing_scenario({}, t, snr_db); }, py::arg("t"),
      py::arg("snr_db") = 30.0);
  m.def(
      "multi_radar_scenario",
      [](const std::string& which, int sensors) {
        if (which == "single_object") return multi_radar_scenario(MultiRadarCase::kSingleObject, sensors);
        if (which == "four_object_pathloss") return multi_radar_scenario(MultiRadarCase::kFourObjectPathLoss, sensors);
        throw InvalidInputError("unknown scene '" + which + "'");
      },
      py::arg("which"), py::arg("sensor_count"));
  m.def(
      "synthesize",
      [](const Scenario& sc, std::uint64_t run) {
        std::vector<CVector> out;
        for (auto& s : synthesize(sc, run).sensors) out.push_back(std::move(s.y));
        return out;
      },
      py::arg("scenario"), py::arg("run_index") = 0, "Noisy snapshots, one per sensor.");
  m.def("crossing_region", &crossing_region);
  m.def("polar_grid", &polar_grid, py::arg("geometry"), py::arg("region"), py::arg("range_step"),
        py::arg("angle_step"), py::arg("max_angle"));
  m.def("xy_grid", &xy_grid, py::arg("region"), py::arg("step"));

  m.def("sbl_estimate", &sbl_estimate, py::arg("snapshots"), py::arg("sensors"), py::arg("threshold_db"),
        py::arg("region"), py::arg("grid") = py::none(), py::arg("envelopes") = py::none(),
        py::arg("max_outer_iters") = 50);
  m.def("nomp_estimate", &nomp_estimate, py::arg("snapshot"), py::arg("sensor"), py::arg("threshold_db"),
        py::arg("region"), py::arg("noise_precision") = 1.0, py::arg("grid") = py::none());

  m.def(
      "ospa",
      [](const std::vector<Vec2>& truth, const std::vector<Vec2>& est, double p, double c) {
        return ospa(truth, est, {p, c});
      },
      py::arg("truth"), py::arg("estimate"), py::arg("p") = 2.0, py::arg("c") = 10.0);

  m.def(
      "normalize_config", [](const std::string& text) { return normalize_config(nlohmann::json::parse(text)).dump(); },
      py::arg("config_json"));
  m.def("run_experiment", &experiment, py::arg("config_json"), py::arg("workers") = py::none(),
        "Runs an experiment; returns the per-run and aggregate CSV text.");
}
