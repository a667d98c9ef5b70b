#include "mdsbl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mdsbl/metrics.hpp"
#include "mdsbl/nomp.hpp"
#include "mdsbl/sbl_engine.hpp"

namespace mdsbl {

using nlohmann::json;

namespace {

constexpr double kDeg = kPi / 180.0;

// ---------------------------------------------------------------------------
// JSON reading with collected diagnostics
// ---------------------------------------------------------------------------

class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items()) {
      const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
      if (!known) fail(join(path, key), "unknown key");
    }
    return true;
  }

  void number(const json& j, const char* key, double& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_number()) out = v->get<double>();
      else fail(join(path, key), "expected a number");
    }
  }

  void optional_number(const json& j, const char* key, std::optional<double>& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_null()) out.reset();
      else if (v->is_number()) out = v->get<double>();
      else fail(join(path, key), "expected a number or null");
    }
  }

  void integer(const json& j, const char* key, int& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_number_integer()) out = v->get<int>();
      else fail(join(path, key), "expected an integer");
    }
  }

  void unsigned_integer(const json& j, const char* key, std::uint64_t& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
      else fail(join(path, key), "expected a non-negative integer");
    }
  }

  void boolean(const json& j, const char* key, bool& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else fail(join(path, key), "expected true or false");
    }
  }

  void string(const json& j, const char* key, std::string& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (v->is_string()) out = v->get<std::string>();
      else fail(join(path, key), "expected a string");
    }
  }

  bool vec2(const json& v, Vec2& out, const std::string& path) {
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      out = {v[0].get<double>(), v[1].get<double>()};
      return true;
    }
    fail(path, "expected [x, y]");
    return false;
  }

  void vec2(const json& j, const char* key, Vec2& out, const std::string& path) {
    if (const json* v = find(j, key)) vec2(*v, out, join(path, key));
  }

  void number_list(const json& j, const char* key, std::vector<double>& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (!v->is_array()) return fail(join(path, key), "expected a list of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i].is_number()) out.push_back((*v)[i].get<double>());
        else fail(join(path, key) + "[" + std::to_string(i) + "]", "expected a number");
      }
    }
  }

  void integer_list(const json& j, const char* key, std::vector<int>& out, const std::string& path) {
    if (const json* v = find(j, key)) {
      if (!v->is_array()) return fail(join(path, key), "expected a list of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i].is_number_integer()) out.push_back((*v)[i].get<int>());
        else fail(join(path, key) + "[" + std::to_string(i) + "]", "expected an integer");
      }
    }
  }

  void fail(const std::string& path, const std::string& what) { errors_.push_back(path + ": " + what); }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  static const json* find(const json& j, const char* key) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }

  std::vector<std::string>& errors_;
};

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

json rect_json(const Rect& r) { return {{"lower", vec2_json(r.lower)}, {"upper", vec2_json(r.upper)}}; }

std::optional<SweepVariable> parse_sweep(const std::string& s) {
  if (s == "t") return SweepVariable::kTimeStep;
  if (s == "threshold") return SweepVariable::kThreshold;
  if (s == "sensor_count") return SweepVariable::kSensorCount;
  return std::nullopt;
}

std::optional<MultiRadarCase> multi_radar_case(const std::string& builtin) {
  if (builtin == "single_object") return MultiRadarCase::kSingleObject;
  if (builtin == "four_object_pathloss") return MultiRadarCase::kFourObjectPathLoss;
  return std::nullopt;
}

void read_scenario(const json& j, ScenarioSpec& sc, Reader& r) {
  const std::string path = "scenario";
  if (!r.object(j, path, {"builtin", "carrier_wavelength", "snr_db", "crossing", "time_steps", "sensors", "objects",
                          "region", "grid"}))
    return;
  r.string(j, "builtin", sc.builtin, path);
  r.number(j, "carrier_wavelength", sc.carrier_wavelength, path);
  r.optional_number(j, "snr_db", sc.snr_db, path);

  if (j.contains("crossing")) {
    if (!sc.is_crossing()) r.fail("scenario.crossing", "only valid for builtin crossing_tracks");
    const json& c = j["crossing"];
    const std::string cp = "scenario.crossing";
    if (r.object(c, cp, {"crossing_angle_deg", "start_a", "start_b", "speed", "t_min", "t_max"})) {
      double angle_deg = sc.crossing.crossing_angle / kDeg;
      r.number(c, "crossing_angle_deg", angle_deg, cp);
      sc.crossing.crossing_angle = angle_deg * kDeg;
      r.vec2(c, "start_a", sc.crossing.start_a, cp);
      r.vec2(c, "start_b", sc.crossing.start_b, cp);
      r.number(c, "speed", sc.crossing.speed, cp);
      r.integer(c, "t_min", sc.crossing.t_min, cp);
      r.integer(c, "t_max", sc.crossing.t_max, cp);
    }
  }
  if (j.contains("time_steps") && !sc.is_crossing()) r.fail("scenario.time_steps", "only valid for builtin crossing_tracks");
  r.integer_list(j, "time_steps", sc.time_steps, path);

  const bool is_inline = sc.builtin == "inline";
  if (j.contains("sensors")) {
    if (!is_inline) r.fail("scenario.sensors", "only valid for inline scenarios");
    const json& list = j["sensors"];
    if (!list.is_array()) {
      r.fail("scenario.sensors", "expected a list");
    } else {
      sc.sensors.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string sp = "scenario.sensors[" + std::to_string(i) + "]";
        SensorSpec s;
        if (r.object(list[i], sp, {"position", "broadside_deg", "aim", "path_loss"})) {
          r.vec2(list[i], "position", s.position, sp);
          r.optional_number(list[i], "broadside_deg", s.broadside_deg, sp);
          if (list[i].contains("aim")) {
            Vec2 aim;
            if (r.vec2(list[i]["aim"], aim, sp + ".aim")) s.aim = aim;
          }
          r.boolean(list[i], "path_loss", s.path_loss, sp);
        }
        sc.sensors.push_back(s);
      }
    }
  }
  if (j.contains("objects")) {
    if (!is_inline) r.fail("scenario.objects", "only valid for inline scenarios");
    const json& list = j["objects"];
    if (!list.is_array()) {
      r.fail("scenario.objects", "expected a list");
    } else {
      sc.objects.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string op = "scenario.objects[" + std::to_string(i) + "]";
        ObjectSpec o;
        if (r.object(list[i], op, {"position", "snr_db", "reference_distance"})) {
          r.vec2(list[i], "position", o.position, op);
          r.number(list[i], "snr_db", o.snr_db, op);
          r.optional_number(list[i], "reference_distance", o.reference_distance, op);
        }
        sc.objects.push_back(o);
      }
    }
  }
  if (j.contains("region")) {
    const json& rg = j["region"];
    Rect rect;
    if (r.object(rg, "scenario.region", {"lower", "upper"})) {
      r.vec2(rg, "lower", rect.lower, "scenario.region");
      r.vec2(rg, "upper", rect.upper, "scenario.region");
      sc.region = rect;
    }
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    const std::string gp = "scenario.grid";
    GridSpec spec;
    if (r.object(g, gp, {"kind", "step", "range_step", "angle_step_deg", "max_angle_deg"})) {
      std::string kind = "xy";
      r.string(g, "kind", kind, gp);
      if (kind == "xy") spec.kind = GridKind::kXY;
      else if (kind == "polar") spec.kind = GridKind::kPolar;
      else r.fail(gp + ".kind", "expected \"xy\" or \"polar\"");
      r.number(g, "step", spec.step, gp);
      r.number(g, "range_step", spec.range_step, gp);
      r.number(g, "angle_step_deg", spec.angle_step_deg, gp);
      r.number(g, "max_angle_deg", spec.max_angle_deg, gp);
      sc.grid = spec;
    }
  }
}

std::vector<std::string> config_violations(const ExperimentConfig& c) {
  std::vector<std::string> v;
  auto add = [&](const std::string& s) { v.push_back(s); };
  if (c.schema_version != kSchemaVersion)
    add("schema_version: unsupported version " + std::to_string(c.schema_version));
  if (c.runs < 1) add("runs: must be >= 1");
  if (c.thresholds_db.empty()) add("thresholds_db: must not be empty");
  for (double t : c.thresholds_db)
    if (!std::isfinite(t)) add("thresholds_db: values must be finite");
  for (double t : c.nomp_thresholds_db)
    if (!std::isfinite(t)) add("nomp_thresholds_db: values must be finite");
  if (c.algorithms.empty()) add("algorithms: must not be empty");
  if (std::set<Algorithm>(c.algorithms.begin(), c.algorithms.end()).size() != c.algorithms.size())
    add("algorithms: duplicate entries");
  if (c.sensor_counts.empty()) add("sensor_counts: must not be empty");

  const auto& sc = c.scenario;
  const bool known_builtin = sc.is_crossing() || multi_radar_case(sc.builtin) || sc.builtin == "inline";
  if (!known_builtin) add("scenario.builtin: unknown scene \"" + sc.builtin + "\"");
  const int available = known_builtin ? sc.available_sensors() : 0;
  for (int l : c.sensor_counts)
    if (l < 1 || (known_builtin && l > available))
      add("sensor_counts: " + std::to_string(l) + " outside 1.." + std::to_string(available));
  const bool has_nomp = std::find(c.algorithms.begin(), c.algorithms.end(), Algorithm::kNomp) != c.algorithms.end();
  if (has_nomp && std::any_of(c.sensor_counts.begin(), c.sensor_counts.end(), [](int l) { return l != 1; }))
    add("algorithms: nomp supports a single sensor only");
  if (!(sc.carrier_wavelength > 0.0)) add("scenario.carrier_wavelength: must be positive");
  if (sc.snr_db && !std::isfinite(*sc.snr_db)) add("scenario.snr_db: must be finite");

  if (sc.is_crossing()) {
    if (sc.time_steps.empty()) add("scenario.time_steps: must not be empty");
    for (int t : sc.time_steps)
      if (t < sc.crossing.t_min || t > sc.crossing.t_max)
        add("scenario.time_steps: " + std::to_string(t) + " outside t_min..t_max");
    if (!(sc.crossing.crossing_angle > 0.0 && sc.crossing.crossing_angle < kPi))
      add("scenario.crossing.crossing_angle_deg: must be in (0, 180)");
    if (sc.crossing.speed < 0.0) add("scenario.crossing.speed: must be >= 0");
  } else if (c.sweep == SweepVariable::kTimeStep) {
    add("sweep: \"t\" requires the crossing_tracks scene");
  }
  if (sc.builtin == "inline") {
    if (sc.sensors.empty()) add("scenario.sensors: inline scene needs at least one sensor");
    for (const auto& s : sc.sensors)
      if (!s.broadside_deg && !s.aim) add("scenario.sensors: each sensor needs broadside_deg or aim");
    if (!sc.region) add("scenario.region: required for inline scenes");
    for (const auto& o : sc.objects) {
      if (!std::isfinite(o.snr_db)) add("scenario.objects: snr_db must be finite");
      if (o.reference_distance && !(*o.reference_distance > 0.0))
        add("scenario.objects: reference_distance must be positive");
    }
  }
  if (sc.region && !sc.region->valid()) add("scenario.region: lower must be below upper in both axes");
  if (sc.grid) {
    const auto& g = *sc.grid;
    if (g.kind == GridKind::kXY && !(g.step > 0.0)) add("scenario.grid.step: must be positive");
    if (g.kind == GridKind::kPolar && !(g.range_step > 0.0 && g.angle_step_deg > 0.0 && g.max_angle_deg >= 0.0))
      add("scenario.grid: polar steps must be positive");
  }
  if (c.solver.max_outer_iters < 1) add("solver.max_outer_iters: must be >= 1");
  if (c.solver.k_max < 1) add("solver.k_max: must be >= 1");
  if (c.solver.nomp_refine_rounds < 0) add("solver.nomp_refine_rounds: must be >= 0");
  if (c.solver.nomp_max_components < 0) add("solver.nomp_max_components: must be >= 0");
  if (!(c.solver.optimizer_tol > 0.0)) add("solver.optimizer_tol: must be positive");
  if (c.solver.optimizer_max_evals < 1) add("solver.optimizer_max_evals: must be >= 1");
  return v;
}

[[noreturn]] void throw_violations(const std::vector<std::string>& v) {
  std::string msg = "invalid configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("not a number: \"" + s + "\"");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("not an integer: \"" + s + "\"");
  return v;
}

std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

/// Header-indexed table view used by the CSV readers.
struct Table {
  std::map<std::string, std::size_t> columns;
  std::vector<std::vector<std::string>> rows;

  static Table parse(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty()) throw SchemaError("table is empty");
    Table t;
    const auto header = split(lines[0], ',');
    for (std::size_t i = 0; i < header.size(); ++i) t.columns[header[i]] = i;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto cells = split(lines[i], ',');
      if (cells.size() != header.size())
        throw SchemaError("line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) + " fields");
      t.rows.push_back(std::move(cells));
    }
    return t;
  }

  void require(std::initializer_list<const char*> names) const {
    std::string missing;
    for (const char* n : names)
      if (!columns.count(n)) missing += std::string(missing.empty() ? "" : ", ") + n;
    if (!missing.empty()) throw SchemaError("missing columns: " + missing);
  }

  const std::string& at(const std::vector<std::string>& row, const char* name) const {
    return row[columns.at(name)];
  }
};

constexpr const char* kRowHeader =
    "algorithm,sensor_count,threshold_db,t,sweep_value,run,status,k_hat,ospa,miss,missed_objects,false_alarms,"
    "converged,iterations,noise_precisions,components";

constexpr const char* kAggregateHeader =
    "algorithm,sensor_count,threshold_db,t,sweep_value,runs,failures,mean_ospa,mean_k_hat,p_miss,"
    "mean_missed_objects,mean_false_alarms";

std::string components_field(const std::vector<EstimatedComponent>& comps) {
  std::string out;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (k) out += ';';
    const auto& c = comps[k];
    out += format_double(c.location.x()) + ':' + format_double(c.location.y()) + ':' + format_double(c.gamma);
    for (const auto& a : c.amplitudes) out += ':' + format_double(a.real()) + ':' + format_double(a.imag());
  }
  return out;
}

std::vector<EstimatedComponent> parse_components(const std::string& field) {
  std::vector<EstimatedComponent> out;
  if (field.empty()) return out;
  for (const auto& item : split(field, ';')) {
    const auto parts = split(item, ':');
    if (parts.size() < 3 || (parts.size() - 3) % 2 != 0) throw SchemaError("malformed component \"" + item + "\"");
    EstimatedComponent c;
    c.location = {parse_double(parts[0]), parse_double(parts[1])};
    c.gamma = parse_double(parts[2]);
    for (std::size_t i = 3; i < parts.size(); i += 2) c.amplitudes.emplace_back(parse_double(parts[i]), parse_double(parts[i + 1]));
    out.push_back(std::move(c));
  }
  return out;
}

std::string key_prefix(const std::string& algorithm, int sensor_count, double threshold_db, int t, double sweep) {
  return algorithm + ',' + std::to_string(sensor_count) + ',' + format_double(threshold_db) + ',' + std::to_string(t) +
         ',' + format_double(sweep);
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

EngineConfig engine_config(const ExperimentConfig& config, const CaseSetup& setup, double threshold_db) {
  EngineConfig e;
  e.threshold_chi = db_to_linear(threshold_db);
  e.grid = setup.grid;
  e.region = setup.region;
  e.max_outer_iters = config.solver.max_outer_iters;
  e.k_max = config.solver.k_max;
  e.optimizer_tol = config.solver.optimizer_tol;
  e.optimizer_max_evals = config.solver.optimizer_max_evals;
  return e;
}

NompConfig nomp_config(const ExperimentConfig& config, const CaseSetup& setup, double threshold_db) {
  NompConfig n;
  n.tau = db_to_linear(threshold_db);
  n.grid = setup.grid;
  n.region = setup.region;
  n.refine_rounds = config.solver.nomp_refine_rounds;
  n.max_components = config.solver.nomp_max_components;
  n.optimizer_tol = config.solver.optimizer_tol;
  n.optimizer_max_evals = config.solver.optimizer_max_evals;
  return n;
}

ResultRow run_one(const ExperimentConfig& config, const ExperimentCase& c, const CaseSetup& setup,
                  const GridBank& bank, int run) {
  ResultRow row;
  row.algorithm = to_string(c.algorithm);
  row.sensor_count = c.sensor_count;
  row.threshold_db = c.threshold_db;
  row.t = c.t;
  row.sweep_value = c.sweep_value;
  row.run = run;
  try {
    const auto obs = synthesize(setup.scenario, static_cast<std::uint64_t>(run));
    std::vector<Vec2> locations;
    if (c.algorithm == Algorithm::kSbl) {
      const auto est = mdsbl::run(obs, engine_config(config, setup, c.threshold_db), &bank);
      for (std::size_t k = 0; k < est.components.size(); ++k) {
        EstimatedComponent ec;
        ec.location = est.components[k].location;
        ec.gamma = est.components[k].gamma;
        for (const auto& m : est.amp_mean) ec.amplitudes.push_back(m[static_cast<Eigen::Index>(k)]);
        locations.push_back(ec.location);
        row.components.push_back(std::move(ec));
      }
      row.noise_precisions = est.noise_precisions;
      row.converged = est.converged;
      row.iterations = est.iterations;
    } else {
      const auto& sensor = obs.sensors.at(0);
      const double lambda = setup.scenario.precision_of(0);
      const auto est = nomp_run(sensor.y, *sensor.dictionary, nomp_config(config, setup, c.threshold_db), lambda,
                                sensor.envelope, &bank);
      for (std::size_t k = 0; k < est.locations.size(); ++k) {
        EstimatedComponent ec;
        ec.location = est.locations[k];
        ec.gamma = std::numeric_limits<double>::quiet_NaN();
        ec.amplitudes.push_back(est.amplitudes[k]);
        locations.push_back(ec.location);
        row.components.push_back(std::move(ec));
      }
      row.noise_precisions = {lambda};
      row.converged = true;
      row.iterations = static_cast<int>(est.locations.size());
    }
    const auto truth = setup.scenario.truth();
    row.k_hat = static_cast<int>(locations.size());
    row.ospa = ospa(truth, locations);
    const auto det = detection_stats(truth, locations);
    row.miss = det.miss();
    row.missed_objects = det.missed_objects;
    row.false_alarms = det.false_alarms;
  } catch (const std::exception& e) {
    ResultRow failed;
    failed.algorithm = row.algorithm;
    failed.sensor_count = row.sensor_count;
    failed.threshold_db = row.threshold_db;
    failed.t = row.t;
    failed.sweep_value = row.sweep_value;
    failed.run = row.run;
    row = std::move(failed);
    row.status = sanitize(std::string("error: ") + e.what());
  }
  return row;
}

}  // namespace

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

std::string to_string(Algorithm a) { return a == Algorithm::kSbl ? "sbl" : "nomp"; }

std::string to_string(SweepVariable s) {
  switch (s) {
    case SweepVariable::kTimeStep: return "t";
    case SweepVariable::kThreshold: return "threshold";
    case SweepVariable::kSensorCount: return "sensor_count";
  }
  return "threshold";
}

std::string to_string(GridKind g) { return g == GridKind::kXY ? "xy" : "polar"; }

std::string to_string(Figure f) {
  switch (f) {
    case Figure::kFig3: return "fig3";
    case Figure::kFig4: return "fig4";
    case Figure::kFig5: return "fig5";
  }
  return "fig3";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "sbl") return Algorithm::kSbl;
  if (s == "nomp") return Algorithm::kNomp;
  throw ConfigError("unknown algorithm \"" + s + "\" (expected sbl or nomp)");
}

Figure parse_figure(const std::string& s) {
  if (s == "fig3") return Figure::kFig3;
  if (s == "fig4") return Figure::kFig4;
  if (s == "fig5") return Figure::kFig5;
  throw ConfigError("unknown figure \"" + s + "\" (expected fig3, fig4 or fig5)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

int ScenarioSpec::available_sensors() const {
  if (is_crossing()) return 1;
  if (builtin == "inline") return static_cast<int>(sensors.size());
  return static_cast<int>(multi_radar_sites().size());
}

const std::vector<double>& ExperimentConfig::thresholds_for(Algorithm a) const {
  return a == Algorithm::kNomp && !nomp_thresholds_db.empty() ? nomp_thresholds_db : thresholds_db;
}

ExperimentConfig config_from_json(const json& j) {
  std::vector<std::string> errors;
  Reader r(errors);
  ExperimentConfig c;
  if (!r.object(j, "", {"schema_version", "name", "scenario", "algorithms", "thresholds_db", "nomp_thresholds_db",
                        "sensor_counts", "sweep", "runs", "seed", "output_path", "solver"}))
    throw_violations(errors);
  if (!j.contains("schema_version")) r.fail("schema_version", "required");
  r.integer(j, "schema_version", c.schema_version, "");
  r.string(j, "name", c.name, "");
  if (j.contains("scenario")) read_scenario(j["scenario"], c.scenario, r);
  if (j.contains("algorithms")) {
    const json& a = j["algorithms"];
    if (!a.is_array()) {
      r.fail("algorithms", "expected a list");
    } else {
      c.algorithms.clear();
      for (const auto& item : a) {
        if (item == "sbl") c.algorithms.push_back(Algorithm::kSbl);
        else if (item == "nomp") c.algorithms.push_back(Algorithm::kNomp);
        else r.fail("algorithms", "unknown algorithm " + item.dump());
      }
    }
  }
  r.number_list(j, "thresholds_db", c.thresholds_db, "");
  r.number_list(j, "nomp_thresholds_db", c.nomp_thresholds_db, "");
  r.integer_list(j, "sensor_counts", c.sensor_counts, "");
  if (j.contains("sweep")) {
    std::string s;
    r.string(j, "sweep", s, "");
    if (const auto sv = parse_sweep(s)) c.sweep = *sv;
    else if (j["sweep"].is_string()) r.fail("sweep", "expected \"t\", \"threshold\" or \"sensor_count\"");
  } else if (c.scenario.is_crossing()) {
    c.sweep = SweepVariable::kTimeStep;
  }
  r.integer(j, "runs", c.runs, "");
  r.unsigned_integer(j, "seed", c.seed, "");
  r.string(j, "output_path", c.output_path, "");
  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (r.object(s, "solver", {"max_outer_iters", "k_max", "nomp_refine_rounds", "nomp_max_components",
                               "optimizer_tol", "optimizer_max_evals"})) {
      r.integer(s, "max_outer_iters", c.solver.max_outer_iters, "solver");
      r.integer(s, "k_max", c.solver.k_max, "solver");
      r.integer(s, "nomp_refine_rounds", c.solver.nomp_refine_rounds, "solver");
      r.integer(s, "nomp_max_components", c.solver.nomp_max_components, "solver");
      r.number(s, "optimizer_tol", c.solver.optimizer_tol, "solver");
      r.integer(s, "optimizer_max_evals", c.solver.optimizer_max_evals, "solver");
    }
  }
  for (auto& v : config_violations(c)) errors.push_back(std::move(v));
  if (!errors.empty()) throw_violations(errors);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& sc = c.scenario;
  json scen = {{"builtin", sc.builtin}, {"carrier_wavelength", sc.carrier_wavelength}};
  if (sc.snr_db) scen["snr_db"] = *sc.snr_db;
  if (sc.is_crossing()) {
    scen["crossing"] = {{"crossing_angle_deg", sc.crossing.crossing_angle / kDeg},
                        {"start_a", vec2_json(sc.crossing.start_a)},
                        {"start_b", vec2_json(sc.crossing.start_b)},
                        {"speed", sc.crossing.speed},
                        {"t_min", sc.crossing.t_min},
                        {"t_max", sc.crossing.t_max}};
    scen["time_steps"] = sc.time_steps;
  }
  if (sc.builtin == "inline") {
    json sensors = json::array();
    for (const auto& s : sc.sensors) {
      json js = {{"position", vec2_json(s.position)}, {"path_loss", s.path_loss}};
      if (s.broadside_deg) js["broadside_deg"] = *s.broadside_deg;
      if (s.aim) js["aim"] = vec2_json(*s.aim);
      sensors.push_back(js);
    }
    json objects = json::array();
    for (const auto& o : sc.objects) {
      json jo = {{"position", vec2_json(o.position)}, {"snr_db", o.snr_db}};
      if (o.reference_distance) jo["reference_distance"] = *o.reference_distance;
      objects.push_back(jo);
    }
    scen["sensors"] = sensors;
    scen["objects"] = objects;
  }
  if (sc.region) scen["region"] = rect_json(*sc.region);
  if (sc.grid) {
    const auto& g = *sc.grid;
    if (g.kind == GridKind::kXY)
      scen["grid"] = {{"kind", "xy"}, {"step", g.step}};
    else
      scen["grid"] = {{"kind", "polar"},
                      {"range_step", g.range_step},
                      {"angle_step_deg", g.angle_step_deg},
                      {"max_angle_deg", g.max_angle_deg}};
  }
  json algorithms = json::array();
  for (auto a : c.algorithms) algorithms.push_back(to_string(a));
  return {{"schema_version", c.schema_version},
          {"name", c.name},
          {"scenario", scen},
          {"algorithms", algorithms},
          {"thresholds_db", c.thresholds_db},
          {"nomp_thresholds_db", c.nomp_thresholds_db},
          {"sensor_counts", c.sensor_counts},
          {"sweep", to_string(c.sweep)},
          {"runs", c.runs},
          {"seed", c.seed},
          {"output_path", c.output_path},
          {"solver",
           {{"max_outer_iters", c.solver.max_outer_iters},
            {"k_max", c.solver.k_max},
            {"nomp_refine_rounds", c.solver.nomp_refine_rounds},
            {"nomp_max_components", c.solver.nomp_max_components},
            {"optimizer_tol", c.solver.optimizer_tol},
            {"optimizer_max_evals", c.solver.optimizer_max_evals}}}};
}

json normalize_config(const json& j) { return config_to_json(config_from_json(j)); }

void validate_config(const ExperimentConfig& config) {
  const auto v = config_violations(config);
  if (!v.empty()) throw_violations(v);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    const auto last_nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
    const auto column = last_nl == std::string::npos || upto == 0 ? upto + 1 : upto - last_nl;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cases
// ---------------------------------------------------------------------------

std::vector<ExperimentCase> enumerate_cases(const ExperimentConfig& config) {
  const std::vector<int> steps = config.scenario.is_crossing() ? config.scenario.time_steps : std::vector<int>{0};
  std::vector<ExperimentCase> out;
  for (auto a : config.algorithms)
    for (int l : config.sensor_counts)
      for (double thr : config.thresholds_for(a))
        for (int t : steps) {
          ExperimentCase c{a, l, thr, t, 0.0};
          switch (config.sweep) {
            case SweepVariable::kTimeStep: c.sweep_value = t; break;
            case SweepVariable::kThreshold: c.sweep_value = thr; break;
            case SweepVariable::kSensorCount: c.sweep_value = l; break;
          }
          out.push_back(c);
        }
  return out;
}

CaseSetup build_case(const ExperimentConfig& config, const ExperimentCase& c) {
  const auto& spec = config.scenario;
  CaseSetup setup;
  GridSpec grid;
  if (spec.is_crossing()) {
    setup.scenario = crossing_scenario(spec.crossing, c.t, spec.snr_db.value_or(30.0), spec.carrier_wavelength);
    setup.region = crossing_region();
    grid.kind = GridKind::kPolar;
  } else if (const auto which = multi_radar_case(spec.builtin)) {
    setup.scenario = multi_radar_scenario(*which, c.sensor_count, spec.carrier_wavelength);
    if (spec.snr_db)
      for (auto& o : setup.scenario.objects) o.snr_db = *spec.snr_db;
    setup.region = multi_radar_region(*which);
  } else if (spec.builtin == "inline") {
    for (int l = 0; l < c.sensor_count; ++l) {
      const auto& s = spec.sensors.at(static_cast<std::size_t>(l));
      setup.scenario.sensors.push_back(
          s.broadside_deg
              ? RadarGeometry::mimo3x3(s.position, *s.broadside_deg * kDeg, s.path_loss, spec.carrier_wavelength)
              : RadarGeometry::mimo3x3_aimed(s.position, s.aim.value(), s.path_loss, spec.carrier_wavelength));
    }
    setup.scenario.objects = spec.objects;
    setup.region = spec.region.value();
  } else {
    throw ConfigError("unknown scene \"" + spec.builtin + "\"");
  }
  if (spec.region) setup.region = *spec.region;
  if (spec.grid) grid = *spec.grid;

  setup.grid = grid.kind == GridKind::kXY
                   ? xy_grid(setup.region, grid.step)
                   : polar_grid(setup.scenario.sensors.front(), setup.region, grid.range_step,
                                grid.angle_step_deg * kDeg, grid.max_angle_deg * kDeg);
  // Same noise and phases for every algorithm, threshold and L at a given t.
  setup.scenario.seed = stream_seed(config.seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(c.t)), 0, 1);
  return setup;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

int resolve_workers(std::optional<int> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("MDSBL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult run_experiment(const ExperimentConfig& config, int workers, const ProgressCallback& progress) {
  validate_config(config);
  const auto cases = enumerate_cases(config);
  std::vector<CaseSetup> setups;
  setups.reserve(cases.size());
  for (const auto& c : cases) setups.push_back(build_case(config, c));

  // Sensors depend only on L, so one grid bank per sensor count.
  std::map<int, GridBank> banks;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const int l = cases[i].sensor_count;
    if (banks.count(l)) continue;
    Scenario probe = setups[i].scenario;
    probe.objects.clear();
    probe.noiseless = true;
    banks.emplace(l, build_grid_bank(synthesize(probe, 0), setups[i].grid, setups[i].region));
  }

  const auto runs = static_cast<std::size_t>(config.runs);
  const std::size_t total = cases.size() * runs;
  ExperimentResult result;
  result.rows.resize(total);
  result.wall_times.resize(total);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t ci = i / runs;
      const auto start = std::chrono::steady_clock::now();
      result.rows[i] = run_one(config, cases[ci], setups[ci], banks.at(cases[ci].sensor_count), static_cast<int>(i % runs));
      result.wall_times[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::size_t d = ++done;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(d, total);
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(total, 1))));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  result.aggregates = aggregate(result.rows);
  return result;
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = key_prefix(r.algorithm, r.sensor_count, r.threshold_db, r.t, r.sweep_value);
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) out.push_back({r.algorithm, r.sensor_count, r.threshold_db, r.t, r.sweep_value});
    auto& a = out[it->second];
    ++a.runs;
    if (r.status != "ok") {
      ++a.failures;
      continue;
    }
    a.mean_ospa += r.ospa;
    a.mean_k_hat += r.k_hat;
    a.p_miss += r.miss ? 1.0 : 0.0;
    a.mean_missed_objects += r.missed_objects;
    a.mean_false_alarms += r.false_alarms;
  }
  for (auto& a : out) {
    const int ok = a.runs - a.failures;
    const double n = ok > 0 ? ok : std::numeric_limits<double>::quiet_NaN();
    a.mean_ospa /= n;
    a.mean_k_hat /= n;
    a.p_miss /= n;
    a.mean_missed_objects /= n;
    a.mean_false_alarms /= n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kRowHeader) + '\n';
  for (const auto& r : rows) {
    std::string lambdas;
    for (std::size_t i = 0; i < r.noise_precisions.size(); ++i)
      lambdas += (i ? ";" : "") + format_double(r.noise_precisions[i]);
    out += key_prefix(r.algorithm, r.sensor_count, r.threshold_db, r.t, r.sweep_value) + ',' + std::to_string(r.run) +
           ',' + sanitize(r.status) + ',' + std::to_string(r.k_hat) + ',' + format_double(r.ospa) + ',' +
           (r.miss ? "1" : "0") + ',' + std::to_string(r.missed_objects) + ',' + std::to_string(r.false_alarms) + ',' +
           (r.converged ? "1" : "0") + ',' + std::to_string(r.iterations) + ',' + lambdas + ',' +
           components_field(r.components) + '\n';
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + '\n';
  for (const auto& a : rows)
    out += key_prefix(a.algorithm, a.sensor_count, a.threshold_db, a.t, a.sweep_value) + ',' +
           std::to_string(a.runs) + ',' + std::to_string(a.failures) + ',' + format_double(a.mean_ospa) + ',' +
           format_double(a.mean_k_hat) + ',' + format_double(a.p_miss) + ',' + format_double(a.mean_missed_objects) +
           ',' + format_double(a.mean_false_alarms) + '\n';
  return out;
}

std::string timing_csv(const std::vector<ResultRow>& rows, const std::vector<double>& wall_times) {
  std::string out = "algorithm,sensor_count,threshold_db,t,sweep_value,run,wall_time_s\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += key_prefix(r.algorithm, r.sensor_count, r.threshold_db, r.t, r.sweep_value) + ',' + std::to_string(r.run) +
           ',' + format_double(i < wall_times.size() ? wall_times[i] : 0.0) + '\n';
  }
  return out;
}

std::vector<ResultRow> parse_rows_csv(const std::string& text) {
  const auto table = Table::parse(text);
  table.require({"algorithm", "sensor_count", "threshold_db", "t", "sweep_value", "run", "status", "k_hat", "ospa",
                 "miss", "missed_objects", "false_alarms", "converged", "iterations", "noise_precisions",
                 "components"});
  std::vector<ResultRow> out;
  for (const auto& cells : table.rows) {
    ResultRow r;
    r.algorithm = table.at(cells, "algorithm");
    r.sensor_count = parse_int(table.at(cells, "sensor_count"));
    r.threshold_db = parse_double(table.at(cells, "threshold_db"));
    r.t = parse_int(table.at(cells, "t"));
    r.sweep_value = parse_double(table.at(cells, "sweep_value"));
    r.run = parse_int(table.at(cells, "run"));
    r.status = table.at(cells, "status");
    r.k_hat = parse_int(table.at(cells, "k_hat"));
    r.ospa = parse_double(table.at(cells, "ospa"));
    r.miss = parse_int(table.at(cells, "miss")) != 0;
    r.missed_objects = parse_int(table.at(cells, "missed_objects"));
    r.false_alarms = parse_int(table.at(cells, "false_alarms"));
    r.converged = parse_int(table.at(cells, "converged")) != 0;
    r.iterations = parse_int(table.at(cells, "iterations"));
    const auto& lambdas = table.at(cells, "noise_precisions");
    if (!lambdas.empty())
      for (const auto& s : split(lambdas, ';')) r.noise_precisions.push_back(parse_double(s));
    r.components = parse_components(table.at(cells, "components"));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AggregateRow> parse_aggregate_csv(const std::string& text) {
  const auto table = Table::parse(text);
  table.require({"algorithm", "sensor_count", "threshold_db", "t", "sweep_value", "runs", "failures", "mean_ospa",
                 "mean_k_hat", "p_miss", "mean_missed_objects", "mean_false_alarms"});
  std::vector<AggregateRow> out;
  for (const auto& cells : table.rows) {
    AggregateRow a;
    a.algorithm = table.at(cells, "algorithm");
    a.sensor_count = parse_int(table.at(cells, "sensor_count"));
    a.threshold_db = parse_double(table.at(cells, "threshold_db"));
    a.t = parse_int(table.at(cells, "t"));
    a.sweep_value = parse_double(table.at(cells, "sweep_value"));
    a.runs = parse_int(table.at(cells, "runs"));
    a.failures = parse_int(table.at(cells, "failures"));
    a.mean_ospa = parse_double(table.at(cells, "mean_ospa"));
    a.mean_k_hat = parse_double(table.at(cells, "mean_k_hat"));
    a.p_miss = parse_double(table.at(cells, "p_miss"));
    a.mean_missed_objects = parse_double(table.at(cells, "mean_missed_objects"));
    a.mean_false_alarms = parse_double(table.at(cells, "mean_false_alarms"));
    out.push_back(a);
  }
  return out;
}

void write_results(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << text;
    if (!out) throw Error("write failed for " + (dir / name).string());
  };
  write("rows.csv", rows_csv(result.rows));
  write("aggregate.csv", aggregate_csv(result.aggregates));
  write("timing.csv", timing_csv(result.rows, result.wall_times));
}

std::string plot_data_csv(const std::string& aggregate_text, Figure figure) {
  const auto table = Table::parse(aggregate_text);
  std::string out = "panel,x,series,y\n";
  std::size_t emitted = 0;
  auto emit = [&](const char* panel, const std::string& x, const std::string& series, const std::string& y) {
    out += std::string(panel) + ',' + x + ',' + series + ',' + y + '\n';
    ++emitted;
  };
  if (figure == Figure::kFig3) {
    table.require({"algorithm", "threshold_db", "t", "mean_ospa", "mean_k_hat"});
    for (const char* panel : {"ospa", "k_hat"})
      for (const auto& row : table.rows) {
        std::string label = table.at(row, "algorithm");
        std::transform(label.begin(), label.end(), label.begin(), [](unsigned char ch) { return std::toupper(ch); });
        label += ' ' + table.at(row, "threshold_db") + " dB";
        emit(panel, table.at(row, "t"), label,
             table.at(row, std::string(panel) == "ospa" ? "mean_ospa" : "mean_k_hat"));
      }
  } else {
    const bool fig4 = figure == Figure::kFig4;
    if (fig4) table.require({"algorithm", "sensor_count", "threshold_db", "p_miss", "mean_false_alarms", "mean_ospa"});
    else table.require({"algorithm", "sensor_count", "threshold_db", "mean_ospa"});
    const std::vector<std::pair<const char*, const char*>> panels =
        fig4 ? std::vector<std::pair<const char*, const char*>>{{"p_miss", "p_miss"},
                                                                 {"false_alarms", "mean_false_alarms"},
                                                                 {"ospa", "mean_ospa"}}
             : std::vector<std::pair<const char*, const char*>>{{"ospa", "mean_ospa"}};
    for (const auto& [panel, column] : panels)
      for (const auto& row : table.rows) {
        if (table.at(row, "algorithm") != "sbl") continue;
        emit(panel, table.at(row, "threshold_db"), "L=" + table.at(row, "sensor_count"), table.at(row, column));
      }
  }
  if (emitted == 0) throw SchemaError("aggregate holds no rows for " + to_string(figure));
  return out;
}

std::string observations_csv(const ExperimentConfig& config) {
  validate_config(config);
  std::string out = "sensor_count,t,run,sensor,index,re,im\n";
  std::set<std::pair<int, int>> seen;
  for (const auto& c : enumerate_cases(config)) {
    if (!seen.insert({c.sensor_count, c.t}).second) continue;
    const auto setup = build_case(config, c);
    for (int run = 0; run < config.runs; ++run) {
      const auto obs = synthesize(setup.scenario, static_cast<std::uint64_t>(run));
      for (std::size_t l = 0; l < obs.sensor_count(); ++l) {
        const auto& y = obs.sensors[l].y;
        for (Eigen::Index i = 0; i < y.size(); ++i)
          out += std::to_string(c.sensor_count) + ',' + std::to_string(c.t) + ',' + std::to_string(run) + ',' +
                 std::to_string(l) + ',' + std::to_string(i) + ',' + format_double(y[i].real()) + ',' +
                 format_double(y[i].imag()) + '\n';
      }
    }
  }
  return out;
}

}  // namespace mdsbl
