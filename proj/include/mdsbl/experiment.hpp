#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdsbl/scenario.hpp"

namespace mdsbl {

enum class Algorithm { kSbl, kNomp };
enum class SweepVariable { kTimeStep, kThreshold, kSensorCount };
enum class GridKind { kXY, kPolar };
enum class Figure { kFig3, kFig4, kFig5 };

std::string to_string(Algorithm a);
std::string to_string(SweepVariable s);
std::string to_string(GridKind g);
std::string to_string(Figure f);
Algorithm parse_algorithm(const std::string& s);
Figure parse_figure(const std::string& s);

struct GridSpec {
  GridKind kind = GridKind::kXY;
  double step = 2.0;             // xy lattice spacing [m]
  double range_step = 3.75;      // polar [m]
  double angle_step_deg = 8.0;   // polar
  double max_angle_deg = 88.0;   // polar, relative to broadside of the first sensor
};

struct SensorSpec {
  Vec2 position{0.0, 0.0};
  std::optional<double> broadside_deg;
  std::optional<Vec2> aim;  // used when broadside_deg is absent
  bool path_loss = false;
};

struct ScenarioSpec {
  /// "crossing_tracks", "single_object", "four_object_pathloss", or "inline".
  std::string builtin = "crossing_tracks";
  double carrier_wavelength = 0.3;
  std::optional<double> snr_db;  // overrides the built-in object SNR
  CrossingTracksSpec crossing;
  std::vector<int> time_steps{-30, -20, -10, -5, -2, 0, 2, 5, 10, 20, 30};
  std::vector<SensorSpec> sensors;  // inline only
  std::vector<ObjectSpec> objects;  // inline only
  std::optional<Rect> region;       // defaults per built-in scene
  std::optional<GridSpec> grid;     // defaults per built-in scene

  bool is_crossing() const { return builtin == "crossing_tracks"; }
  int available_sensors() const;
};

struct SolverSpec {
  int max_outer_iters = 50;
  int k_max = 20;
  int nomp_refine_rounds = 3;
  int nomp_max_components = 20;
  double optimizer_tol = 1e-6;
  int optimizer_max_evals = 500;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::string name = "experiment";
  ScenarioSpec scenario;
  std::vector<Algorithm> algorithms{Algorithm::kSbl};
  std::vector<double> thresholds_db{10.0};   // chi for SBL, tau for NOMP
  std::vector<double> nomp_thresholds_db;    // if nonempty, replaces thresholds_db for NOMP
  std::vector<int> sensor_counts{1};
  SweepVariable sweep = SweepVariable::kThreshold;
  int runs = 100;
  std::uint64_t seed = 1;
  std::string output_path = "results";
  SolverSpec solver;

  const std::vector<double>& thresholds_for(Algorithm a) const;
};

inline constexpr int kSchemaVersion = 1;

/// Parses and validates. Unknown keys and every constraint violation are
/// collected and reported together as ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
/// Canonical form with every default spelled out.
nlohmann::json normalize_config(const nlohmann::json& j);
/// Parse errors carry line and column.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Throws ConfigError listing all violations.
void validate_config(const ExperimentConfig& config);

/// One (algorithm, L, threshold, t) combination of an experiment.
struct ExperimentCase {
  Algorithm algorithm = Algorithm::kSbl;
  int sensor_count = 1;
  double threshold_db = 10.0;
  int t = 0;
  double sweep_value = 0.0;
};

std::vector<ExperimentCase> enumerate_cases(const ExperimentConfig& config);

/// Scene, region and grid for one case.
struct CaseSetup {
  Scenario scenario;
  Rect region;
  std::vector<Vec2> grid;
};

CaseSetup build_case(const ExperimentConfig& config, const ExperimentCase& c);

struct EstimatedComponent {
  Vec2 location{0.0, 0.0};
  double gamma = 0.0;                 // NaN for NOMP
  std::vector<Complex> amplitudes;    // one per sensor
};

struct ResultRow {
  std::string algorithm;
  int sensor_count = 1;
  double threshold_db = 0.0;
  int t = 0;
  double sweep_value = 0.0;
  int run = 0;
  std::string status = "ok";
  int k_hat = 0;
  double ospa = 0.0;
  bool miss = false;
  int missed_objects = 0;
  int false_alarms = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<EstimatedComponent> components;
  std::vector<double> noise_precisions;
};

struct AggregateRow {
  std::string algorithm;
  int sensor_count = 1;
  double threshold_db = 0.0;
  int t = 0;
  double sweep_value = 0.0;
  int runs = 0;
  int failures = 0;
  double mean_ospa = 0.0;
  double mean_k_hat = 0.0;
  double p_miss = 0.0;
  double mean_missed_objects = 0.0;
  double mean_false_alarms = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<double> wall_times;  // seconds, parallel to rows
  std::vector<AggregateRow> aggregates;
};

/// Worker count from an explicit request, else MDSBL_WORKERS, else the
/// hardware concurrency.
int resolve_workers(std::optional<int> requested);

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every case and run. Output does not depend on `workers`.
ExperimentResult run_experiment(const ExperimentConfig& config, int workers, const ProgressCallback& progress = {});

/// Ordered reduction over rows with status "ok".
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

std::string rows_csv(const std::vector<ResultRow>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string timing_csv(const std::vector<ResultRow>& rows, const std::vector<double>& wall_times);
std::vector<ResultRow> parse_rows_csv(const std::string& text);
std::vector<AggregateRow> parse_aggregate_csv(const std::string& text);

/// Writes rows.csv, aggregate.csv and timing.csv into `dir`.
void write_results(const ExperimentResult& result, const std::filesystem::path& dir);

/// Tall table "panel,x,series,y". Throws SchemaError if required columns are
/// missing or no row belongs to the figure.
std::string plot_data_csv(const std::string& aggregate_text, Figure figure);

/// Raw observations of every case and run: case,run,sensor,index,re,im.
std::string observations_csv(const ExperimentConfig& config);

std::string format_double(double v);

}  // namespace mdsbl
